#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fect/aggregator.hpp"
#include "fect/descriptors.hpp"
#include "fect/knn_graph.hpp"
#include "fect/manifest.hpp"
#include "fect/svm.hpp"

namespace fect {

struct ExtractionConfig {
    std::uint64_t seed = 1;
    std::size_t max_cells = 256; // uniform seeded subsample above this
    double contour_spacing = 16.0;
    std::size_t min_points = 8;
    std::size_t max_points = 64;
    std::size_t knn_k = 5;
};

// Per-cell descriptor rows for one image (possibly subsampled, seeded by
// the image id so the choice is order independent).
Matrix cell_token_bag(const ImageSample& sample, const ExtractionConfig& config);

struct EdgeTokenBag {
    Matrix tokens;              // one embedded 64x64 patch per contour sample
    std::vector<double> stats;  // KNN graph summary over all sample points
};

// The edge workflow: components -> outer contours -> uniform sampling ->
// centered patches -> embedding, plus the KNN graph statistics.
EdgeTokenBag edge_token_bag(const ImageSample& sample, const PatchEmbedder& embedder,
                            const ExtractionConfig& config);

struct BagSet {
    std::vector<TokenBag> bags;
    std::size_t skipped = 0; // images that produced no tokens
};

BagSet build_bags(const Manifest& manifest, Modality modality,
                  const ExtractionConfig& config);

struct ExtractionResult {
    FeatureCache cache;
    std::size_t degenerate = 0; // zero-feature rows (empty mask / no tokens)
};

// One feature row per manifest entry, in manifest order. cell and edge need
// a trained aggregator (configured for the right path); tissue needs none.
ExtractionResult extract_features(const Manifest& manifest, Modality modality,
                                  const ExtractionConfig& config,
                                  const AggregatorModel* aggregator);

std::vector<int> manifest_labels(const Manifest& manifest);

// Hard error if a sample id appears in both manifests.
void check_disjoint(const Manifest& a, const Manifest& b, const std::string& what);

struct AblationRow {
    std::string subset;
    double accuracy = 0.0;
    double balanced_accuracy = 0.0;
    double macro_f1 = 0.0;
    double weighted_f1 = 0.0;
};

// The seven modality subsets in fixed order (cell, tissue, edge, the three
// pairs, fusion) with unit weights for included modalities.
std::vector<AblationRow> run_ablation(const Matrix& train_cell, const Matrix& train_tissue,
                                      const Matrix& train_edge,
                                      const std::vector<int>& train_labels,
                                      const Matrix& eval_cell, const Matrix& eval_tissue,
                                      const Matrix& eval_edge,
                                      const std::vector<int>& eval_labels,
                                      const SvmTrainOptions& svm_opts);

void save_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows);

struct ClassifierRow {
    std::string name;
    double accuracy = 0.0;
    double balanced_accuracy = 0.0;
    double macro_f1 = 0.0;
    double weighted_f1 = 0.0;
};

// Fixed-weight fused features, SVM vs the logistic-regression baseline.
std::vector<ClassifierRow> run_classifier_comparison(
    const Matrix& train_cell, const Matrix& train_tissue, const Matrix& train_edge,
    const std::vector<int>& train_labels, const Matrix& eval_cell,
    const Matrix& eval_tissue, const Matrix& eval_edge,
    const std::vector<int>& eval_labels, const SvmTrainOptions& svm_opts);

void save_classifier_csv(const std::string& path, const std::vector<ClassifierRow>& rows);

} // namespace fect
