#pragma once

#include <string>
#include <vector>

#include "fect/matrix.hpp"
#include "fect/svm.hpp"

namespace fect {

struct ModalityStats {
    std::vector<double> mean;
    std::vector<double> stddev; // floored at 1e-8
};

struct Normalizer {
    ModalityStats cell, tissue, edge;
};

// Per-dimension z-score statistics fitted on the training rows of each
// modality (>= 2 samples each).
Normalizer fit_normalizer(const Matrix& cell, const Matrix& tissue, const Matrix& edge);

struct FusionConfig {
    double alpha = 1.0; // cell weight
    double beta = 1.0;  // tissue weight
    double gamma = 1.0; // edge weight
    Normalizer normalizer;
};

// X_f = [alpha * norm(X_C), beta * norm(X_T), gamma * norm(X_E)].
std::vector<double> fuse(const std::vector<double>& cell,
                         const std::vector<double>& tissue,
                         const std::vector<double>& edge, const FusionConfig& config);

Matrix fuse_rows(const Matrix& cell, const Matrix& tissue, const Matrix& edge,
                 const FusionConfig& config);

void save_fusion_config(const std::string& path, const FusionConfig& config);
FusionConfig load_fusion_config(const std::string& path);

struct GridSpec {
    std::vector<double> alphas; // default 0.0 .. 1.0 step 0.1
    std::vector<double> betas;
    std::vector<double> gammas; // default {0, 0.25, 0.5, 0.75, 1}
};

GridSpec default_grid();

struct GridPoint {
    double alpha = 0.0, beta = 0.0, gamma = 0.0;
    double accuracy = 0.0;
    double weighted_f1 = 0.0;
};

struct GridSearchResult {
    FusionConfig best;
    GridPoint best_point;
    std::vector<GridPoint> table; // grid order: gamma outer, alpha, beta inner
};

// Trains one one-vs-one SVM ensemble per grid point on the training rows and
// scores it on the validation rows. Points are independent and evaluated in
// parallel; the table is assembled in grid order. Argmax by weighted F1,
// ties by accuracy, then lexicographically smallest (alpha, beta, gamma).
GridSearchResult grid_search_weights(const Matrix& train_cell, const Matrix& train_tissue,
                                     const Matrix& train_edge,
                                     const std::vector<int>& train_labels,
                                     const Matrix& val_cell, const Matrix& val_tissue,
                                     const Matrix& val_edge,
                                     const std::vector<int>& val_labels,
                                     const GridSpec& grid, const SvmTrainOptions& svm_opts);

void save_heatmap_csv(const std::string& path, const std::vector<GridPoint>& table);

} // namespace fect
