#include "fect/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include "fect/errors.hpp"
#include "fect/fusion.hpp"
#include "fect/geometry.hpp"
#include "fect/metrics.hpp"
#include "fect/rng.hpp"

namespace fect {

namespace {

std::uint64_t id_hash(const std::string& id) {
    std::uint64_t h = 1469598103934665603ULL; // FNV-1a
    for (unsigned char c : id) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

} // namespace

Matrix cell_token_bag(const ImageSample& sample, const ExtractionConfig& config) {
    std::vector<std::size_t> chosen(sample.centroids.size());
    std::iota(chosen.begin(), chosen.end(), 0);
    if (chosen.size() > config.max_cells) {
        SeededRng rng(mix_seed(config.seed, id_hash(sample.id)));
        rng.shuffle(chosen);
        chosen.resize(config.max_cells);
        std::sort(chosen.begin(), chosen.end());
    }
    Matrix tokens(chosen.size(), kCellDim);
    for (std::size_t i = 0; i < chosen.size(); ++i) {
        const FeatureVector fv =
            extract_cell_descriptor(sample.image, sample.centroids[chosen[i]]);
        for (std::size_t j = 0; j < kCellDim; ++j) tokens(i, j) = fv.values[j];
    }
    return tokens;
}

EdgeTokenBag edge_token_bag(const ImageSample& sample, const PatchEmbedder& embedder,
                            const ExtractionConfig& config) {
    EdgeTokenBag out;
    const LabelMap lm = connected_components(sample.mask, 8);

    std::vector<std::pair<double, double>> positions;
    std::vector<std::vector<double>> features;
    for (int label = 1; label <= lm.count; ++label) {
        const Contour contour = trace_contour(component_mask(lm, label));
        const std::vector<PixelCoord> points = sample_contour_uniform(
            contour, config.contour_spacing, config.min_points, config.max_points);
        for (const PixelCoord& p : points) {
            const GrayImage patch = crop_patch(sample.image, p, kEdgePatch);
            FeatureVector fv = embedder.embed(patch);
            positions.emplace_back(static_cast<double>(p.row),
                                   static_cast<double>(p.col));
            features.push_back(std::move(fv.values));
        }
    }

    out.tokens = Matrix(positions.size(), kEdgeDim);
    for (std::size_t i = 0; i < positions.size(); ++i)
        for (std::size_t j = 0; j < kEdgeDim; ++j) out.tokens(i, j) = features[i][j];

    if (positions.empty()) {
        out.stats.assign(kGraphStatsDim, 0.0);
    } else {
        const EdgeGraph graph = build_knn_graph(positions, features, config.knn_k);
        out.stats = graph_summary_stats(graph);
    }
    return out;
}

BagSet build_bags(const Manifest& manifest, Modality modality,
                  const ExtractionConfig& config) {
    if (modality == Modality::Tissue)
        throw DataError("build_bags: tissue features are not aggregated from bags");

    BagSet out;
    const std::size_t n = manifest.entries.size();
    std::vector<TokenBag> slots(n);
    std::vector<std::uint8_t> keep(n, 0);
    std::vector<std::string> failures(n);
    const PatchEmbedder embedder(config.seed);

    const std::ptrdiff_t pn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < pn; ++i) {
        const std::size_t idx = static_cast<std::size_t>(i);
        try {
            const ImageSample sample = load_sample(manifest.entries[idx]);
            Matrix tokens = modality == Modality::Cell
                                ? cell_token_bag(sample, config)
                                : edge_token_bag(sample, embedder, config).tokens;
            if (tokens.rows > 0) {
                slots[idx].tokens = std::move(tokens);
                slots[idx].label = sample.label;
                keep[idx] = 1;
            }
        } catch (const std::exception& e) {
            failures[idx] = e.what();
        }
    }
    for (const auto& f : failures)
        if (!f.empty()) throw DataError("build_bags: " + f);
    for (std::size_t i = 0; i < n; ++i) {
        if (keep[i]) out.bags.push_back(std::move(slots[i]));
        else ++out.skipped;
    }
    return out;
}

ExtractionResult extract_features(const Manifest& manifest, Modality modality,
                                  const ExtractionConfig& config,
                                  const AggregatorModel* aggregator) {
    if (modality != Modality::Tissue && aggregator == nullptr)
        throw DataError(std::string("extract: ") + modality_name(modality) +
                        " features need a trained aggregator; run train-aggregator first");

    const std::size_t n = manifest.entries.size();
    std::size_t dim = 0;
    switch (modality) {
        case Modality::Cell: dim = aggregator->config.pooled_dim; break;
        case Modality::Tissue: dim = kTissueDim; break;
        case Modality::Edge: dim = aggregator->config.pooled_dim + kGraphStatsDim; break;
    }

    ExtractionResult result;
    result.cache.modality = modality;
    result.cache.dim = dim;
    result.cache.rows.assign(n, std::vector<double>(dim, 0.0));

    std::vector<std::uint8_t> degenerate(n, 0);
    std::vector<std::string> failures(n);
    const PatchEmbedder embedder(config.seed);

    const std::ptrdiff_t pn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < pn; ++i) {
        const std::size_t idx = static_cast<std::size_t>(i);
        try {
            const ImageSample sample = load_sample(manifest.entries[idx]);
            switch (modality) {
                case Modality::Cell: {
                    const Matrix tokens = cell_token_bag(sample, config);
                    if (tokens.rows == 0) {
                        degenerate[idx] = 1;
                        break;
                    }
                    result.cache.rows[idx] =
                        aggregate(tokens, *aggregator, Modality::Cell).values;
                    break;
                }
                case Modality::Tissue: {
                    const TissueFeature tf =
                        extract_tissue_descriptor(sample.image, sample.mask);
                    if (tf.degenerate) degenerate[idx] = 1;
                    result.cache.rows[idx] = tf.feature.values;
                    break;
                }
                case Modality::Edge: {
                    const EdgeTokenBag bag = edge_token_bag(sample, embedder, config);
                    if (bag.tokens.rows == 0) {
                        degenerate[idx] = 1;
                        break;
                    }
                    const FeatureVector pooled =
                        aggregate(bag.tokens, *aggregator, Modality::Edge);
                    result.cache.rows[idx] =
                        assemble_edge_feature(pooled.values, bag.stats).values;
                    break;
                }
            }
        } catch (const std::exception& e) {
            failures[idx] = e.what();
        }
    }
    for (const auto& f : failures)
        if (!f.empty()) throw DataError("extract: " + f);
    for (auto d : degenerate) result.degenerate += d;
    return result;
}

std::vector<int> manifest_labels(const Manifest& manifest) {
    std::vector<int> labels;
    labels.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) labels.push_back(e.label);
    return labels;
}

void check_disjoint(const Manifest& a, const Manifest& b, const std::string& what) {
    std::set<std::string> ids;
    for (const auto& e : a.entries) ids.insert(e.id);
    for (const auto& e : b.entries)
        if (ids.count(e.id))
            throw DataError("split leakage: sample \"" + e.id + "\" appears in both " +
                            what);
}

namespace {

AblationRow score_weights(const std::string& name, double alpha, double beta,
                          double gamma, const Normalizer& normalizer,
                          const Matrix& train_cell, const Matrix& train_tissue,
                          const Matrix& train_edge, const std::vector<int>& train_labels,
                          const Matrix& eval_cell, const Matrix& eval_tissue,
                          const Matrix& eval_edge, const std::vector<int>& eval_labels,
                          const SvmTrainOptions& svm_opts, int classes) {
    FusionConfig cfg;
    cfg.alpha = alpha;
    cfg.beta = beta;
    cfg.gamma = gamma;
    cfg.normalizer = normalizer;
    const Matrix fused_train = fuse_rows(train_cell, train_tissue, train_edge, cfg);
    const Matrix fused_eval = fuse_rows(eval_cell, eval_tissue, eval_edge, cfg);
    const SvmEnsemble ensemble = train_multiclass(fused_train, train_labels, svm_opts);
    const std::vector<int> pred = predict_all(ensemble, fused_eval);
    const MetricsReport rep = compute_metrics(
        confusion_matrix(eval_labels, pred, static_cast<std::size_t>(classes)));
    return {name, rep.accuracy, rep.balanced_accuracy, rep.macro_f1, rep.weighted_f1};
}

} // namespace

std::vector<AblationRow> run_ablation(const Matrix& train_cell, const Matrix& train_tissue,
                                      const Matrix& train_edge,
                                      const std::vector<int>& train_labels,
                                      const Matrix& eval_cell, const Matrix& eval_tissue,
                                      const Matrix& eval_edge,
                                      const std::vector<int>& eval_labels,
                                      const SvmTrainOptions& svm_opts) {
    const Normalizer normalizer = fit_normalizer(train_cell, train_tissue, train_edge);
    int classes = 0;
    for (int v : train_labels) classes = std::max(classes, v + 1);

    struct Subset {
        const char* name;
        double a, b, g;
    };
    static constexpr Subset kSubsets[7] = {
        {"cell", 1, 0, 0},        {"tissue", 0, 1, 0},      {"edge", 0, 0, 1},
        {"cell+tissue", 1, 1, 0}, {"cell+edge", 1, 0, 1},   {"tissue+edge", 0, 1, 1},
        {"fusion", 1, 1, 1},
    };

    std::vector<AblationRow> rows(7);
#pragma omp parallel for schedule(dynamic)
    for (int s = 0; s < 7; ++s) {
        const Subset& sub = kSubsets[s];
        rows[static_cast<std::size_t>(s)] = score_weights(
            sub.name, sub.a, sub.b, sub.g, normalizer, train_cell, train_tissue,
            train_edge, train_labels, eval_cell, eval_tissue, eval_edge, eval_labels,
            svm_opts, classes);
    }
    return rows;
}

void save_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("ablation: cannot write " + path);
    out << "subset,acc,balanced_acc,macro_f1,weighted_f1\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f\n", r.subset.c_str(),
                      r.accuracy, r.balanced_accuracy, r.macro_f1, r.weighted_f1);
        out << buf;
    }
}

std::vector<ClassifierRow> run_classifier_comparison(
    const Matrix& train_cell, const Matrix& train_tissue, const Matrix& train_edge,
    const std::vector<int>& train_labels, const Matrix& eval_cell,
    const Matrix& eval_tissue, const Matrix& eval_edge,
    const std::vector<int>& eval_labels, const SvmTrainOptions& svm_opts) {
    FusionConfig cfg;
    cfg.normalizer = fit_normalizer(train_cell, train_tissue, train_edge);
    int classes = 0;
    for (int v : train_labels) classes = std::max(classes, v + 1);

    const Matrix fused_train = fuse_rows(train_cell, train_tissue, train_edge, cfg);
    const Matrix fused_eval = fuse_rows(eval_cell, eval_tissue, eval_edge, cfg);

    auto metrics_of = [&](const std::vector<int>& pred) {
        return compute_metrics(
            confusion_matrix(eval_labels, pred, static_cast<std::size_t>(classes)));
    };

    std::vector<ClassifierRow> rows;
    {
        const LogisticModel lr = train_logistic(fused_train, train_labels, classes);
        const MetricsReport rep = metrics_of(predict_logistic(lr, fused_eval));
        rows.push_back({"logistic_regression", rep.accuracy, rep.balanced_accuracy,
                        rep.macro_f1, rep.weighted_f1});
    }
    {
        const SvmEnsemble svm = train_multiclass(fused_train, train_labels, svm_opts);
        const MetricsReport rep = metrics_of(predict_all(svm, fused_eval));
        rows.push_back({"svm", rep.accuracy, rep.balanced_accuracy, rep.macro_f1,
                        rep.weighted_f1});
    }
    return rows;
}

void save_classifier_csv(const std::string& path, const std::vector<ClassifierRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("classifier table: cannot write " + path);
    out << "classifier,acc,balanced_acc,macro_f1,weighted_f1\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f\n", r.name.c_str(),
                      r.accuracy, r.balanced_accuracy, r.macro_f1, r.weighted_f1);
        out << buf;
    }
}

} // namespace fect
