#include "fect/fusion.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "fect/errors.hpp"
#include "fect/metrics.hpp"

namespace fect {

namespace {

ModalityStats fit_stats(const Matrix& m) {
    if (m.rows < 2) throw DataError("fit_normalizer: need at least 2 training samples");
    ModalityStats st;
    st.mean.assign(m.cols, 0.0);
    st.stddev.assign(m.cols, 0.0);
    for (std::size_t j = 0; j < m.cols; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < m.rows; ++i) mean += m(i, j);
        mean /= static_cast<double>(m.rows);
        double var = 0.0;
        for (std::size_t i = 0; i < m.rows; ++i) {
            const double d = m(i, j) - mean;
            var += d * d;
        }
        var /= static_cast<double>(m.rows);
        st.mean[j] = mean;
        st.stddev[j] = std::max(std::sqrt(var), 1e-8);
    }
    return st;
}

void append_block(std::vector<double>& out, const std::vector<double>& x,
                  const ModalityStats& st, double weight, const char* what) {
    if (x.size() != st.mean.size())
        throw ShapeError(std::string("fuse: ") + what + " dimension mismatch");
    for (std::size_t j = 0; j < x.size(); ++j)
        out.push_back(weight * (x[j] - st.mean[j]) / st.stddev[j]);
}

nlohmann::json stats_to_json(const ModalityStats& st) {
    return {{"mean", st.mean}, {"stddev", st.stddev}};
}

ModalityStats stats_from_json(const nlohmann::json& j) {
    ModalityStats st;
    st.mean = j.at("mean").get<std::vector<double>>();
    st.stddev = j.at("stddev").get<std::vector<double>>();
    return st;
}

} // namespace

Normalizer fit_normalizer(const Matrix& cell, const Matrix& tissue, const Matrix& edge) {
    if (cell.rows != tissue.rows || cell.rows != edge.rows)
        throw ShapeError("fit_normalizer: modality row counts differ");
    Normalizer n;
    n.cell = fit_stats(cell);
    n.tissue = fit_stats(tissue);
    n.edge = fit_stats(edge);
    return n;
}

std::vector<double> fuse(const std::vector<double>& cell,
                         const std::vector<double>& tissue,
                         const std::vector<double>& edge, const FusionConfig& config) {
    std::vector<double> out;
    out.reserve(cell.size() + tissue.size() + edge.size());
    append_block(out, cell, config.normalizer.cell, config.alpha, "cell");
    append_block(out, tissue, config.normalizer.tissue, config.beta, "tissue");
    append_block(out, edge, config.normalizer.edge, config.gamma, "edge");
    return out;
}

Matrix fuse_rows(const Matrix& cell, const Matrix& tissue, const Matrix& edge,
                 const FusionConfig& config) {
    if (cell.rows != tissue.rows || cell.rows != edge.rows)
        throw ShapeError("fuse_rows: modality row counts differ");
    Matrix out(cell.rows, cell.cols + tissue.cols + edge.cols);
    for (std::size_t i = 0; i < cell.rows; ++i) {
        const std::vector<double> c(cell.row_ptr(i), cell.row_ptr(i) + cell.cols);
        const std::vector<double> t(tissue.row_ptr(i), tissue.row_ptr(i) + tissue.cols);
        const std::vector<double> e(edge.row_ptr(i), edge.row_ptr(i) + edge.cols);
        const std::vector<double> fused = fuse(c, t, e, config);
        for (std::size_t j = 0; j < fused.size(); ++j) out(i, j) = fused[j];
    }
    return out;
}

void save_fusion_config(const std::string& path, const FusionConfig& config) {
    nlohmann::json j;
    j["alpha"] = config.alpha;
    j["beta"] = config.beta;
    j["gamma"] = config.gamma;
    j["normalizer"] = {{"cell", stats_to_json(config.normalizer.cell)},
                       {"tissue", stats_to_json(config.normalizer.tissue)},
                       {"edge", stats_to_json(config.normalizer.edge)}};
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("fusion config: cannot write " + path);
    out << j.dump(2) << "\n";
}

FusionConfig load_fusion_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("fusion config: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
        FusionConfig cfg;
        cfg.alpha = j.at("alpha").get<double>();
        cfg.beta = j.at("beta").get<double>();
        cfg.gamma = j.at("gamma").get<double>();
        cfg.normalizer.cell = stats_from_json(j.at("normalizer").at("cell"));
        cfg.normalizer.tissue = stats_from_json(j.at("normalizer").at("tissue"));
        cfg.normalizer.edge = stats_from_json(j.at("normalizer").at("edge"));
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("fusion config: malformed " + path + ": " + e.what());
    }
}

GridSpec default_grid() {
    GridSpec g;
    for (int i = 0; i <= 10; ++i) {
        g.alphas.push_back(static_cast<double>(i) / 10.0);
        g.betas.push_back(static_cast<double>(i) / 10.0);
    }
    g.gammas = {0.0, 0.25, 0.5, 0.75, 1.0};
    return g;
}

GridSearchResult grid_search_weights(const Matrix& train_cell, const Matrix& train_tissue,
                                     const Matrix& train_edge,
                                     const std::vector<int>& train_labels,
                                     const Matrix& val_cell, const Matrix& val_tissue,
                                     const Matrix& val_edge,
                                     const std::vector<int>& val_labels,
                                     const GridSpec& grid,
                                     const SvmTrainOptions& svm_opts) {
    if (grid.alphas.empty() || grid.betas.empty() || grid.gammas.empty())
        throw DataError("grid_search_weights: empty grid");
    if (train_labels.empty() || val_labels.empty())
        throw DataError("grid_search_weights: empty split");

    Normalizer normalizer = fit_normalizer(train_cell, train_tissue, train_edge);
    int classes = 0;
    for (int v : train_labels) classes = std::max(classes, v + 1);

    std::vector<GridPoint> table;
    for (double gamma : grid.gammas)
        for (double alpha : grid.alphas)
            for (double beta : grid.betas) table.push_back({alpha, beta, gamma, 0.0, 0.0});

    const std::ptrdiff_t npoints = static_cast<std::ptrdiff_t>(table.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t p = 0; p < npoints; ++p) {
        GridPoint& pt = table[static_cast<std::size_t>(p)];
        FusionConfig cfg;
        cfg.alpha = pt.alpha;
        cfg.beta = pt.beta;
        cfg.gamma = pt.gamma;
        cfg.normalizer = normalizer;
        const Matrix fused_train = fuse_rows(train_cell, train_tissue, train_edge, cfg);
        const Matrix fused_val = fuse_rows(val_cell, val_tissue, val_edge, cfg);
        const SvmEnsemble ensemble = train_multiclass(fused_train, train_labels, svm_opts);
        const std::vector<int> pred = predict_all(ensemble, fused_val);
        const MetricsReport rep = compute_metrics(
            confusion_matrix(val_labels, pred, static_cast<std::size_t>(classes)));
        pt.accuracy = rep.accuracy;
        pt.weighted_f1 = rep.weighted_f1;
    }

    std::size_t best = 0;
    for (std::size_t i = 1; i < table.size(); ++i) {
        const GridPoint& a = table[i];
        const GridPoint& b = table[best];
        const bool better =
            a.weighted_f1 > b.weighted_f1 ||
            (a.weighted_f1 == b.weighted_f1 && a.accuracy > b.accuracy) ||
            (a.weighted_f1 == b.weighted_f1 && a.accuracy == b.accuracy &&
             std::tuple(a.alpha, a.beta, a.gamma) < std::tuple(b.alpha, b.beta, b.gamma));
        if (better) best = i;
    }

    GridSearchResult result;
    result.best_point = table[best];
    result.best.alpha = table[best].alpha;
    result.best.beta = table[best].beta;
    result.best.gamma = table[best].gamma;
    result.best.normalizer = normalizer;
    result.table = std::move(table);
    return result;
}

void save_heatmap_csv(const std::string& path, const std::vector<GridPoint>& table) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("heatmap: cannot write " + path);
    out << "alpha,beta,gamma,acc,weighted_f1\n";
    char buf[128];
    for (const auto& pt : table) {
        std::snprintf(buf, sizeof(buf), "%.2f,%.2f,%.2f,%.6f,%.6f\n", pt.alpha, pt.beta,
                      pt.gamma, pt.accuracy, pt.weighted_f1);
        out << buf;
    }
}

} // namespace fect
