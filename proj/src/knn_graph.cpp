#include "fect/knn_graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "fect/errors.hpp"

namespace fect {

EdgeGraph build_knn_graph(const std::vector<std::pair<double, double>>& points,
                          const std::vector<std::vector<double>>& features,
                          std::size_t k) {
    if (k < 1) throw DataError("build_knn_graph: k must be >= 1");
    if (points.size() != features.size())
        throw ShapeError("build_knn_graph: points and features misaligned");

    EdgeGraph g;
    g.k = k;
    const std::size_t n = points.size();
    g.nodes.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        g.nodes.push_back({points[i].first, points[i].second, features[i]});
    if (n <= 1) return g;

    const std::size_t degree = std::min(k, n - 1);
    std::vector<std::pair<double, std::size_t>> cand;
    for (std::size_t i = 0; i < n; ++i) {
        cand.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double dr = points[i].first - points[j].first;
            const double dc = points[i].second - points[j].second;
            cand.emplace_back(dr * dr + dc * dc, j);
        }
        std::sort(cand.begin(), cand.end());
        for (std::size_t t = 0; t < degree; ++t) g.edges.emplace_back(i, cand[t].second);
    }
    return g;
}

std::vector<double> graph_summary_stats(const EdgeGraph& g) {
    std::vector<double> stats(kGraphStatsDim, 0.0);
    const std::size_t n = g.nodes.size();
    if (n == 0) return stats;

    stats[0] = static_cast<double>(n);
    stats[1] = static_cast<double>(g.edges.size());
    if (g.edges.empty()) return stats;

    std::vector<double> indeg(n, 0.0);
    double len_sum = 0.0, len_sq = 0.0;
    double cos_sum = 0.0;
    for (const auto& [i, j] : g.edges) {
        indeg[j] += 1.0;
        const double dr = g.nodes[i].row - g.nodes[j].row;
        const double dc = g.nodes[i].col - g.nodes[j].col;
        const double len = std::sqrt(dr * dr + dc * dc);
        len_sum += len;
        len_sq += len * len;

        const auto& fi = g.nodes[i].feature;
        const auto& fj = g.nodes[j].feature;
        double dot = 0.0, ni = 0.0, nj = 0.0;
        for (std::size_t t = 0; t < fi.size(); ++t) {
            dot += fi[t] * fj[t];
            ni += fi[t] * fi[t];
            nj += fj[t] * fj[t];
        }
        if (ni > 0.0 && nj > 0.0) cos_sum += dot / std::sqrt(ni * nj);
    }
    const double ecount = static_cast<double>(g.edges.size());
    double deg_mean = 0.0;
    for (double d : indeg) deg_mean += d;
    deg_mean /= static_cast<double>(n);
    double deg_var = 0.0;
    for (double d : indeg) deg_var += (d - deg_mean) * (d - deg_mean);
    deg_var /= static_cast<double>(n);

    const double len_mean = len_sum / ecount;
    stats[2] = deg_mean;
    stats[3] = deg_var;
    stats[4] = len_mean;
    stats[5] = len_sq / ecount - len_mean * len_mean;

    // Clustering on the undirected projection.
    std::set<std::pair<std::size_t, std::size_t>> und;
    for (const auto& [i, j] : g.edges) und.insert({std::min(i, j), std::max(i, j)});
    std::vector<std::vector<std::size_t>> neigh(n);
    for (const auto& [i, j] : und) {
        neigh[i].push_back(j);
        neigh[j].push_back(i);
    }
    double clust_sum = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
        const auto& nv = neigh[v];
        if (nv.size() < 2) continue;
        std::size_t links = 0;
        for (std::size_t a = 0; a < nv.size(); ++a)
            for (std::size_t b = a + 1; b < nv.size(); ++b)
                if (und.count({std::min(nv[a], nv[b]), std::max(nv[a], nv[b])})) ++links;
        clust_sum += 2.0 * static_cast<double>(links) /
                     (static_cast<double>(nv.size()) * static_cast<double>(nv.size() - 1));
    }
    stats[6] = clust_sum / static_cast<double>(n);
    stats[7] = cos_sum / ecount;
    return stats;
}

FeatureVector assemble_edge_feature(const std::vector<double>& pooled,
                                    const std::vector<double>& stats) {
    FeatureVector fv;
    fv.modality = Modality::Edge;
    fv.values = pooled;
    fv.values.insert(fv.values.end(), stats.begin(), stats.end());
    for (double v : fv.values)
        if (!std::isfinite(v)) throw NumericError("assemble_edge_feature: non-finite input");
    return fv;
}

void dump_graph_json(const std::string& path, const EdgeGraph& g) {
    nlohmann::json j;
    j["k"] = g.k;
    j["nodes"] = nlohmann::json::array();
    for (const auto& node : g.nodes)
        j["nodes"].push_back({{"pos", {node.row, node.col}},
                              {"feature_dim", node.feature.size()}});
    j["edges"] = nlohmann::json::array();
    for (const auto& [a, b] : g.edges) j["edges"].push_back({a, b});
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("graph dump: cannot write " + path);
    out << j.dump(2) << "\n";
}

} // namespace fect
