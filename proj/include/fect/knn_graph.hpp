#pragma once

#include <string>
#include <vector>

#include "fect/descriptors.hpp"
#include "fect/matrix.hpp"

namespace fect {

// Directed KNN graph over contour sample points carrying patch features.
struct EdgeGraph {
    struct Node {
        double row = 0.0;
        double col = 0.0;
        std::vector<double> feature;
    };
    std::vector<Node> nodes;
    std::vector<std::pair<std::size_t, std::size_t>> edges; // i -> j
    std::size_t k = 0;
};

// Exact nearest neighbors by Euclidean distance, ties broken by lower index.
// Every node gets out-degree min(k, n-1).
EdgeGraph build_knn_graph(const std::vector<std::pair<double, double>>& points,
                          const std::vector<std::vector<double>>& features,
                          std::size_t k);

inline constexpr std::size_t kGraphStatsDim = 8;

// [node count, edge count, mean in-degree, in-degree variance,
//  mean edge length, edge length variance, mean undirected clustering
//  coefficient, mean cosine similarity of connected node features].
// An empty graph yields all zeros.
std::vector<double> graph_summary_stats(const EdgeGraph& g);

// X_E = [pooled || stats].
FeatureVector assemble_edge_feature(const std::vector<double>& pooled,
                                    const std::vector<double>& stats);

// Debug dump: {"nodes": [{"pos": [r, c], "feature_dim": d}], "edges": [[i, j]], "k": k}.
void dump_graph_json(const std::string& path, const EdgeGraph& g);

} // namespace fect
