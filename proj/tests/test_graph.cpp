#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "fect/errors.hpp"
#include "fect/knn_graph.hpp"
#include "fect/rng.hpp"

using namespace fect;

namespace {

std::vector<std::vector<double>> unit_features(std::size_t n, std::size_t d = 4) {
    return std::vector<std::vector<double>>(n, std::vector<double>(d, 1.0));
}

// Brute-force oracle: sort all other nodes by (squared distance, index).
std::set<std::pair<std::size_t, std::size_t>> oracle_edges(
    const std::vector<std::pair<double, double>>& pts, std::size_t k) {
    std::set<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        std::vector<std::pair<double, std::size_t>> dist;
        for (std::size_t j = 0; j < pts.size(); ++j) {
            if (i == j) continue;
            const double dr = pts[i].first - pts[j].first;
            const double dc = pts[i].second - pts[j].second;
            dist.push_back({dr * dr + dc * dc, j});
        }
        std::sort(dist.begin(), dist.end());
        for (std::size_t t = 0; t < std::min(k, dist.size()); ++t)
            edges.insert({i, dist[t].second});
    }
    return edges;
}

} // namespace

TEST_CASE("singleton graph has no edges") {
    const EdgeGraph g = build_knn_graph({{1.0, 2.0}}, unit_features(1), 3);
    CHECK(g.nodes.size() == 1);
    CHECK(g.edges.empty());
    const EdgeGraph empty = build_knn_graph({}, {}, 3);
    CHECK(empty.nodes.empty());
    CHECK(empty.edges.empty());
}

TEST_CASE("collinear points with k=1") {
    const std::vector<std::pair<double, double>> pts = {{0, 0}, {0, 1}, {0, 3}};
    const EdgeGraph g = build_knn_graph(pts, unit_features(3), 1);
    const std::set<std::pair<std::size_t, std::size_t>> expected = {
        {0, 1}, {1, 0}, {2, 1}};
    std::set<std::pair<std::size_t, std::size_t>> got(g.edges.begin(), g.edges.end());
    CHECK(got == expected);
}

TEST_CASE("k >= n-1 gives the complete directed graph") {
    SeededRng rng(6);
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < 7; ++i) pts.push_back({rng.normal(), rng.normal()});
    const EdgeGraph g = build_knn_graph(pts, unit_features(7), 10);
    CHECK(g.edges.size() == 7 * 6);
}

TEST_CASE("knn graph matches the brute-force oracle") {
    SeededRng rng(8);
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = 2 + rng.next_below(49);
        const std::size_t k = 1 + rng.next_below(5);
        std::vector<std::pair<double, double>> pts;
        for (std::size_t i = 0; i < n; ++i)
            pts.push_back({rng.uniform(0, 100), rng.uniform(0, 100)});
        const EdgeGraph g = build_knn_graph(pts, unit_features(n), k);

        // out-degree and no self-edges
        std::vector<std::size_t> outdeg(n, 0);
        for (const auto& [i, j] : g.edges) {
            CHECK(i != j);
            CHECK(j < n);
            ++outdeg[i];
        }
        for (std::size_t i = 0; i < n; ++i) CHECK(outdeg[i] == std::min(k, n - 1));

        std::set<std::pair<std::size_t, std::size_t>> got(g.edges.begin(), g.edges.end());
        CHECK(got == oracle_edges(pts, k));
    }
}

TEST_CASE("summary stats of the empty graph are zero") {
    const EdgeGraph g = build_knn_graph({}, {}, 2);
    const auto stats = graph_summary_stats(g);
    REQUIRE(stats.size() == kGraphStatsDim);
    for (double v : stats) CHECK(v == 0.0);
}

TEST_CASE("unit square corners with k=1") {
    const std::vector<std::pair<double, double>> pts = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
    const EdgeGraph g = build_knn_graph(pts, unit_features(4), 1);
    const auto stats = graph_summary_stats(g);
    CHECK(stats[0] == doctest::Approx(4.0)); // nodes
    CHECK(stats[1] == doctest::Approx(4.0)); // edges
    CHECK(stats[4] == doctest::Approx(1.0)); // mean edge length
    CHECK(stats[5] == doctest::Approx(0.0)); // length variance
    CHECK(stats[7] == doctest::Approx(1.0)); // identical unit features
}

TEST_CASE("complete graph on 4 nodes has clustering coefficient 1") {
    SeededRng rng(10);
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < 4; ++i) pts.push_back({rng.normal(), rng.normal()});
    const EdgeGraph g = build_knn_graph(pts, unit_features(4), 3);
    const auto stats = graph_summary_stats(g);
    CHECK(stats[6] == doctest::Approx(1.0));
}

TEST_CASE("graph is translation invariant and scales edge lengths") {
    SeededRng rng(14);
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < 20; ++i) pts.push_back({rng.uniform(0, 50), rng.uniform(0, 50)});
    auto feats = unit_features(20);
    const EdgeGraph base = build_knn_graph(pts, feats, 4);
    const auto base_stats = graph_summary_stats(base);

    std::vector<std::pair<double, double>> shifted, scaled;
    for (const auto& [r, c] : pts) {
        shifted.push_back({r + 123.0, c - 55.0});
        scaled.push_back({r * 3.0, c * 3.0});
    }
    const EdgeGraph g_shift = build_knn_graph(shifted, feats, 4);
    const auto shift_stats = graph_summary_stats(g_shift);
    CHECK(g_shift.edges == base.edges);
    for (std::size_t i = 0; i < kGraphStatsDim; ++i)
        CHECK(shift_stats[i] == doctest::Approx(base_stats[i]).epsilon(1e-9));

    const EdgeGraph g_scale = build_knn_graph(scaled, feats, 4);
    const auto scale_stats = graph_summary_stats(g_scale);
    CHECK(g_scale.edges == base.edges);
    CHECK(scale_stats[4] == doctest::Approx(3.0 * base_stats[4]).epsilon(1e-9));
    CHECK(scale_stats[2] == doctest::Approx(base_stats[2]).epsilon(1e-12)); // degrees
    CHECK(scale_stats[6] == doctest::Approx(base_stats[6]).epsilon(1e-12)); // clustering
}

TEST_CASE("edge feature assembly concatenates pooled and stats") {
    const std::vector<double> pooled(64, 0.5);
    const std::vector<double> stats = {1, 2, 3, 4, 5, 6, 7, 8};
    const FeatureVector fv = assemble_edge_feature(pooled, stats);
    CHECK(fv.modality == Modality::Edge);
    REQUIRE(fv.dim() == 72);
    for (std::size_t i = 0; i < 64; ++i) CHECK(fv.values[i] == 0.5);
    for (std::size_t i = 0; i < 8; ++i) CHECK(fv.values[64 + i] == stats[i]);

    const FeatureVector zeros =
        assemble_edge_feature(std::vector<double>(64, 0.0), std::vector<double>(8, 0.0));
    for (double v : zeros.values) CHECK(v == 0.0);
}

TEST_CASE("graph json dump has the declared structure") {
    const std::vector<std::pair<double, double>> pts = {{0, 0}, {0, 2}, {3, 0}};
    const EdgeGraph g = build_knn_graph(pts, unit_features(3), 1);
    const auto path = (std::filesystem::temp_directory_path() / "fect_graph.json").string();
    dump_graph_json(path, g);
    std::ifstream in(path);
    nlohmann::json j;
    in >> j;
    CHECK(j.at("k").get<std::size_t>() == 1);
    CHECK(j.at("nodes").size() == 3);
    CHECK(j.at("edges").size() == g.edges.size());
    std::filesystem::remove(path);
}
