// Benchmark of the OpenMP kernels against their serial references:
// matrix product, attention forward, and per-image feature extraction.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <omp.h>
#include <thread>

#include "fect/aggregator.hpp"
#include "fect/matrix.hpp"
#include "fect/pipeline.hpp"
#include "fect/rng.hpp"
#include "fect/synthgen.hpp"

using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <typename F>
double time_best_of(int reps, F&& fn) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = Clock::now();
        fn();
        best = std::min(best, seconds_since(t0));
    }
    return best;
}

void bench_matmul() {
    std::printf("== matmul ==\n");
    for (std::size_t size : {128, 256, 384}) {
        fect::SeededRng rng(42 + size);
        fect::Matrix a = fect::Matrix::gaussian(size, size, 1.0, rng);
        fect::Matrix b = fect::Matrix::gaussian(size, size, 1.0, rng);

        fect::Matrix serial_out, parallel_out;
        const double t_serial =
            time_best_of(3, [&] { serial_out = fect::reference::matmul(a, b); });
        const double t_parallel = time_best_of(3, [&] { parallel_out = fect::matmul(a, b); });

        bool equal = serial_out.data == parallel_out.data;
        std::printf("  %4zu x %-4zu serial %8.2f ms | parallel %8.2f ms | speedup %.2fx | %s\n",
                    size, size, t_serial * 1e3, t_parallel * 1e3, t_serial / t_parallel,
                    equal ? "bit-identical" : "MISMATCH");
    }
}

void bench_attention() {
    std::printf("== attention batch gradients ==\n");
    fect::AggregatorConfig arch;
    arch.input_dim = 14;
    arch.pooled_dim = 64;
    arch.heads = 4;
    arch.classes = 4;
    const fect::AggregatorModel model = fect::init_aggregator(arch, 9);

    fect::SeededRng rng(7);
    std::vector<fect::TokenBag> batch;
    for (int i = 0; i < 16; ++i) {
        fect::TokenBag bag;
        bag.tokens = fect::Matrix::gaussian(128, 14, 1.0, rng);
        bag.label = i % 4;
        batch.push_back(std::move(bag));
    }

    auto run_batch = [&](int threads) {
        omp_set_num_threads(threads);
        std::vector<fect::AggregatorGradients> parts;
        for (std::size_t i = 0; i < batch.size(); ++i) parts.emplace_back(model);
        const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(batch.size());
#pragma omp parallel for schedule(dynamic)
        for (std::ptrdiff_t i = 0; i < n; ++i)
            fect::backprop_bag(batch[static_cast<std::size_t>(i)].tokens,
                               batch[static_cast<std::size_t>(i)].label, 1.0 / 16.0,
                               model, parts[static_cast<std::size_t>(i)]);
        fect::AggregatorGradients total(model);
        for (const auto& p : parts) total.accumulate(p);
        return total.w_in.data[0];
    };

    const int hw = static_cast<int>(std::thread::hardware_concurrency());
    const double g1 = run_batch(1);
    const double t1 = time_best_of(3, [&] { run_batch(1); });
    const double gn = run_batch(hw);
    const double tn = time_best_of(3, [&] { run_batch(hw); });
    omp_set_num_threads(hw);
    std::printf("  16 bags x 128 tokens: 1 thread %8.2f ms | %d threads %8.2f ms | speedup %.2fx | %s\n",
                t1 * 1e3, hw, tn * 1e3, t1 / tn,
                g1 == gn ? "bit-identical" : "MISMATCH");
}

void bench_extraction() {
    std::printf("== per-image extraction ==\n");
    fect::SyntheticRecipe recipe = fect::default_recipe();
    recipe.samples_per_class = 3;
    recipe.seed = 21;
    const std::string dir =
        (std::filesystem::temp_directory_path() / "fect_bench_dataset").string();
    std::filesystem::remove_all(dir);
    const fect::Manifest manifest = fect::generate_dataset(recipe, dir);

    fect::ExtractionConfig config;
    const int hw = static_cast<int>(std::thread::hardware_concurrency());

    auto run = [&](int threads) {
        omp_set_num_threads(threads);
        fect::BagSet bags = fect::build_bags(manifest, fect::Modality::Edge, config);
        return bags.bags.size();
    };
    run(1);
    const double t1 = time_best_of(2, [&] { run(1); });
    const double tn = time_best_of(2, [&] { run(hw); });
    omp_set_num_threads(hw);
    std::printf("  %zu images edge tokens: 1 thread %8.2f ms | %d threads %8.2f ms | speedup %.2fx\n",
                manifest.size(), t1 * 1e3, hw, tn * 1e3, t1 / tn);
    std::filesystem::remove_all(dir);
}

} // namespace

int main() {
    std::printf("threads available: %u\n", std::thread::hardware_concurrency());
    bench_matmul();
    bench_attention();
    bench_extraction();
    return 0;
}
