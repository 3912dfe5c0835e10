#pragma once

#include <cstdint>
#include <string>

namespace fect {

// Resolved run configuration; every knob can come from a key=value config
// file, with command-line flags taking precedence. Unknown keys are
// rejected.
struct PipelineConfig {
    std::uint64_t seed = 1;
    int jobs = 0; // 0 = leave the OpenMP default

    // synthgen
    std::size_t image_size = 512;
    std::size_t samples_per_class = 16;
    double train_frac = 0.6;
    double val_frac = 0.2;

    // extraction
    std::size_t max_cells = 256;
    double spacing = 16.0;
    std::size_t min_points = 8;
    std::size_t max_points = 64;
    std::size_t knn_k = 5;

    // aggregator
    std::size_t pooled_dim = 64;
    std::size_t heads = 4;
    std::size_t landmarks = 16;
    int pinv_iters = 6;
    std::size_t epochs = 30;
    std::size_t batch_size = 16;
    double lr0 = 0.001;
    double momentum = 0.9;
    std::size_t halve_every = 7;

    // svm / fusion
    double svm_c = 1.0;
    double svm_tol = 1e-3;
    std::size_t svm_max_sweeps = 10000;
    double alpha = 1.0;
    double beta = 1.0;
    double gamma = 1.0;

    std::string report_dir = "reports";
};

PipelineConfig load_pipeline_config(const std::string& path);

// FECT_REPORT_DIR overrides report_dir when set.
void apply_env_overrides(PipelineConfig& config);

std::string describe_config(const PipelineConfig& config);

} // namespace fect
