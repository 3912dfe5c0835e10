#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fect/descriptors.hpp"
#include "fect/matrix.hpp"

namespace fect {

// Architecture and behavioral knobs of one attention aggregator.
struct AggregatorConfig {
    std::size_t input_dim = 0;  // d, per-token feature width
    std::size_t pooled_dim = 64; // D, must be divisible by heads
    std::size_t heads = 4;
    std::size_t classes = 2; // K, width of the temporary linear head
    bool use_nystrom = false;
    std::size_t landmarks = 16;   // Nystrom segment count over the token rows
    int pinv_iters = 6;           // Newton-Schulz steps inside Nystrom attention
    std::uint64_t landmark_seed = 7; // seeds the segment shuffle
};

// One transformer-style block with a learnable pooling token plus a linear
// classification head used only during training.
struct AggregatorModel {
    AggregatorConfig config;
    Matrix w_in;       // d x D token projection
    Matrix pool_token; // 1 x D
    Matrix w_q, w_k, w_v, w_o; // D x D
    Matrix head_w;     // D x K
    Matrix head_b;     // 1 x K

    std::size_t parameter_count() const;
};

AggregatorModel init_aggregator(const AggregatorConfig& config, std::uint64_t seed);

struct AggregatorGradients {
    Matrix w_in, pool_token, w_q, w_k, w_v, w_o, head_w, head_b;

    explicit AggregatorGradients(const AggregatorModel& model);
    void accumulate(const AggregatorGradients& other);
    void scale_all(double s);
};

// Saved intermediates of one forward pass; consumed by the backward pass
// and inspected by the approximation tests.
struct ForwardCache {
    Matrix xhat;            // (n+1) x D, pool token prepended to projections
    Matrix q, k, v;         // (n+1) x D
    Matrix concat_heads;    // (n+1) x D, attention output before w_o
    Matrix y;               // (n+1) x D, after w_o and residual
    std::vector<double> pooled; // D
    std::vector<double> logits; // K
    std::vector<double> probs;  // K, softmax of logits

    // Exact path, per head.
    std::vector<Matrix> attn; // (n+1) x (n+1)

    // Nystrom path, per head.
    std::vector<Matrix> seg;     // L x (n+1) segment-mean operator
    std::vector<Matrix> f_block; // (n+1) x L
    std::vector<Matrix> landmark_attn; // L x L
    std::vector<Matrix> b_block; // L x (n+1)
    std::vector<Matrix> z;       // L x L pseudoinverse iterate
    std::vector<Matrix> pinv_z_prev, pinv_y, pinv_t1, pinv_t2; // final-step algebra
    std::vector<Matrix> bv, zbv; // L x head_dim intermediates
};

struct AttentionOutput {
    std::vector<double> pooled;
    std::vector<double> logits;
};

// Exact multi-head scaled dot-product attention over the pool token plus
// n projected tokens, with a residual connection.
AttentionOutput attention_forward(const Matrix& tokens, const AggregatorModel& model,
                                  ForwardCache* cache = nullptr);

// Nystrom-approximated attention. Landmarks are the pool row itself plus
// segment means of min(m, n) near-equal token segments taken after a seeded
// shuffle, so m >= n makes every token its own landmark.
AttentionOutput nystrom_attention_forward(const Matrix& tokens,
                                          const AggregatorModel& model,
                                          std::size_t landmarks,
                                          ForwardCache* cache = nullptr);

// Forward along the path selected by model.config, then analytic
// backpropagation of weight * cross_entropy(logits, label) into grads.
// Returns the weighted loss.
double backprop_bag(const Matrix& tokens, int label, double weight,
                    const AggregatorModel& model, AggregatorGradients& grads);

double cross_entropy(const std::vector<double>& logits, int label);

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 16;
    double lr0 = 0.001;
    double momentum = 0.9;
    std::size_t halve_every = 7; // step-decay period in epochs
    std::uint64_t seed = 1;
};

inline double learning_rate_at(const TrainConfig& cfg, std::size_t epoch) {
    double lr = cfg.lr0;
    for (std::size_t i = 0; i < epoch / cfg.halve_every; ++i) lr *= 0.5;
    return lr;
}

struct TokenBag {
    Matrix tokens; // n x d
    int label = 0;
};

struct LossTraceRow {
    long epoch = 0; // -1 for the pre-training evaluation row
    double lr = 0.0;
    double mean_loss = 0.0;
};

struct TrainedAggregator {
    AggregatorModel model;
    std::vector<LossTraceRow> trace;
};

// Mini-batch SGD with momentum and the step-decay schedule. Batch gradient
// terms are computed in parallel and summed in fixed bag order, so results
// are identical for any thread count.
TrainedAggregator train_aggregator(const std::vector<TokenBag>& bags,
                                   const AggregatorConfig& arch,
                                   const TrainConfig& config, bool use_nystrom);

// Central finite differences against the analytic gradient on a seeded
// sample of at least min_coords coordinates spanning every tensor.
// Returns the max relative error.
double grad_check(const AggregatorModel& model, const std::vector<TokenBag>& batch,
                  double eps, std::size_t min_coords = 200);

// Pooled vector of a trained model, tagged with the caller's modality.
FeatureVector aggregate(const Matrix& tokens, const AggregatorModel& model,
                        Modality modality);

void save_aggregator(const std::string& path, const AggregatorModel& model);
AggregatorModel load_aggregator(const std::string& path);

void save_loss_trace(const std::string& path, const std::vector<LossTraceRow>& trace);

} // namespace fect
