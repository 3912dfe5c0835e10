#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fect/matrix.hpp"

namespace fect {

// Linear soft-margin SVM trained in the dual.
struct BinarySvm {
    std::vector<double> w;
    double b = 0.0;
    double c = 1.0;                 // box constraint
    std::vector<double> lambda;     // dual coefficients, 0 <= lambda_i <= c
    std::size_t pair_updates = 0;   // training meta
    double final_kkt = 0.0;

    double decision(const std::vector<double>& x) const;
};

struct SvmTrainOptions {
    double c = 1.0;
    double tol = 1e-3;
    std::size_t max_sweeps = 10000; // one sweep = n pair updates
    bool record_objective = false;  // keep the per-update dual objective trace
};

// SMO-style maximal-violating-pair coordinate ascent on the linear-kernel
// dual. Labels must be -1 / +1 with both classes present.
BinarySvm train_binary_svm(const Matrix& x, const std::vector<int>& y,
                           const SvmTrainOptions& opts = {},
                           std::vector<double>* objective_trace = nullptr);

// Max residual of the dual KKT conditions at (lambda, b):
//   lambda_i = 0        -> margin_i >= 1
//   0 < lambda_i < C    -> margin_i == 1
//   lambda_i = C        -> margin_i <= 1
double kkt_violation(const BinarySvm& model, const Matrix& x, const std::vector<int>& y);

// Dual objective sum(lambda) - 0.5 ||w||^2 with w implied by lambda.
double dual_objective(const BinarySvm& model, const Matrix& x, const std::vector<int>& y);

double primal_objective(const BinarySvm& model, const Matrix& x,
                        const std::vector<int>& y);

struct PairwiseModel {
    int class_a = 0; // decision > 0 votes class_a
    int class_b = 0;
    BinarySvm svm;
};

struct SvmEnsemble {
    int classes = 0;
    std::vector<PairwiseModel> pairs; // all (a, b), a < b, lexicographic
};

// One-vs-one decomposition; pairwise models train independently (and in
// parallel) on their two classes' samples only.
SvmEnsemble train_multiclass(const Matrix& x, const std::vector<int>& y,
                             const SvmTrainOptions& opts = {});

struct Prediction {
    int label = 0;
    std::vector<int> votes;
};

// Majority vote; ties go to the tied class with the largest summed signed
// decision value, then the lowest index.
Prediction predict(const SvmEnsemble& ensemble, const std::vector<double>& x);

std::vector<int> predict_all(const SvmEnsemble& ensemble, const Matrix& x);

void save_svm_ensemble(const std::string& path, const SvmEnsemble& ensemble);
SvmEnsemble load_svm_ensemble(const std::string& path);

// Multinomial logistic regression baseline for the classifier comparison
// table; plain full-batch gradient descent.
struct LogisticModel {
    Matrix w; // d x K
    std::vector<double> b;
};

LogisticModel train_logistic(const Matrix& x, const std::vector<int>& y, int classes,
                             double lr = 0.1, std::size_t iters = 500);
std::vector<int> predict_logistic(const LogisticModel& model, const Matrix& x);

} // namespace fect
