#pragma once

#include <string>
#include <vector>

namespace fect {

struct ConfusionMatrix {
    std::size_t classes = 0;
    std::vector<long> counts; // (true, pred) row-major

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(std::size_t k) : classes(k), counts(k * k, 0) {}

    long& at(std::size_t t, std::size_t p) { return counts[t * classes + p]; }
    long at(std::size_t t, std::size_t p) const { return counts[t * classes + p]; }
    long total() const;
};

ConfusionMatrix confusion_matrix(const std::vector<int>& y_true,
                                 const std::vector<int>& y_pred, std::size_t classes);

struct MetricsReport {
    std::vector<double> per_class_f1;
    double weighted_f1 = 0.0;
    double macro_f1 = 0.0;
    double accuracy = 0.0;          // trace / N
    double balanced_accuracy = 0.0; // unweighted mean of per-class recall
};

// Per-class F1 = 2PR/(P+R) with F1 := 0 when P+R = 0; weighted F1 by class
// support; balanced accuracy = mean recall (0 for empty classes).
MetricsReport compute_metrics(const ConfusionMatrix& cm);

void save_metrics_csv(const std::string& path, const MetricsReport& report);

} // namespace fect
