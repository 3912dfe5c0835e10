#include "fect/metrics.hpp"

#include <cstdio>
#include <fstream>

#include "fect/errors.hpp"

namespace fect {

long ConfusionMatrix::total() const {
    long n = 0;
    for (long v : counts) n += v;
    return n;
}

ConfusionMatrix confusion_matrix(const std::vector<int>& y_true,
                                 const std::vector<int>& y_pred, std::size_t classes) {
    if (y_true.size() != y_pred.size())
        throw ShapeError("confusion_matrix: length mismatch");
    ConfusionMatrix cm(classes);
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const int t = y_true[i], p = y_pred[i];
        if (t < 0 || p < 0 || t >= static_cast<int>(classes) ||
            p >= static_cast<int>(classes))
            throw DataError("confusion_matrix: label out of range at index " +
                            std::to_string(i));
        ++cm.at(static_cast<std::size_t>(t), static_cast<std::size_t>(p));
    }
    return cm;
}

MetricsReport compute_metrics(const ConfusionMatrix& cm) {
    if (cm.classes < 2) throw DataError("compute_metrics: need K >= 2");
    const long n = cm.total();
    if (n == 0) throw DataError("compute_metrics: no samples");

    MetricsReport rep;
    rep.per_class_f1.assign(cm.classes, 0.0);
    long diag = 0;
    double recall_sum = 0.0;
    for (std::size_t c = 0; c < cm.classes; ++c) {
        long tp = cm.at(c, c);
        long support = 0, predicted = 0;
        for (std::size_t j = 0; j < cm.classes; ++j) {
            support += cm.at(c, j);
            predicted += cm.at(j, c);
        }
        diag += tp;
        const double precision =
            predicted > 0 ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
        const double recall =
            support > 0 ? static_cast<double>(tp) / static_cast<double>(support) : 0.0;
        const double f1 = (precision + recall > 0.0)
                              ? 2.0 * precision * recall / (precision + recall)
                              : 0.0;
        rep.per_class_f1[c] = f1;
        rep.weighted_f1 +=
            (static_cast<double>(support) / static_cast<double>(n)) * f1;
        rep.macro_f1 += f1 / static_cast<double>(cm.classes);
        recall_sum += recall;
    }
    rep.accuracy = static_cast<double>(diag) / static_cast<double>(n);
    rep.balanced_accuracy = recall_sum / static_cast<double>(cm.classes);
    return rep;
}

void save_metrics_csv(const std::string& path, const MetricsReport& report) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("metrics: cannot write " + path);
    char buf[64];
    out << "metric,value\n";
    auto row = [&](const std::string& name, double v) {
        std::snprintf(buf, sizeof(buf), "%.6f", v);
        out << name << "," << buf << "\n";
    };
    row("accuracy", report.accuracy);
    row("balanced_accuracy", report.balanced_accuracy);
    row("macro_f1", report.macro_f1);
    row("weighted_f1", report.weighted_f1);
    for (std::size_t c = 0; c < report.per_class_f1.size(); ++c)
        row("f1_class_" + std::to_string(c), report.per_class_f1[c]);
}

} // namespace fect
