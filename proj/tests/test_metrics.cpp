#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fect/errors.hpp"
#include "fect/metrics.hpp"
#include "fect/rng.hpp"

using namespace fect;

namespace {

// Definition-level oracle, coded straight from precision/recall/F1.
MetricsReport oracle_metrics(const ConfusionMatrix& cm) {
    const std::size_t k = cm.classes;
    MetricsReport rep;
    rep.per_class_f1.assign(k, 0.0);
    double n = 0.0;
    for (std::size_t t = 0; t < k; ++t)
        for (std::size_t p = 0; p < k; ++p) n += static_cast<double>(cm.at(t, p));

    double diag = 0.0, recall_sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        double tp = static_cast<double>(cm.at(c, c));
        double fn = 0.0, fp = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            if (j != c) {
                fn += static_cast<double>(cm.at(c, j));
                fp += static_cast<double>(cm.at(j, c));
            }
        }
        diag += tp;
        const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
        const double rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
        const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
        rep.per_class_f1[c] = f1;
        rep.weighted_f1 += (tp + fn) / n * f1;
        rep.macro_f1 += f1 / static_cast<double>(k);
        recall_sum += rec;
    }
    rep.accuracy = diag / n;
    rep.balanced_accuracy = recall_sum / static_cast<double>(k);
    return rep;
}

} // namespace

TEST_CASE("perfect predictions give a diagonal matrix and unit metrics") {
    const std::vector<int> t = {0, 1, 2, 0, 1, 2};
    const ConfusionMatrix cm = confusion_matrix(t, t, 3);
    for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b = 0; b < 3; ++b) CHECK(cm.at(a, b) == (a == b ? 2 : 0));
    const MetricsReport rep = compute_metrics(cm);
    CHECK(rep.accuracy == 1.0);
    CHECK(rep.balanced_accuracy == 1.0);
    CHECK(rep.macro_f1 == 1.0);
    CHECK(rep.weighted_f1 == 1.0);
}

TEST_CASE("empty input yields a zero matrix; metrics on it are rejected") {
    const ConfusionMatrix cm = confusion_matrix({}, {}, 2);
    CHECK(cm.total() == 0);
    CHECK_THROWS_WITH_AS(compute_metrics(cm), doctest::Contains("no samples"), DataError);
}

TEST_CASE("hand-counted case [[1,1],[0,2]]") {
    const std::vector<int> t = {0, 0, 1, 1};
    const std::vector<int> p = {0, 1, 1, 1};
    const ConfusionMatrix cm = confusion_matrix(t, p, 2);
    CHECK(cm.at(0, 0) == 1);
    CHECK(cm.at(0, 1) == 1);
    CHECK(cm.at(1, 0) == 0);
    CHECK(cm.at(1, 1) == 2);

    const MetricsReport rep = compute_metrics(cm);
    CHECK(rep.per_class_f1[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(rep.per_class_f1[1] == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(rep.weighted_f1 == doctest::Approx(11.0 / 15.0).epsilon(1e-15));
}

TEST_CASE("labels out of range are rejected") {
    CHECK_THROWS_AS(confusion_matrix({0, 2}, {0, 1}, 2), DataError);
    CHECK_THROWS_AS(confusion_matrix({0, 1}, {0, -1}, 2), DataError);
    CHECK_THROWS_AS(confusion_matrix({0}, {0, 1}, 2), ShapeError);
}

TEST_CASE("a class never predicted gets F1 zero without division errors") {
    const std::vector<int> t = {0, 0, 1, 1};
    const std::vector<int> p = {0, 0, 0, 0};
    const MetricsReport rep = compute_metrics(confusion_matrix(t, p, 2));
    CHECK(rep.per_class_f1[1] == 0.0);
    CHECK(std::isfinite(rep.weighted_f1));
}

TEST_CASE("matches the definition-level oracle on 500 random matrices") {
    SeededRng rng(99);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t k = 2 + rng.next_below(6);
        ConfusionMatrix cm(k);
        bool nonzero = false;
        for (std::size_t t = 0; t < k; ++t)
            for (std::size_t p = 0; p < k; ++p) {
                cm.at(t, p) = static_cast<long>(rng.next_below(20));
                nonzero = nonzero || cm.at(t, p) > 0;
            }
        if (!nonzero) cm.at(0, 0) = 1;

        const MetricsReport got = compute_metrics(cm);
        const MetricsReport want = oracle_metrics(cm);
        CHECK(std::fabs(got.accuracy - want.accuracy) < 1e-12);
        CHECK(std::fabs(got.balanced_accuracy - want.balanced_accuracy) < 1e-12);
        CHECK(std::fabs(got.macro_f1 - want.macro_f1) < 1e-12);
        CHECK(std::fabs(got.weighted_f1 - want.weighted_f1) < 1e-12);
        for (std::size_t c = 0; c < k; ++c)
            CHECK(std::fabs(got.per_class_f1[c] - want.per_class_f1[c]) < 1e-12);
    }
}

TEST_CASE("balanced accuracy equals plain accuracy for equal supports") {
    SeededRng rng(101);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t k = 2 + rng.next_below(4);
        ConfusionMatrix cm(k);
        // equal row sums by construction
        for (std::size_t t = 0; t < k; ++t) {
            long remaining = 24;
            for (std::size_t p = 0; p + 1 < k; ++p) {
                const long v = static_cast<long>(rng.next_below(
                    static_cast<std::uint64_t>(remaining) + 1));
                cm.at(t, p) = v;
                remaining -= v;
            }
            cm.at(t, k - 1) = remaining;
        }
        const MetricsReport rep = compute_metrics(cm);
        CHECK(std::fabs(rep.balanced_accuracy - rep.accuracy) < 1e-12);
    }
}
