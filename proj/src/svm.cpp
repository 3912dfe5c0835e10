#include "fect/svm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "fect/errors.hpp"
#include "fect/io_util.hpp"

namespace fect {

namespace {

double dot_row(const Matrix& x, std::size_t i, const std::vector<double>& w) {
    const double* row = x.row_ptr(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) acc += row[j] * w[j];
    return acc;
}

} // namespace

double BinarySvm::decision(const std::vector<double>& x) const {
    if (x.size() != w.size()) throw ShapeError("svm decision: dimension mismatch");
    double acc = b;
    for (std::size_t j = 0; j < w.size(); ++j) acc += w[j] * x[j];
    return acc;
}

BinarySvm train_binary_svm(const Matrix& x, const std::vector<int>& y,
                           const SvmTrainOptions& opts,
                           std::vector<double>* objective_trace) {
    const std::size_t n = x.rows;
    if (n == 0 || y.size() != n) throw ShapeError("train_binary_svm: bad labels");
    bool has_pos = false, has_neg = false;
    for (int v : y) {
        if (v == 1) has_pos = true;
        else if (v == -1) has_neg = true;
        else throw DataError("train_binary_svm: labels must be -1/+1");
    }
    if (!has_pos || !has_neg) throw DataError("train_binary_svm: degenerate labels");
    if (opts.c <= 0.0) throw DataError("train_binary_svm: C must be > 0");

    BinarySvm model;
    model.c = opts.c;
    model.lambda.assign(n, 0.0);
    model.w.assign(x.cols, 0.0);

    const double C = opts.c;
    const double tau = 1e-12;
    std::vector<double> yf(n); // y_i * (w . x_i), gradient is yf - 1
    for (auto& v : yf) v = 0.0;

    const std::size_t max_updates = opts.max_sweeps * n;
    double m_up = 0.0, m_low = 0.0;
    std::size_t updates = 0;

    auto record = [&]() {
        if (!objective_trace) return;
        double sum = 0.0, wn = 0.0;
        for (double l : model.lambda) sum += l;
        for (double wv : model.w) wn += wv * wv;
        objective_trace->push_back(sum - 0.5 * wn);
    };
    record();

    while (updates < max_updates) {
        // Maximal violating pair over I_up / I_low.
        long i = -1, j = -1;
        m_up = -std::numeric_limits<double>::infinity();
        m_low = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < n; ++t) {
            const double yd = static_cast<double>(y[t]);
            const double val = -yd * (yf[t] - 1.0); // -y_t * grad_t
            const bool in_up = (y[t] == 1 && model.lambda[t] < C - tau) ||
                               (y[t] == -1 && model.lambda[t] > tau);
            const bool in_low = (y[t] == -1 && model.lambda[t] < C - tau) ||
                                (y[t] == 1 && model.lambda[t] > tau);
            if (in_up && val > m_up) {
                m_up = val;
                i = static_cast<long>(t);
            }
            if (in_low && val < m_low) {
                m_low = val;
                j = static_cast<long>(t);
            }
        }
        if (i < 0 || j < 0 || m_up - m_low < opts.tol) break;

        const std::size_t a = static_cast<std::size_t>(i);
        const std::size_t bidx = static_cast<std::size_t>(j);
        double kaa = 0.0, kbb = 0.0, kab = 0.0;
        for (std::size_t t = 0; t < x.cols; ++t) {
            kaa += x(a, t) * x(a, t);
            kbb += x(bidx, t) * x(bidx, t);
            kab += x(a, t) * x(bidx, t);
        }

        const double grad_a = yf[a] - 1.0;
        const double grad_b = yf[bidx] - 1.0;
        const double old_a = model.lambda[a];
        const double old_b = model.lambda[bidx];

        if (y[a] != y[bidx]) {
            // Q_ab = y_a y_b K_ab, so the pair curvature is K_aa + K_bb - 2 K_ab
            // in both branches for the linear kernel.
            double quad = kaa + kbb - 2.0 * kab;
            if (quad <= 0.0) quad = tau;
            const double delta = (-grad_a - grad_b) / quad;
            const double diff = model.lambda[a] - model.lambda[bidx];
            model.lambda[a] += delta;
            model.lambda[bidx] += delta;
            if (diff > 0.0) {
                if (model.lambda[bidx] < 0.0) {
                    model.lambda[bidx] = 0.0;
                    model.lambda[a] = diff;
                }
            } else {
                if (model.lambda[a] < 0.0) {
                    model.lambda[a] = 0.0;
                    model.lambda[bidx] = -diff;
                }
            }
            if (diff > 0.0) {
                if (model.lambda[a] > C) {
                    model.lambda[a] = C;
                    model.lambda[bidx] = C - diff;
                }
            } else {
                if (model.lambda[bidx] > C) {
                    model.lambda[bidx] = C;
                    model.lambda[a] = C + diff;
                }
            }
        } else {
            double quad = kaa + kbb - 2.0 * kab;
            if (quad <= 0.0) quad = tau;
            const double delta = (grad_a - grad_b) / quad;
            const double sum = model.lambda[a] + model.lambda[bidx];
            model.lambda[a] -= delta;
            model.lambda[bidx] += delta;
            if (sum > C) {
                if (model.lambda[a] > C) {
                    model.lambda[a] = C;
                    model.lambda[bidx] = sum - C;
                }
            } else {
                if (model.lambda[bidx] < 0.0) {
                    model.lambda[bidx] = 0.0;
                    model.lambda[a] = sum;
                }
            }
            if (sum > C) {
                if (model.lambda[bidx] > C) {
                    model.lambda[bidx] = C;
                    model.lambda[a] = sum - C;
                }
            } else {
                if (model.lambda[a] < 0.0) {
                    model.lambda[a] = 0.0;
                    model.lambda[bidx] = sum;
                }
            }
        }

        const double da = (model.lambda[a] - old_a) * y[a];
        const double db = (model.lambda[bidx] - old_b) * y[bidx];
        for (std::size_t t = 0; t < x.cols; ++t)
            model.w[t] += da * x(a, t) + db * x(bidx, t);
        for (std::size_t t = 0; t < n; ++t)
            yf[t] = static_cast<double>(y[t]) * dot_row(x, t, model.w);

        ++updates;
        record();
    }

    model.pair_updates = updates;
    // Selection values are y_t - w.x_t; free support vectors sit exactly at b,
    // so the midpoint of the final bounds is the optimal bias.
    if (std::isfinite(m_up) && std::isfinite(m_low))
        model.b = (m_up + m_low) / 2.0;
    else
        model.b = 0.0;
    model.final_kkt = kkt_violation(model, x, y);
    return model;
}

double kkt_violation(const BinarySvm& model, const Matrix& x, const std::vector<int>& y) {
    if (x.rows != y.size() || x.cols != model.w.size() || x.rows != model.lambda.size())
        throw ShapeError("kkt_violation: dimension mismatch");
    const double eps = 1e-12;
    double worst = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double margin =
            static_cast<double>(y[i]) * (dot_row(x, i, model.w) + model.b);
        double v = 0.0;
        if (model.lambda[i] <= eps) v = std::max(0.0, 1.0 - margin);
        else if (model.lambda[i] >= model.c - eps) v = std::max(0.0, margin - 1.0);
        else v = std::fabs(margin - 1.0);
        worst = std::max(worst, v);
    }
    return worst;
}

double dual_objective(const BinarySvm& model, const Matrix& x, const std::vector<int>& y) {
    (void)y;
    double sum = 0.0;
    for (double l : model.lambda) sum += l;
    double wn = 0.0;
    // w is maintained as sum(lambda_i y_i x_i); recompute the norm from it.
    (void)x;
    for (double wv : model.w) wn += wv * wv;
    return sum - 0.5 * wn;
}

double primal_objective(const BinarySvm& model, const Matrix& x,
                        const std::vector<int>& y) {
    double wn = 0.0;
    for (double wv : model.w) wn += wv * wv;
    double hinge = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double margin =
            static_cast<double>(y[i]) * (dot_row(x, i, model.w) + model.b);
        hinge += std::max(0.0, 1.0 - margin);
    }
    return 0.5 * wn + model.c * hinge;
}

SvmEnsemble train_multiclass(const Matrix& x, const std::vector<int>& y,
                             const SvmTrainOptions& opts) {
    if (x.rows != y.size()) throw ShapeError("train_multiclass: label count mismatch");
    int classes = 0;
    for (int v : y) {
        if (v < 0) throw DataError("train_multiclass: negative label");
        classes = std::max(classes, v + 1);
    }
    if (classes < 2) throw DataError("train_multiclass: need at least 2 classes");
    std::vector<std::size_t> support(static_cast<std::size_t>(classes), 0);
    for (int v : y) ++support[static_cast<std::size_t>(v)];
    for (int c = 0; c < classes; ++c)
        if (support[static_cast<std::size_t>(c)] == 0)
            throw DataError("train_multiclass: class " + std::to_string(c) +
                            " has no samples");

    SvmEnsemble ensemble;
    ensemble.classes = classes;
    for (int a = 0; a < classes; ++a)
        for (int b = a + 1; b < classes; ++b)
            ensemble.pairs.push_back({a, b, BinarySvm{}});

    const std::ptrdiff_t npairs = static_cast<std::ptrdiff_t>(ensemble.pairs.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t p = 0; p < npairs; ++p) {
        PairwiseModel& pm = ensemble.pairs[static_cast<std::size_t>(p)];
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < y.size(); ++i)
            if (y[i] == pm.class_a || y[i] == pm.class_b) rows.push_back(i);
        Matrix sub(rows.size(), x.cols);
        std::vector<int> sub_y(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            for (std::size_t jcol = 0; jcol < x.cols; ++jcol)
                sub(i, jcol) = x(rows[i], jcol);
            sub_y[i] = (y[rows[i]] == pm.class_a) ? 1 : -1;
        }
        pm.svm = train_binary_svm(sub, sub_y, opts);
    }
    return ensemble;
}

Prediction predict(const SvmEnsemble& ensemble, const std::vector<double>& x) {
    Prediction pred;
    pred.votes.assign(static_cast<std::size_t>(ensemble.classes), 0);
    std::vector<double> signed_sum(static_cast<std::size_t>(ensemble.classes), 0.0);
    for (const auto& pm : ensemble.pairs) {
        const double f = pm.svm.decision(x);
        if (f >= 0.0) ++pred.votes[static_cast<std::size_t>(pm.class_a)];
        else ++pred.votes[static_cast<std::size_t>(pm.class_b)];
        signed_sum[static_cast<std::size_t>(pm.class_a)] += f;
        signed_sum[static_cast<std::size_t>(pm.class_b)] -= f;
    }
    int best = 0;
    for (int c = 1; c < ensemble.classes; ++c) {
        const std::size_t cc = static_cast<std::size_t>(c);
        const std::size_t bb = static_cast<std::size_t>(best);
        if (pred.votes[cc] > pred.votes[bb] ||
            (pred.votes[cc] == pred.votes[bb] && signed_sum[cc] > signed_sum[bb]))
            best = c;
    }
    pred.label = best;
    return pred;
}

std::vector<int> predict_all(const SvmEnsemble& ensemble, const Matrix& x) {
    std::vector<int> out(x.rows, 0);
    for (std::size_t i = 0; i < x.rows; ++i) {
        std::vector<double> row(x.row_ptr(i), x.row_ptr(i) + x.cols);
        out[i] = predict(ensemble, row).label;
    }
    return out;
}

void save_svm_ensemble(const std::string& path, const SvmEnsemble& ensemble) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("svm model: cannot write " + path);
    out.write("FECTSVM1", 8);
    write_u32_le(out, static_cast<std::uint32_t>(ensemble.classes));
    for (const auto& pm : ensemble.pairs) {
        write_u32_le(out, static_cast<std::uint32_t>(pm.class_a));
        write_u32_le(out, static_cast<std::uint32_t>(pm.class_b));
        write_u32_le(out, static_cast<std::uint32_t>(pm.svm.w.size()));
        for (double v : pm.svm.w) write_f64_le(out, v);
        write_f64_le(out, pm.svm.b);
        write_f64_le(out, pm.svm.c);
    }
}

SvmEnsemble load_svm_ensemble(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("svm model: cannot open " + path);
    expect_magic(in, "FECTSVM1", "svm model " + path);
    SvmEnsemble ensemble;
    ensemble.classes = static_cast<int>(read_u32_le(in));
    const int npairs = ensemble.classes * (ensemble.classes - 1) / 2;
    for (int p = 0; p < npairs; ++p) {
        PairwiseModel pm;
        pm.class_a = static_cast<int>(read_u32_le(in));
        pm.class_b = static_cast<int>(read_u32_le(in));
        const std::uint32_t dim = read_u32_le(in);
        pm.svm.w.resize(dim);
        for (auto& v : pm.svm.w) v = read_f64_le(in);
        pm.svm.b = read_f64_le(in);
        pm.svm.c = read_f64_le(in);
        ensemble.pairs.push_back(std::move(pm));
    }
    return ensemble;
}

LogisticModel train_logistic(const Matrix& x, const std::vector<int>& y, int classes,
                             double lr, std::size_t iters) {
    LogisticModel model;
    model.w = Matrix(x.cols, static_cast<std::size_t>(classes));
    model.b.assign(static_cast<std::size_t>(classes), 0.0);
    const double inv_n = 1.0 / static_cast<double>(x.rows);

    std::vector<double> logits(static_cast<std::size_t>(classes));
    Matrix gw(x.cols, static_cast<std::size_t>(classes));
    std::vector<double> gb(static_cast<std::size_t>(classes));
    for (std::size_t it = 0; it < iters; ++it) {
        std::fill(gw.data.begin(), gw.data.end(), 0.0);
        std::fill(gb.begin(), gb.end(), 0.0);
        for (std::size_t i = 0; i < x.rows; ++i) {
            double mx = -1e300;
            for (int c = 0; c < classes; ++c) {
                double acc = model.b[static_cast<std::size_t>(c)];
                for (std::size_t j = 0; j < x.cols; ++j)
                    acc += x(i, j) * model.w(j, static_cast<std::size_t>(c));
                logits[static_cast<std::size_t>(c)] = acc;
                mx = std::max(mx, acc);
            }
            double sum = 0.0;
            for (auto& v : logits) {
                v = std::exp(v - mx);
                sum += v;
            }
            for (int c = 0; c < classes; ++c) {
                const std::size_t cc = static_cast<std::size_t>(c);
                const double p = logits[cc] / sum - (y[i] == c ? 1.0 : 0.0);
                gb[cc] += p * inv_n;
                for (std::size_t j = 0; j < x.cols; ++j) gw(j, cc) += p * x(i, j) * inv_n;
            }
        }
        for (std::size_t t = 0; t < gw.data.size(); ++t) model.w.data[t] -= lr * gw.data[t];
        for (std::size_t c = 0; c < model.b.size(); ++c) model.b[c] -= lr * gb[c];
    }
    return model;
}

std::vector<int> predict_logistic(const LogisticModel& model, const Matrix& x) {
    std::vector<int> out(x.rows, 0);
    const std::size_t classes = model.b.size();
    for (std::size_t i = 0; i < x.rows; ++i) {
        int best = 0;
        double best_v = -1e300;
        for (std::size_t c = 0; c < classes; ++c) {
            double acc = model.b[c];
            for (std::size_t j = 0; j < x.cols; ++j) acc += x(i, j) * model.w(j, c);
            if (acc > best_v) {
                best_v = acc;
                best = static_cast<int>(c);
            }
        }
        out[i] = best;
    }
    return out;
}

} // namespace fect
