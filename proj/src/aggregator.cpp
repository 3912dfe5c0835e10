#include "fect/aggregator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "fect/errors.hpp"
#include "fect/io_util.hpp"
#include "fect/rng.hpp"

namespace fect {

namespace {

Matrix slice_cols(const Matrix& m, std::size_t start, std::size_t len) {
    Matrix out(m.rows, len);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < len; ++j) out(i, j) = m(i, start + j);
    return out;
}

void add_into_cols(Matrix& dst, const Matrix& src, std::size_t start) {
    for (std::size_t i = 0; i < src.rows; ++i)
        for (std::size_t j = 0; j < src.cols; ++j) dst(i, start + j) += src(i, j);
}

void set_into_cols(Matrix& dst, const Matrix& src, std::size_t start) {
    for (std::size_t i = 0; i < src.rows; ++i)
        for (std::size_t j = 0; j < src.cols; ++j) dst(i, start + j) = src(i, j);
}

// L x (n+1) segment-mean operator: the pool row is its own landmark, the n
// token rows are split into min(m, n) near-equal contiguous segments after
// a seeded shuffle.
Matrix segment_operator(std::size_t n, std::size_t m_landmarks, std::uint64_t seed) {
    const std::size_t segs = std::max<std::size_t>(1, std::min(m_landmarks, n));
    Matrix op(segs + 1, n + 1);
    op(0, 0) = 1.0;

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 1); // token rows of xhat
    SeededRng rng(mix_seed(seed, n));
    rng.shuffle(idx);

    const std::size_t base = n / segs;
    const std::size_t rem = n % segs;
    std::size_t pos = 0;
    for (std::size_t s = 0; s < segs; ++s) {
        const std::size_t len = base + (s < rem ? 1 : 0);
        for (std::size_t t = 0; t < len; ++t)
            op(s + 1, idx[pos + t]) = 1.0 / static_cast<double>(len);
        pos += len;
    }
    return op;
}

struct PinvTrace {
    Matrix z_prev, y, t1, t2, z;
};

PinvTrace pinv_traced(const Matrix& a, int iters) {
    const std::size_t n = a.rows;
    const Matrix eye = Matrix::identity(n);
    const double n1 = norm_1(a);
    const double ninf = norm_inf(a);
    PinvTrace tr;
    if (n1 == 0.0 || ninf == 0.0) {
        tr.z_prev = tr.y = tr.t1 = tr.t2 = tr.z = Matrix::zeros(n, n);
        return tr;
    }
    Matrix z = scale(transpose(a), 1.0 / (n1 * ninf));
    for (int it = 0; it < iters; ++it) {
        tr.z_prev = z;
        tr.y = matmul(a, z);
        tr.t1 = subtract(scale(eye, 7.0), tr.y);
        tr.t2 = subtract(scale(eye, 15.0), matmul(tr.y, tr.t1));
        const Matrix t3 = subtract(scale(eye, 13.0), matmul(tr.y, tr.t2));
        z = scale(matmul(z, t3), 0.25);
    }
    tr.z = z;
    return tr;
}

// Adjoint of the final Newton-Schulz step with the incoming iterate held
// fixed; at convergence this matches the implicit derivative.
Matrix pinv_backward(const PinvTrace& tr, const Matrix& dz) {
    Matrix dt3 = scale(matmul(transpose(tr.z_prev), dz), 0.25);
    Matrix dy = scale(matmul(dt3, transpose(tr.t2)), -1.0);
    Matrix dt2 = scale(matmul(transpose(tr.y), dt3), -1.0);
    add_inplace(dy, scale(matmul(dt2, transpose(tr.t1)), -1.0));
    Matrix dt1 = scale(matmul(transpose(tr.y), dt2), -1.0);
    axpy_inplace(dy, -1.0, dt1);
    return matmul(dy, transpose(tr.z_prev));
}

std::vector<double> softmax_vec(const std::vector<double>& x) {
    double mx = x[0];
    for (double v : x) mx = std::max(mx, v);
    std::vector<double> out(x.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::exp(x[i] - mx);
        sum += out[i];
    }
    for (auto& v : out) v /= sum;
    return out;
}

AttentionOutput forward_impl(const Matrix& tokens, const AggregatorModel& model,
                             bool use_nystrom, std::size_t landmarks,
                             ForwardCache* cache) {
    const auto& cfg = model.config;
    if (tokens.rows == 0) throw DataError("attention_forward: empty bag");
    if (tokens.cols != cfg.input_dim)
        throw ShapeError("attention_forward: token dim " + std::to_string(tokens.cols) +
                         " != " + std::to_string(cfg.input_dim));
    const std::size_t n = tokens.rows;
    const std::size_t d_model = cfg.pooled_dim;
    const std::size_t heads = cfg.heads;
    const std::size_t head_dim = d_model / heads;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

    const Matrix projected = matmul(tokens, model.w_in);
    Matrix xhat(n + 1, d_model);
    for (std::size_t j = 0; j < d_model; ++j) xhat(0, j) = model.pool_token(0, j);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d_model; ++j) xhat(i + 1, j) = projected(i, j);

    const Matrix q = matmul(xhat, model.w_q);
    const Matrix k = matmul(xhat, model.w_k);
    const Matrix v = matmul(xhat, model.w_v);

    Matrix concat(n + 1, d_model);
    ForwardCache local;
    ForwardCache& fc = cache ? *cache : local;
    fc.attn.clear();
    fc.seg.clear();
    fc.f_block.clear();
    fc.landmark_attn.clear();
    fc.b_block.clear();
    fc.z.clear();
    fc.pinv_z_prev.clear();
    fc.pinv_y.clear();
    fc.pinv_t1.clear();
    fc.pinv_t2.clear();
    fc.bv.clear();
    fc.zbv.clear();

    for (std::size_t h = 0; h < heads; ++h) {
        const Matrix qh = slice_cols(q, h * head_dim, head_dim);
        const Matrix kh = slice_cols(k, h * head_dim, head_dim);
        const Matrix vh = slice_cols(v, h * head_dim, head_dim);
        if (!use_nystrom) {
            Matrix scores = scale(matmul(qh, transpose(kh)), inv_scale);
            Matrix attn = softmax_rows(scores);
            set_into_cols(concat, matmul(attn, vh), h * head_dim);
            fc.attn.push_back(std::move(attn));
        } else {
            const Matrix seg = segment_operator(n, landmarks, cfg.landmark_seed);
            const Matrix q_land = matmul(seg, qh);
            const Matrix k_land = matmul(seg, kh);
            Matrix f_block = softmax_rows(scale(matmul(qh, transpose(k_land)), inv_scale));
            Matrix land_attn =
                softmax_rows(scale(matmul(q_land, transpose(k_land)), inv_scale));
            Matrix b_block = softmax_rows(scale(matmul(q_land, transpose(kh)), inv_scale));
            PinvTrace tr = pinv_traced(land_attn, cfg.pinv_iters);
            Matrix bv = matmul(b_block, vh);
            Matrix zbv = matmul(tr.z, bv);
            set_into_cols(concat, matmul(f_block, zbv), h * head_dim);

            fc.seg.push_back(seg);
            fc.f_block.push_back(std::move(f_block));
            fc.landmark_attn.push_back(std::move(land_attn));
            fc.b_block.push_back(std::move(b_block));
            fc.z.push_back(tr.z);
            fc.pinv_z_prev.push_back(std::move(tr.z_prev));
            fc.pinv_y.push_back(std::move(tr.y));
            fc.pinv_t1.push_back(std::move(tr.t1));
            fc.pinv_t2.push_back(std::move(tr.t2));
            fc.bv.push_back(std::move(bv));
            fc.zbv.push_back(std::move(zbv));
        }
    }

    Matrix y = add(xhat, matmul(concat, model.w_o));

    AttentionOutput out;
    out.pooled.assign(y.row_ptr(0), y.row_ptr(0) + d_model);
    out.logits.assign(model.config.classes, 0.0);
    for (std::size_t c = 0; c < model.config.classes; ++c) {
        double acc = model.head_b(0, c);
        for (std::size_t j = 0; j < d_model; ++j) acc += out.pooled[j] * model.head_w(j, c);
        out.logits[c] = acc;
    }

    fc.xhat = std::move(xhat);
    fc.q = q;
    fc.k = k;
    fc.v = v;
    fc.concat_heads = std::move(concat);
    fc.y = std::move(y);
    fc.pooled = out.pooled;
    fc.logits = out.logits;
    fc.probs = softmax_vec(out.logits);
    return out;
}

} // namespace

std::size_t AggregatorModel::parameter_count() const {
    return w_in.data.size() + pool_token.data.size() + w_q.data.size() +
           w_k.data.size() + w_v.data.size() + w_o.data.size() + head_w.data.size() +
           head_b.data.size();
}

AggregatorModel init_aggregator(const AggregatorConfig& config, std::uint64_t seed) {
    if (config.pooled_dim % config.heads != 0)
        throw ShapeError("aggregator: pooled_dim must be divisible by heads");
    if (config.input_dim == 0) throw ShapeError("aggregator: input_dim must be > 0");

    SeededRng rng(mix_seed(seed, 0xA66ULL));
    // Attention scores start diffuse (small w_q/w_k); the value path uses
    // size-scaled Gaussians so the token signal reaches the logits at O(1)
    // magnitude under the fixed SGD schedule.
    const double score_sigma = 0.02;
    auto fan_sigma = [](std::size_t fan_in, std::size_t fan_out) {
        return std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
    };
    AggregatorModel m;
    m.config = config;
    m.w_in = Matrix::gaussian(config.input_dim, config.pooled_dim,
                              fan_sigma(config.input_dim, config.pooled_dim), rng);
    m.pool_token = Matrix::gaussian(1, config.pooled_dim, score_sigma, rng);
    m.w_q = Matrix::gaussian(config.pooled_dim, config.pooled_dim, score_sigma, rng);
    m.w_k = Matrix::gaussian(config.pooled_dim, config.pooled_dim, score_sigma, rng);
    m.w_v = Matrix::gaussian(config.pooled_dim, config.pooled_dim,
                             fan_sigma(config.pooled_dim, config.pooled_dim), rng);
    m.w_o = Matrix::gaussian(config.pooled_dim, config.pooled_dim,
                             fan_sigma(config.pooled_dim, config.pooled_dim), rng);
    m.head_w = Matrix::gaussian(config.pooled_dim, config.classes,
                                fan_sigma(config.pooled_dim, config.classes), rng);
    m.head_b = Matrix::zeros(1, config.classes);
    return m;
}

AggregatorGradients::AggregatorGradients(const AggregatorModel& model)
    : w_in(model.w_in.rows, model.w_in.cols),
      pool_token(model.pool_token.rows, model.pool_token.cols),
      w_q(model.w_q.rows, model.w_q.cols),
      w_k(model.w_k.rows, model.w_k.cols),
      w_v(model.w_v.rows, model.w_v.cols),
      w_o(model.w_o.rows, model.w_o.cols),
      head_w(model.head_w.rows, model.head_w.cols),
      head_b(model.head_b.rows, model.head_b.cols) {}

void AggregatorGradients::accumulate(const AggregatorGradients& other) {
    add_inplace(w_in, other.w_in);
    add_inplace(pool_token, other.pool_token);
    add_inplace(w_q, other.w_q);
    add_inplace(w_k, other.w_k);
    add_inplace(w_v, other.w_v);
    add_inplace(w_o, other.w_o);
    add_inplace(head_w, other.head_w);
    add_inplace(head_b, other.head_b);
}

void AggregatorGradients::scale_all(double s) {
    for (Matrix* m : {&w_in, &pool_token, &w_q, &w_k, &w_v, &w_o, &head_w, &head_b})
        for (auto& x : m->data) x *= s;
}

AttentionOutput attention_forward(const Matrix& tokens, const AggregatorModel& model,
                                  ForwardCache* cache) {
    return forward_impl(tokens, model, false, 0, cache);
}

AttentionOutput nystrom_attention_forward(const Matrix& tokens,
                                          const AggregatorModel& model,
                                          std::size_t landmarks, ForwardCache* cache) {
    if (landmarks == 0) throw DataError("nystrom_attention_forward: landmarks must be >= 1");
    return forward_impl(tokens, model, true, landmarks, cache);
}

double cross_entropy(const std::vector<double>& logits, int label) {
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double lse = 0.0;
    for (double v : logits) lse += std::exp(v - mx);
    return std::log(lse) + mx - logits[static_cast<std::size_t>(label)];
}

double backprop_bag(const Matrix& tokens, int label, double weight,
                    const AggregatorModel& model, AggregatorGradients& grads) {
    const auto& cfg = model.config;
    ForwardCache fc;
    const AttentionOutput out =
        cfg.use_nystrom ? nystrom_attention_forward(tokens, model, cfg.landmarks, &fc)
                        : attention_forward(tokens, model, &fc);
    const double loss = weight * cross_entropy(out.logits, label);

    const std::size_t n = tokens.rows;
    const std::size_t d_model = cfg.pooled_dim;
    const std::size_t heads = cfg.heads;
    const std::size_t head_dim = d_model / heads;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

    // Head: d logits = weight * (softmax - onehot).
    std::vector<double> dlogits(cfg.classes);
    for (std::size_t c = 0; c < cfg.classes; ++c)
        dlogits[c] = weight * (fc.probs[c] - (static_cast<int>(c) == label ? 1.0 : 0.0));

    for (std::size_t c = 0; c < cfg.classes; ++c) {
        grads.head_b(0, c) += dlogits[c];
        for (std::size_t j = 0; j < d_model; ++j)
            grads.head_w(j, c) += fc.pooled[j] * dlogits[c];
    }
    std::vector<double> dpooled(d_model, 0.0);
    for (std::size_t j = 0; j < d_model; ++j)
        for (std::size_t c = 0; c < cfg.classes; ++c)
            dpooled[j] += dlogits[c] * model.head_w(j, c);

    // Only the pool row of y feeds the head.
    Matrix dy(n + 1, d_model);
    for (std::size_t j = 0; j < d_model; ++j) dy(0, j) = dpooled[j];

    Matrix dxhat = dy; // residual branch
    Matrix dconcat = matmul(dy, transpose(model.w_o));
    add_inplace(grads.w_o, matmul(transpose(fc.concat_heads), dy));

    Matrix dq(n + 1, d_model), dk(n + 1, d_model), dv(n + 1, d_model);
    for (std::size_t h = 0; h < heads; ++h) {
        const Matrix qh = slice_cols(fc.q, h * head_dim, head_dim);
        const Matrix kh = slice_cols(fc.k, h * head_dim, head_dim);
        const Matrix vh = slice_cols(fc.v, h * head_dim, head_dim);
        const Matrix doh = slice_cols(dconcat, h * head_dim, head_dim);

        if (!cfg.use_nystrom) {
            const Matrix& attn = fc.attn[h];
            Matrix dattn = matmul(doh, transpose(vh));
            Matrix dvh = matmul(transpose(attn), doh);
            Matrix dscores = softmax_rows_backward(attn, dattn);
            Matrix dqh = scale(matmul(dscores, kh), inv_scale);
            Matrix dkh = scale(matmul(transpose(dscores), qh), inv_scale);
            add_into_cols(dq, dqh, h * head_dim);
            add_into_cols(dk, dkh, h * head_dim);
            add_into_cols(dv, dvh, h * head_dim);
        } else {
            const Matrix& seg = fc.seg[h];
            const Matrix& f_block = fc.f_block[h];
            const Matrix& land = fc.landmark_attn[h];
            const Matrix& b_block = fc.b_block[h];
            const Matrix& z = fc.z[h];
            const Matrix q_land = matmul(seg, qh);
            const Matrix k_land = matmul(seg, kh);

            Matrix df = matmul(doh, transpose(fc.zbv[h]));
            Matrix dzbv = matmul(transpose(f_block), doh);
            Matrix dz = matmul(dzbv, transpose(fc.bv[h]));
            Matrix dbv = matmul(transpose(z), dzbv);
            Matrix db = matmul(dbv, transpose(vh));
            Matrix dvh = matmul(transpose(b_block), dbv);

            PinvTrace tr;
            tr.z_prev = fc.pinv_z_prev[h];
            tr.y = fc.pinv_y[h];
            tr.t1 = fc.pinv_t1[h];
            tr.t2 = fc.pinv_t2[h];
            tr.z = z;
            Matrix dland = pinv_backward(tr, dz);

            Matrix ds_f = softmax_rows_backward(f_block, df);
            Matrix ds_land = softmax_rows_backward(land, dland);
            Matrix ds_b = softmax_rows_backward(b_block, db);

            Matrix dqh = scale(matmul(ds_f, k_land), inv_scale);
            Matrix dk_land = scale(matmul(transpose(ds_f), qh), inv_scale);
            Matrix dq_land = scale(matmul(ds_land, k_land), inv_scale);
            add_inplace(dk_land, scale(matmul(transpose(ds_land), q_land), inv_scale));
            add_inplace(dq_land, scale(matmul(ds_b, kh), inv_scale));
            Matrix dkh = scale(matmul(transpose(ds_b), q_land), inv_scale);

            add_inplace(dqh, matmul(transpose(seg), dq_land));
            add_inplace(dkh, matmul(transpose(seg), dk_land));

            add_into_cols(dq, dqh, h * head_dim);
            add_into_cols(dk, dkh, h * head_dim);
            add_into_cols(dv, dvh, h * head_dim);
        }
    }

    add_inplace(grads.w_q, matmul(transpose(fc.xhat), dq));
    add_inplace(grads.w_k, matmul(transpose(fc.xhat), dk));
    add_inplace(grads.w_v, matmul(transpose(fc.xhat), dv));

    add_inplace(dxhat, matmul(dq, transpose(model.w_q)));
    add_inplace(dxhat, matmul(dk, transpose(model.w_k)));
    add_inplace(dxhat, matmul(dv, transpose(model.w_v)));

    for (std::size_t j = 0; j < d_model; ++j) grads.pool_token(0, j) += dxhat(0, j);

    Matrix dprojected(n, d_model);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d_model; ++j) dprojected(i, j) = dxhat(i + 1, j);
    add_inplace(grads.w_in, matmul(transpose(tokens), dprojected));

    return loss;
}

TrainedAggregator train_aggregator(const std::vector<TokenBag>& bags,
                                   const AggregatorConfig& arch,
                                   const TrainConfig& config, bool use_nystrom) {
    if (bags.empty()) throw DataError("train_aggregator: no bags");
    int max_label = 0;
    for (const auto& bag : bags) {
        if (bag.tokens.rows == 0) throw DataError("train_aggregator: empty bag");
        if (bag.label < 0) throw DataError("train_aggregator: negative label");
        max_label = std::max(max_label, bag.label);
    }
    const std::size_t classes = static_cast<std::size_t>(max_label) + 1;
    if (classes < 2) throw DataError("train_aggregator: need at least 2 classes");

    AggregatorConfig cfg = arch;
    cfg.input_dim = bags.front().tokens.cols;
    cfg.classes = classes;
    cfg.use_nystrom = use_nystrom;

    TrainedAggregator result;
    result.model = init_aggregator(cfg, config.seed);
    AggregatorModel& model = result.model;

    // Fold a per-dimension RMS rescaling of the raw token features into the
    // input projection; descriptor dimensions live on wildly different raw
    // scales (histogram mass vs intensity variance). The same scaling
    // preconditions the w_in gradient below, which makes the updates plain
    // SGD on the standardized-token parameterization.
    std::vector<double> token_rms(cfg.input_dim, 1.0);
    {
        std::vector<double> sq(cfg.input_dim, 0.0);
        std::size_t total = 0;
        for (const auto& bag : bags) {
            for (std::size_t i = 0; i < bag.tokens.rows; ++i)
                for (std::size_t j = 0; j < cfg.input_dim; ++j)
                    sq[j] += bag.tokens(i, j) * bag.tokens(i, j);
            total += bag.tokens.rows;
        }
        for (std::size_t j = 0; j < cfg.input_dim; ++j) {
            token_rms[j] =
                std::max(std::sqrt(sq[j] / static_cast<double>(total)), 1e-8);
            for (std::size_t c = 0; c < cfg.pooled_dim; ++c)
                model.w_in(j, c) /= token_rms[j];
        }
    }

    const std::size_t nbags = bags.size();
    auto mean_loss_now = [&]() {
        double total = 0.0;
        for (const auto& bag : bags) {
            const AttentionOutput out =
                use_nystrom
                    ? nystrom_attention_forward(bag.tokens, model, cfg.landmarks)
                    : attention_forward(bag.tokens, model);
            total += cross_entropy(out.logits, bag.label);
        }
        return total / static_cast<double>(nbags);
    };
    result.trace.push_back({-1, learning_rate_at(config, 0), mean_loss_now()});

    AggregatorGradients velocity(model);
    std::vector<std::size_t> order(nbags);
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = learning_rate_at(config, epoch);
        SeededRng shuffle_rng(mix_seed(config.seed, 0xE90C5ULL + epoch));
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        for (std::size_t batch_start = 0; batch_start < nbags;
             batch_start += config.batch_size) {
            const std::size_t batch_end =
                std::min(nbags, batch_start + config.batch_size);
            const std::size_t bcount = batch_end - batch_start;
            const double w = 1.0 / static_cast<double>(bcount);

            // Per-bag gradients in parallel, reduced in fixed order.
            std::vector<AggregatorGradients> parts;
            parts.reserve(bcount);
            for (std::size_t i = 0; i < bcount; ++i) parts.emplace_back(model);
            std::vector<double> losses(bcount, 0.0);
            const std::ptrdiff_t pcount = static_cast<std::ptrdiff_t>(bcount);
#pragma omp parallel for schedule(dynamic)
            for (std::ptrdiff_t i = 0; i < pcount; ++i) {
                const TokenBag& bag = bags[order[batch_start + static_cast<std::size_t>(i)]];
                losses[static_cast<std::size_t>(i)] =
                    backprop_bag(bag.tokens, bag.label, w, model,
                                 parts[static_cast<std::size_t>(i)]);
            }
            AggregatorGradients grads(model);
            for (std::size_t i = 0; i < bcount; ++i) grads.accumulate(parts[i]);
            for (double l : losses) epoch_loss += l * static_cast<double>(bcount);

            for (std::size_t j = 0; j < cfg.input_dim; ++j) {
                const double precond = 1.0 / (token_rms[j] * token_rms[j]);
                for (std::size_t c = 0; c < cfg.pooled_dim; ++c)
                    grads.w_in(j, c) *= precond;
            }

            // SGD with momentum: v <- mu v + g, theta <- theta - lr v.
            Matrix* g[] = {&grads.w_in, &grads.pool_token, &grads.w_q, &grads.w_k,
                           &grads.w_v,  &grads.w_o,        &grads.head_w, &grads.head_b};
            Matrix* vel[] = {&velocity.w_in, &velocity.pool_token, &velocity.w_q,
                             &velocity.w_k,  &velocity.w_v,        &velocity.w_o,
                             &velocity.head_w, &velocity.head_b};
            Matrix* par[] = {&model.w_in, &model.pool_token, &model.w_q, &model.w_k,
                             &model.w_v,  &model.w_o,        &model.head_w, &model.head_b};
            for (int t = 0; t < 8; ++t) {
                for (std::size_t j = 0; j < g[t]->data.size(); ++j) {
                    vel[t]->data[j] =
                        config.momentum * vel[t]->data[j] + g[t]->data[j];
                    par[t]->data[j] -= lr * vel[t]->data[j];
                }
            }
        }
        result.trace.push_back({static_cast<long>(epoch), lr,
                                epoch_loss / static_cast<double>(nbags)});
    }
    return result;
}

double grad_check(const AggregatorModel& model, const std::vector<TokenBag>& batch,
                  double eps, std::size_t min_coords) {
    if (eps <= 0.0) throw DataError("grad_check: eps must be > 0");
    if (batch.empty()) throw DataError("grad_check: empty batch");

    AggregatorModel work = model;
    const double w = 1.0 / static_cast<double>(batch.size());

    AggregatorGradients analytic(work);
    for (const auto& bag : batch) backprop_bag(bag.tokens, bag.label, w, work, analytic);

    auto batch_loss = [&]() {
        double total = 0.0;
        for (const auto& bag : batch) {
            const AttentionOutput out =
                work.config.use_nystrom
                    ? nystrom_attention_forward(bag.tokens, work, work.config.landmarks)
                    : attention_forward(bag.tokens, work);
            total += w * cross_entropy(out.logits, bag.label);
        }
        return total;
    };

    Matrix* params[] = {&work.w_in, &work.pool_token, &work.w_q, &work.w_k,
                        &work.w_v,  &work.w_o,        &work.head_w, &work.head_b};
    Matrix* grads[] = {&analytic.w_in, &analytic.pool_token, &analytic.w_q,
                       &analytic.w_k,  &analytic.w_v,        &analytic.w_o,
                       &analytic.head_w, &analytic.head_b};

    // Coordinates much smaller than the dominant gradient cannot be measured
    // by central differences, so the relative error is floored at a fraction
    // of the gradient scale.
    double gmax = 0.0;
    for (int t = 0; t < 8; ++t)
        for (double g : grads[t]->data) gmax = std::max(gmax, std::fabs(g));
    const double floor = std::max(1e-8, 1e-3 * gmax);

    const std::size_t total = work.parameter_count();
    SeededRng rng(mix_seed(0xC0FFEEULL, total));
    double max_rel = 0.0;
    for (int t = 0; t < 8; ++t) {
        const std::size_t size = params[t]->data.size();
        std::size_t want = (min_coords * size + total - 1) / total;
        want = std::max(want, std::min<std::size_t>(size, 4));
        want = std::min(want, size);

        std::vector<std::size_t> coords(size);
        std::iota(coords.begin(), coords.end(), 0);
        if (want < size) rng.shuffle(coords);

        for (std::size_t c = 0; c < want; ++c) {
            const std::size_t idx = coords[c];
            const double saved = params[t]->data[idx];
            params[t]->data[idx] = saved + eps;
            const double lp = batch_loss();
            params[t]->data[idx] = saved - eps;
            const double lm = batch_loss();
            params[t]->data[idx] = saved;

            const double numeric = (lp - lm) / (2.0 * eps);
            const double a = grads[t]->data[idx];
            const double denom = std::max({std::fabs(a), std::fabs(numeric), floor});
            max_rel = std::max(max_rel, std::fabs(a - numeric) / denom);
        }
    }
    return max_rel;
}

FeatureVector aggregate(const Matrix& tokens, const AggregatorModel& model,
                        Modality modality) {
    const AttentionOutput out =
        model.config.use_nystrom
            ? nystrom_attention_forward(tokens, model, model.config.landmarks)
            : attention_forward(tokens, model);
    FeatureVector fv;
    fv.modality = modality;
    fv.values = out.pooled;
    return fv;
}

void save_aggregator(const std::string& path, const AggregatorModel& model) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("aggregator model: cannot write " + path);
    out.write("FECTAGG1", 8);
    write_u32_le(out, static_cast<std::uint32_t>(model.config.input_dim));
    write_u32_le(out, static_cast<std::uint32_t>(model.config.pooled_dim));
    write_u32_le(out, static_cast<std::uint32_t>(model.config.heads));
    write_u32_le(out, static_cast<std::uint32_t>(model.config.classes));
    for (const Matrix* m : {&model.w_in, &model.pool_token, &model.w_q, &model.w_k,
                            &model.w_v, &model.w_o, &model.head_w, &model.head_b})
        for (double v : m->data) write_f64_le(out, v);
}

AggregatorModel load_aggregator(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("aggregator model: cannot open " + path);
    expect_magic(in, "FECTAGG1", "aggregator model " + path);

    AggregatorConfig cfg;
    cfg.input_dim = read_u32_le(in);
    cfg.pooled_dim = read_u32_le(in);
    cfg.heads = read_u32_le(in);
    cfg.classes = read_u32_le(in);
    if (cfg.heads == 0 || cfg.pooled_dim % cfg.heads != 0)
        throw ParseError("aggregator model " + path + ": inconsistent dims");

    AggregatorModel m;
    m.config = cfg;
    m.w_in = Matrix(cfg.input_dim, cfg.pooled_dim);
    m.pool_token = Matrix(1, cfg.pooled_dim);
    m.w_q = Matrix(cfg.pooled_dim, cfg.pooled_dim);
    m.w_k = Matrix(cfg.pooled_dim, cfg.pooled_dim);
    m.w_v = Matrix(cfg.pooled_dim, cfg.pooled_dim);
    m.w_o = Matrix(cfg.pooled_dim, cfg.pooled_dim);
    m.head_w = Matrix(cfg.pooled_dim, cfg.classes);
    m.head_b = Matrix(1, cfg.classes);
    for (Matrix* t : {&m.w_in, &m.pool_token, &m.w_q, &m.w_k, &m.w_v, &m.w_o,
                      &m.head_w, &m.head_b})
        for (auto& v : t->data) v = read_f64_le(in);
    return m;
}

void save_loss_trace(const std::string& path, const std::vector<LossTraceRow>& trace) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("loss trace: cannot write " + path);
    out << "epoch,lr,mean_loss\n";
    char buf[96];
    for (const auto& row : trace) {
        std::snprintf(buf, sizeof(buf), "%ld,%.9f,%.9f\n", row.epoch, row.lr,
                      row.mean_loss);
        out << buf;
    }
}

} // namespace fect
