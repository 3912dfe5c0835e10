#include "fect/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "fect/errors.hpp"

namespace fect {

namespace {

// Moore neighborhood in clockwise order (row axis points down).
constexpr int kDr[8] = {0, -1, -1, -1, 0, 1, 1, 1};
constexpr int kDc[8] = {-1, -1, 0, 1, 1, 1, 0, -1};

double step_length(const PixelCoord& a, const PixelCoord& b) {
    return (a.row != b.row && a.col != b.col) ? std::sqrt(2.0) : 1.0;
}

} // namespace

LabelMap connected_components(const BinaryMask& mask, int connectivity) {
    if (connectivity != 4 && connectivity != 8)
        throw DataError("connected_components: connectivity must be 4 or 8");

    LabelMap lm;
    lm.height = mask.height;
    lm.width = mask.width;
    lm.labels.assign(mask.height * mask.width, 0);

    const int ndirs = connectivity;
    // 4-neighbors first so the same table serves both connectivities.
    static constexpr int dr[8] = {-1, 1, 0, 0, -1, -1, 1, 1};
    static constexpr int dc[8] = {0, 0, -1, 1, -1, 1, -1, 1};

    std::vector<std::size_t> stack;
    for (std::size_t start = 0; start < mask.values.size(); ++start) {
        if (mask.values[start] == 0 || lm.labels[start] != 0) continue;
        const int label = ++lm.count;
        stack.clear();
        stack.push_back(start);
        lm.labels[start] = label;
        while (!stack.empty()) {
            const std::size_t idx = stack.back();
            stack.pop_back();
            const long r = static_cast<long>(idx / mask.width);
            const long c = static_cast<long>(idx % mask.width);
            for (int d = 0; d < ndirs; ++d) {
                const long nr = r + dr[d], nc = c + dc[d];
                if (!mask.in_bounds(nr, nc)) continue;
                const std::size_t nidx =
                    static_cast<std::size_t>(nr) * mask.width + static_cast<std::size_t>(nc);
                if (mask.values[nidx] != 0 && lm.labels[nidx] == 0) {
                    lm.labels[nidx] = label;
                    stack.push_back(nidx);
                }
            }
        }
    }
    return lm;
}

BinaryMask component_mask(const LabelMap& lm, int label) {
    BinaryMask out(lm.height, lm.width);
    for (std::size_t i = 0; i < lm.labels.size(); ++i)
        out.values[i] = lm.labels[i] == label ? 1 : 0;
    return out;
}

namespace {

struct TraceState {
    PixelCoord pixel;
    int back; // clockwise index of the backtrack neighbor
};

// Clockwise scan from the neighbor after the backtrack. Returns the next
// boundary pixel and its backtrack index, or false for an isolated pixel.
bool moore_step(const BinaryMask& mask, const TraceState& s, TraceState& out) {
    auto fg = [&](long r, long c) {
        return mask.in_bounds(r, c) &&
               mask.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) != 0;
    };
    int prev_bg = s.back;
    for (int k = 1; k <= 8; ++k) {
        const int d = (s.back + k) % 8;
        const PixelCoord cand{s.pixel.row + kDr[d], s.pixel.col + kDc[d]};
        if (fg(cand.row, cand.col)) {
            const PixelCoord bg_pix{s.pixel.row + kDr[prev_bg], s.pixel.col + kDc[prev_bg]};
            int back = 0;
            for (int j = 0; j < 8; ++j) {
                if (cand.row + kDr[j] == bg_pix.row && cand.col + kDc[j] == bg_pix.col) {
                    back = j;
                    break;
                }
            }
            out = TraceState{cand, back};
            return true;
        }
        prev_bg = d;
    }
    return false;
}

} // namespace

Contour trace_contour(const BinaryMask& mask) {
    // Start pixel: top-most then left-most foreground pixel. Its west
    // neighbor is background, which seeds the backtrack direction.
    long sr = -1, sc = -1;
    for (std::size_t i = 0; i < mask.values.size(); ++i) {
        if (mask.values[i] != 0) {
            sr = static_cast<long>(i / mask.width);
            sc = static_cast<long>(i % mask.width);
            break;
        }
    }
    if (sr < 0) throw DataError("trace_contour: empty component");

    Contour contour;
    const PixelCoord start{sr, sc};
    contour.points.push_back(start);

    TraceState state{start, 0};
    TraceState first;
    if (!moore_step(mask, state, first)) {
        contour.perimeter = 0.0;
        return contour; // single isolated pixel
    }
    contour.points.push_back(first.pixel);
    state = first;

    const std::size_t max_steps = 4 * mask.values.size() + 8;
    for (std::size_t step = 0; step < max_steps; ++step) {
        TraceState next;
        if (!moore_step(mask, state, next)) break;
        if (next.pixel == start) {
            // Stop when re-entering the start would repeat the first move.
            TraceState after;
            if (moore_step(mask, next, after) && after.pixel == first.pixel) break;
        }
        contour.points.push_back(next.pixel);
        state = next;
    }

    double per = 0.0;
    if (contour.points.size() > 1) {
        for (std::size_t i = 0; i + 1 < contour.points.size(); ++i)
            per += step_length(contour.points[i], contour.points[i + 1]);
        per += step_length(contour.points.back(), contour.points.front());
    }
    contour.perimeter = per;
    return contour;
}

std::vector<PixelCoord> sample_contour_uniform(const Contour& contour, double spacing,
                                               std::size_t min_points,
                                               std::size_t max_points) {
    if (spacing <= 0.0) throw DataError("sample_contour_uniform: spacing must be > 0");
    if (contour.points.empty())
        throw DataError("sample_contour_uniform: empty contour");

    const double perimeter = contour.perimeter;
    std::size_t count = perimeter > 0.0
                            ? static_cast<std::size_t>(std::floor(perimeter / spacing))
                            : 0;
    count = std::clamp(count, min_points, max_points);

    const std::size_t m = contour.points.size();
    if (m == 1 || perimeter == 0.0)
        return std::vector<PixelCoord>(count, contour.points.front());

    std::vector<double> arc(m, 0.0);
    for (std::size_t i = 1; i < m; ++i)
        arc[i] = arc[i - 1] + step_length(contour.points[i - 1], contour.points[i]);

    const double interval = perimeter / static_cast<double>(count);

    // Two vertex candidates per target (floor and ceil along the arc); a
    // small DP picks the combination minimizing the worst gap deviation so
    // consecutive gaps stay within the uniformity bound.
    struct Candidate {
        std::size_t vertex;
        double arc_pos; // unwrapped, may reach perimeter for the last ceil
    };
    std::vector<std::array<Candidate, 2>> cand(count);
    for (std::size_t j = 0; j < count; ++j) {
        const double target = (static_cast<double>(j) + 0.5) * interval;
        std::size_t lo = 0;
        while (lo + 1 < m && arc[lo + 1] <= target) ++lo;
        const std::size_t hi = (lo + 1) % m;
        const double hi_arc =
            lo + 1 < m ? arc[lo + 1]
                       : perimeter; // wraps to the start vertex
        cand[j][0] = {lo, arc[lo]};
        cand[j][1] = {hi, hi_arc};
    }

    std::vector<PixelCoord> out;
    out.reserve(count);
    if (count == 1) {
        // single sample: nearest of the two candidates
        const double target = 0.5 * interval;
        const bool pick_hi = std::fabs(cand[0][1].arc_pos - target) <
                             std::fabs(cand[0][0].arc_pos - target);
        out.push_back(contour.points[cand[0][pick_hi ? 1 : 0].vertex]);
        return out;
    }

    double best_score = 1e300;
    std::vector<int> best_choice(count, 0);
    std::vector<std::array<double, 2>> dp(count);
    std::vector<std::array<int, 2>> parent(count);
    for (int first = 0; first < 2; ++first) {
        dp[0] = {1e300, 1e300};
        dp[0][static_cast<std::size_t>(first)] = 0.0;
        for (std::size_t j = 1; j < count; ++j) {
            for (int c = 0; c < 2; ++c) {
                double best = 1e300;
                int arg = 0;
                for (int p = 0; p < 2; ++p) {
                    if (dp[j - 1][static_cast<std::size_t>(p)] >= 1e300) continue;
                    const double gap =
                        cand[j][static_cast<std::size_t>(c)].arc_pos -
                        cand[j - 1][static_cast<std::size_t>(p)].arc_pos;
                    const double score = std::max(dp[j - 1][static_cast<std::size_t>(p)],
                                                  std::fabs(gap - interval));
                    if (score < best) {
                        best = score;
                        arg = p;
                    }
                }
                dp[j][static_cast<std::size_t>(c)] = best;
                parent[j][static_cast<std::size_t>(c)] = arg;
            }
        }
        for (int last = 0; last < 2; ++last) {
            const double wrap = cand[0][static_cast<std::size_t>(first)].arc_pos +
                                perimeter -
                                cand[count - 1][static_cast<std::size_t>(last)].arc_pos;
            const double score = std::max(dp[count - 1][static_cast<std::size_t>(last)],
                                          std::fabs(wrap - interval));
            if (score < best_score) {
                best_score = score;
                std::vector<int> choice(count);
                choice[count - 1] = last;
                for (std::size_t j = count - 1; j > 0; --j)
                    choice[j - 1] = parent[j][static_cast<std::size_t>(choice[j])];
                best_choice = std::move(choice);
            }
        }
    }

    for (std::size_t j = 0; j < count; ++j)
        out.push_back(contour.points[cand[j][static_cast<std::size_t>(best_choice[j])].vertex]);
    return out;
}

GrayImage crop_patch(const GrayImage& image, PixelCoord center, std::size_t size) {
    if (size < 1) throw DataError("crop_patch: size must be >= 1");
    GrayImage patch(size, size, 0);
    const long half = static_cast<long>(size) / 2;
    const long top = center.row - half;
    const long left = center.col - half;
    for (std::size_t r = 0; r < size; ++r) {
        const long sr = top + static_cast<long>(r);
        if (sr < 0 || sr >= static_cast<long>(image.height)) continue;
        for (std::size_t c = 0; c < size; ++c) {
            const long sc = left + static_cast<long>(c);
            if (sc < 0 || sc >= static_cast<long>(image.width)) continue;
            patch.at(r, c) = image.at(static_cast<std::size_t>(sr),
                                      static_cast<std::size_t>(sc));
        }
    }
    return patch;
}

double contour_turning_variance(const Contour& contour, std::size_t step) {
    const std::size_t m = contour.points.size();
    if (m < 2 * step + 1) return 0.0;

    std::vector<double> angles;
    angles.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        const PixelCoord& prev = contour.points[(i + m - step) % m];
        const PixelCoord& here = contour.points[i];
        const PixelCoord& next = contour.points[(i + step) % m];
        const double ax = static_cast<double>(here.col - prev.col);
        const double ay = static_cast<double>(here.row - prev.row);
        const double bx = static_cast<double>(next.col - here.col);
        const double by = static_cast<double>(next.row - here.row);
        const double cross = ax * by - ay * bx;
        const double dot = ax * bx + ay * by;
        angles.push_back(std::atan2(cross, dot));
    }
    double mean = 0.0;
    for (double a : angles) mean += a;
    mean /= static_cast<double>(angles.size());
    double var = 0.0;
    for (double a : angles) var += (a - mean) * (a - mean);
    return var / static_cast<double>(angles.size());
}

} // namespace fect
