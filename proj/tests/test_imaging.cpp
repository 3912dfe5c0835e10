#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "fect/errors.hpp"
#include "fect/geometry.hpp"
#include "fect/image.hpp"
#include "fect/rng.hpp"

using namespace fect;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& header,
                                   const std::vector<std::uint8_t>& payload) {
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

// Oracle: label map by brute-force repeated flood fill over pixel pairs.
int oracle_component_count(const BinaryMask& mask, int connectivity) {
    std::vector<int> labels(mask.values.size(), 0);
    int count = 0;
    const int n4r[] = {-1, 1, 0, 0}, n4c[] = {0, 0, -1, 1};
    const int n8r[] = {-1, 1, 0, 0, -1, -1, 1, 1}, n8c[] = {0, 0, -1, 1, -1, 1, -1, 1};
    const int* dr = connectivity == 4 ? n4r : n8r;
    const int* dc = connectivity == 4 ? n4c : n8c;
    for (std::size_t i = 0; i < mask.values.size(); ++i) {
        if (!mask.values[i] || labels[i]) continue;
        ++count;
        std::vector<std::size_t> stack{i};
        labels[i] = count;
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            const long r = static_cast<long>(p / mask.width);
            const long c = static_cast<long>(p % mask.width);
            for (int d = 0; d < connectivity; ++d) {
                const long nr = r + dr[d], nc = c + dc[d];
                if (!mask.in_bounds(nr, nc)) continue;
                const std::size_t np = static_cast<std::size_t>(nr) * mask.width +
                                       static_cast<std::size_t>(nc);
                if (mask.values[np] && !labels[np]) {
                    labels[np] = count;
                    stack.push_back(np);
                }
            }
        }
    }
    return count;
}

BinaryMask random_mask(std::size_t h, std::size_t w, double density, SeededRng& rng) {
    BinaryMask m(h, w);
    for (auto& v : m.values) v = rng.next_double() < density ? 1 : 0;
    return m;
}

// Fat blob without 1-px necks: union of random filled disks.
BinaryMask disk_blob(std::size_t size, SeededRng& rng) {
    BinaryMask m(size, size);
    const int ndisks = 1 + static_cast<int>(rng.next_below(3));
    const double c0 = static_cast<double>(size) / 2.0;
    double cy = c0, cx = c0;
    for (int d = 0; d < ndisks; ++d) {
        const double radius = rng.uniform(4.0, static_cast<double>(size) / 5.0);
        for (long r = 0; r < static_cast<long>(size); ++r)
            for (long c = 0; c < static_cast<long>(size); ++c) {
                const double dy = static_cast<double>(r) - cy;
                const double dx = static_cast<double>(c) - cx;
                if (dy * dy + dx * dx <= radius * radius)
                    m.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = 1;
            }
        cy += rng.uniform(-radius / 2, radius / 2);
        cx += rng.uniform(-radius / 2, radius / 2);
        cy = std::min(std::max(cy, 8.0), static_cast<double>(size) - 8.0);
        cx = std::min(std::max(cx, 8.0), static_cast<double>(size) - 8.0);
    }
    return m;
}

} // namespace

TEST_CASE("netpbm p5 round-trip and hand-built payload") {
    const auto input = bytes_of("P5\n2 2\n255\n", {0, 255, 0, 255});
    const GrayImage img = parse_netpbm(input);
    CHECK(img.height == 2);
    CHECK(img.width == 2);
    CHECK(img.at(0, 0) == 0);
    CHECK(img.at(0, 1) == 255);
    CHECK(img.at(1, 0) == 0);
    CHECK(img.at(1, 1) == 255);

    const auto serialized = serialize_p5(img);
    const GrayImage again = parse_netpbm(serialized);
    CHECK(again.pixels == img.pixels);
    CHECK(serialize_p5(again) == serialized);
}

TEST_CASE("netpbm p6 converts to gray") {
    const auto input = bytes_of("P6\n1 1\n255\n", {255, 0, 0});
    const GrayImage img = parse_netpbm(input);
    CHECK(img.at(0, 0) == 76); // luminance of pure red
}

TEST_CASE("netpbm rejections name the problem") {
    CHECK_THROWS_WITH_AS(parse_netpbm(bytes_of("P7\n1 1\n255\n", {0})),
                         doctest::Contains("unsupported magic"), ParseError);
    CHECK_THROWS_WITH_AS(parse_netpbm(bytes_of("P5\n2 2\n255\n", {0, 1})),
                         doctest::Contains("truncated"), ParseError);
    CHECK_THROWS_AS(parse_netpbm(bytes_of("P5\n1 1\n65535\n", {0, 0})), ParseError);
}

TEST_CASE("mask threshold treats any nonzero as foreground") {
    GrayImage img(1, 3);
    img.pixels = {0, 1, 255};
    const BinaryMask m = threshold_to_mask(img);
    CHECK(m.values == std::vector<std::uint8_t>{0, 1, 1});
}

TEST_CASE("connected components: empty and single blob") {
    BinaryMask empty(8, 8);
    CHECK(connected_components(empty, 8).count == 0);

    BinaryMask rect(8, 8);
    for (std::size_t r = 2; r < 6; ++r)
        for (std::size_t c = 1; c < 7; ++c) rect.at(r, c) = 1;
    const LabelMap lm = connected_components(rect, 8);
    CHECK(lm.count == 1);
    for (std::size_t r = 2; r < 6; ++r)
        for (std::size_t c = 1; c < 7; ++c) CHECK(lm.at(r, c) == 1);
}

TEST_CASE("diagonal touch merges under 8 but not 4 connectivity") {
    BinaryMask m(2, 2);
    m.at(0, 0) = 1;
    m.at(1, 1) = 1;
    CHECK(connected_components(m, 8).count == 1);
    CHECK(connected_components(m, 4).count == 2);
}

TEST_CASE("connected components agree with the flood-fill oracle") {
    SeededRng rng(101);
    for (int t = 0; t < 200; ++t) {
        const BinaryMask m = random_mask(16, 16, rng.uniform(0.2, 0.7), rng);
        for (int connectivity : {4, 8}) {
            const LabelMap lm = connected_components(m, connectivity);
            CHECK(lm.count == oracle_component_count(m, connectivity));
            //

            // Same-label iff same oracle component: verify via a relabel map.
            std::vector<int> oracle_of_label(static_cast<std::size_t>(lm.count) + 1, -1);
            bool consistent = true;
            std::vector<int> olabels(m.values.size(), 0);
            {
                // rebuild oracle labels inline
                int ocount = 0;
                const int n4r[] = {-1, 1, 0, 0}, n4c[] = {0, 0, -1, 1};
                const int n8r[] = {-1, 1, 0, 0, -1, -1, 1, 1},
                          n8c[] = {0, 0, -1, 1, -1, 1, -1, 1};
                const int* dr = connectivity == 4 ? n4r : n8r;
                const int* dc = connectivity == 4 ? n4c : n8c;
                for (std::size_t i = 0; i < m.values.size(); ++i) {
                    if (!m.values[i] || olabels[i]) continue;
                    ++ocount;
                    std::vector<std::size_t> stack{i};
                    olabels[i] = ocount;
                    while (!stack.empty()) {
                        const std::size_t p = stack.back();
                        stack.pop_back();
                        const long r = static_cast<long>(p / m.width);
                        const long c = static_cast<long>(p % m.width);
                        for (int d = 0; d < connectivity; ++d) {
                            const long nr = r + dr[d], nc = c + dc[d];
                            if (!m.in_bounds(nr, nc)) continue;
                            const std::size_t np = static_cast<std::size_t>(nr) * m.width +
                                                   static_cast<std::size_t>(nc);
                            if (m.values[np] && !olabels[np]) {
                                olabels[np] = ocount;
                                stack.push_back(np);
                            }
                        }
                    }
                }
            }
            for (std::size_t i = 0; i < m.values.size(); ++i) {
                if (!m.values[i]) {
                    consistent = consistent && lm.labels[i] == 0;
                    continue;
                }
                int& expected = oracle_of_label[static_cast<std::size_t>(lm.labels[i])];
                if (expected == -1) expected = olabels[i];
                consistent = consistent && expected == olabels[i];
            }
            CHECK(consistent);
        }
    }
}

TEST_CASE("contour of a single pixel") {
    BinaryMask m(5, 5);
    m.at(2, 3) = 1;
    const Contour c = trace_contour(m);
    REQUIRE(c.points.size() == 1);
    CHECK(c.points[0] == PixelCoord{2, 3});
    CHECK(c.perimeter == 0.0);
}

TEST_CASE("contour of a filled 3x3 square is the 8 border pixels clockwise") {
    BinaryMask m(5, 5);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 3; ++c) m.at(r, c) = 1;
    const Contour c = trace_contour(m);
    const std::vector<PixelCoord> expected = {{0, 0}, {0, 1}, {0, 2}, {1, 2},
                                              {2, 2}, {2, 1}, {2, 0}, {1, 0}};
    REQUIRE(c.points.size() == 8);
    for (std::size_t i = 0; i < 8; ++i) CHECK(c.points[i] == expected[i]);
    CHECK(c.perimeter == doctest::Approx(8.0));
}

TEST_CASE("contour points are boundary pixels forming a closed 8-connected loop") {
    SeededRng rng(7);
    for (int t = 0; t < 30; ++t) {
        const BinaryMask blob = disk_blob(48, rng);
        REQUIRE(connected_components(blob, 8).count == 1);
        const Contour c = trace_contour(blob);
        REQUIRE(c.points.size() >= 4);
        for (std::size_t i = 0; i < c.points.size(); ++i) {
            const PixelCoord& p = c.points[i];
            CHECK(blob.at(static_cast<std::size_t>(p.row),
                          static_cast<std::size_t>(p.col)) == 1);
            // boundary: has a background 4-neighbor or touches the border
            bool boundary = p.row == 0 || p.col == 0 ||
                            p.row == static_cast<long>(blob.height) - 1 ||
                            p.col == static_cast<long>(blob.width) - 1;
            const long n4r[] = {-1, 1, 0, 0}, n4c[] = {0, 0, -1, 1};
            for (int d = 0; d < 4 && !boundary; ++d) {
                const long nr = p.row + n4r[d], nc = p.col + n4c[d];
                if (blob.in_bounds(nr, nc) &&
                    blob.at(static_cast<std::size_t>(nr), static_cast<std::size_t>(nc)) == 0)
                    boundary = true;
            }
            CHECK(boundary);
            const PixelCoord& q = c.points[(i + 1) % c.points.size()];
            CHECK(std::max(std::labs(p.row - q.row), std::labs(p.col - q.col)) <= 1);
        }
    }
}

TEST_CASE("contour visits every boundary pixel of fat blobs exactly once") {
    SeededRng rng(13);
    for (int t = 0; t < 20; ++t) {
        const BinaryMask blob = disk_blob(40, rng);
        const Contour c = trace_contour(blob);

        std::set<std::pair<long, long>> boundary;
        for (long r = 0; r < 40; ++r)
            for (long cc = 0; cc < 40; ++cc) {
                if (!blob.at(static_cast<std::size_t>(r), static_cast<std::size_t>(cc)))
                    continue;
                bool edge = r == 0 || cc == 0 || r == 39 || cc == 39;
                const long n4r[] = {-1, 1, 0, 0}, n4c[] = {0, 0, -1, 1};
                for (int d = 0; d < 4 && !edge; ++d) {
                    const long nr = r + n4r[d], nc = cc + n4c[d];
                    if (blob.in_bounds(nr, nc) &&
                        blob.at(static_cast<std::size_t>(nr),
                                static_cast<std::size_t>(nc)) == 0)
                        edge = true;
                }
                if (edge) boundary.insert({r, cc});
            }
        std::set<std::pair<long, long>> traced;
        for (const auto& p : c.points) traced.insert({p.row, p.col});
        CHECK(traced.size() == c.points.size()); // no revisits
        CHECK(traced == boundary);
    }
}

TEST_CASE("uniform sampling of a square hits the side midpoints") {
    BinaryMask m(13, 13);
    for (std::size_t r = 1; r <= 11; ++r)
        for (std::size_t c = 1; c <= 11; ++c) m.at(r, c) = 1;
    const Contour contour = trace_contour(m);
    CHECK(contour.perimeter == doctest::Approx(40.0));

    const auto pts = sample_contour_uniform(contour, 10.0, 1, 64);
    REQUIRE(pts.size() == 4);
    // One point per side, near its midpoint.
    for (const auto& p : pts) {
        const bool on_side = p.row == 1 || p.row == 11 || p.col == 1 || p.col == 11;
        CHECK(on_side);
        const double dr = static_cast<double>(p.row) - 6.0;
        const double dc = static_cast<double>(p.col) - 6.0;
        CHECK((std::fabs(dr) < 2.0 || std::fabs(dc) < 2.0));
    }
}

TEST_CASE("sampling clamps to min_points when spacing exceeds the perimeter") {
    BinaryMask m(6, 6);
    for (std::size_t r = 1; r <= 3; ++r)
        for (std::size_t c = 1; c <= 3; ++c) m.at(r, c) = 1;
    const Contour contour = trace_contour(m);
    const auto pts = sample_contour_uniform(contour, 1000.0, 8, 64);
    CHECK(pts.size() == 8);
}

TEST_CASE("sampled points are contour members with near-uniform arc gaps") {
    SeededRng rng(29);
    const double spacing = 8.0;
    for (int t = 0; t < 40; ++t) {
        const BinaryMask blob = disk_blob(48, rng);
        const Contour contour = trace_contour(blob);
        if (contour.perimeter < 4.0 * spacing) continue;
        const auto pts = sample_contour_uniform(contour, spacing, 4, 64);

        std::set<std::pair<long, long>> members;
        for (const auto& p : contour.points) members.insert({p.row, p.col});
        for (const auto& p : pts) CHECK(members.count({p.row, p.col}) == 1);

        // Arc positions of the chosen points, in contour order.
        std::vector<double> arc(contour.points.size(), 0.0);
        for (std::size_t i = 1; i < contour.points.size(); ++i) {
            const auto& a = contour.points[i - 1];
            const auto& b = contour.points[i];
            arc[i] = arc[i - 1] + ((a.row != b.row && a.col != b.col) ? std::sqrt(2.0) : 1.0);
        }
        std::vector<double> positions;
        std::size_t cursor = 0;
        for (const auto& p : pts) {
            while (contour.points[cursor].row != p.row ||
                   contour.points[cursor].col != p.col)
                ++cursor;
            positions.push_back(arc[cursor]);
        }
        double min_gap = 1e300, max_gap = 0.0;
        for (std::size_t i = 0; i < positions.size(); ++i) {
            double gap = (i + 1 < positions.size())
                             ? positions[i + 1] - positions[i]
                             : contour.perimeter - positions.back() + positions.front();
            min_gap = std::min(min_gap, gap);
            max_gap = std::max(max_gap, gap);
        }
        CHECK(max_gap - min_gap <= 2.0);
    }
}

TEST_CASE("crop of an interior window is the exact source region") {
    GrayImage img(10, 10);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        img.pixels[i] = static_cast<std::uint8_t>(i);
    const GrayImage patch = crop_patch(img, {5, 5}, 4);
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 4; ++c)
            CHECK(patch.at(r, c) == img.at(r + 3, c + 3));
}

TEST_CASE("crop at the origin zero-pads the out-of-bounds quadrants") {
    GrayImage img(100, 100, 200);
    const GrayImage patch = crop_patch(img, {0, 0}, 64);
    // Top-left = (-32, -32): rows 0..31 and cols 0..31 of the patch are pad.
    for (std::size_t r = 0; r < 64; ++r)
        for (std::size_t c = 0; c < 64; ++c) {
            const bool inside = r >= 32 && c >= 32;
            CHECK(patch.at(r, c) == (inside ? 200 : 0));
        }
}

TEST_CASE("crop conserves in-bounds mass") {
    SeededRng rng(53);
    GrayImage img(20, 20);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.next_below(256));
    for (int t = 0; t < 20; ++t) {
        const PixelCoord center{static_cast<long>(rng.next_below(20)),
                                static_cast<long>(rng.next_below(20))};
        const std::size_t size = 1 + rng.next_below(12);
        const GrayImage patch = crop_patch(img, center, size);
        long patch_sum = 0;
        for (auto p : patch.pixels) patch_sum += p;
        long window_sum = 0;
        const long half = static_cast<long>(size) / 2;
        for (long r = center.row - half; r < center.row - half + static_cast<long>(size); ++r)
            for (long c = center.col - half; c < center.col - half + static_cast<long>(size); ++c)
                if (img.in_bounds(r, c))
                    window_sum += img.at(static_cast<std::size_t>(r),
                                         static_cast<std::size_t>(c));
        CHECK(patch_sum == window_sum);
    }
}
