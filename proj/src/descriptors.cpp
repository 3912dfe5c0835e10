#include "fect/descriptors.hpp"

#include <cmath>
#include <fstream>

#include "fect/errors.hpp"
#include "fect/io_util.hpp"
#include "fect/rng.hpp"

namespace fect {

const char* modality_name(Modality m) {
    switch (m) {
        case Modality::Cell: return "cell";
        case Modality::Tissue: return "tissue";
        case Modality::Edge: return "edge";
    }
    return "?";
}

Modality modality_from_name(const std::string& name) {
    if (name == "cell") return Modality::Cell;
    if (name == "tissue") return Modality::Tissue;
    if (name == "edge") return Modality::Edge;
    throw DataError("unknown modality \"" + name + "\"");
}

namespace {

// Central moment sums of the set of (row, col) coordinates where pred holds,
// normalized as eta_pq = mu_pq / mu00^(1 + (p+q)/2).
struct MomentSet {
    double mu00 = 0.0;
    double eta(const double mu, int p, int q) const {
        if (mu00 <= 0.0) return 0.0;
        return mu / std::pow(mu00, 1.0 + 0.5 * static_cast<double>(p + q));
    }
};

} // namespace

FeatureVector extract_cell_descriptor(const GrayImage& image, PixelCoord centroid) {
    const GrayImage win = crop_patch(image, centroid, kCellWindow);
    const std::size_t n = win.pixels.size();

    FeatureVector fv;
    fv.modality = Modality::Cell;
    fv.values.assign(kCellDim, 0.0);

    // 8-bin normalized intensity histogram.
    for (auto v : win.pixels) fv.values[v >> 5] += 1.0;
    for (std::size_t b = 0; b < 8; ++b) fv.values[b] /= static_cast<double>(n);

    double mean = 0.0;
    for (auto v : win.pixels) mean += static_cast<double>(v);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (auto v : win.pixels) {
        const double d = static_cast<double>(v) - mean;
        var += d * d;
    }
    var /= static_cast<double>(n);
    fv.values[8] = mean;
    fv.values[9] = var;

    // Shape moments of the below-mean (dark) pixels.
    double m00 = 0.0, mr = 0.0, mc = 0.0;
    for (std::size_t r = 0; r < win.height; ++r)
        for (std::size_t c = 0; c < win.width; ++c)
            if (static_cast<double>(win.at(r, c)) < mean) {
                m00 += 1.0;
                mr += static_cast<double>(r);
                mc += static_cast<double>(c);
            }
    if (m00 > 0.0) {
        const double cr = mr / m00, cc = mc / m00;
        double mu20 = 0.0, mu02 = 0.0, mu11 = 0.0, mu22 = 0.0;
        for (std::size_t r = 0; r < win.height; ++r)
            for (std::size_t c = 0; c < win.width; ++c)
                if (static_cast<double>(win.at(r, c)) < mean) {
                    const double dr = static_cast<double>(r) - cr;
                    const double dc = static_cast<double>(c) - cc;
                    mu20 += dr * dr;
                    mu02 += dc * dc;
                    mu11 += dr * dc;
                    mu22 += dr * dr * dc * dc;
                }
        MomentSet ms{m00};
        fv.values[10] = ms.eta(mu20, 2, 0);
        fv.values[11] = ms.eta(mu02, 0, 2);
        fv.values[12] = ms.eta(mu11, 1, 1);
        fv.values[13] = ms.eta(mu22, 2, 2);
    }
    return fv;
}

TissueFeature extract_tissue_descriptor(const GrayImage& image, const BinaryMask& mask) {
    TissueFeature out;
    out.feature.modality = Modality::Tissue;
    out.feature.values.assign(kTissueDim, 0.0);

    const std::size_t fg = mask.foreground_count();
    if (fg == 0) {
        out.degenerate = true;
        return out;
    }
    auto& v = out.feature.values;

    // 16-bin histogram over masked pixels.
    for (std::size_t i = 0; i < mask.values.size(); ++i)
        if (mask.values[i]) v[image.pixels[i] >> 4] += 1.0;
    for (std::size_t b = 0; b < 16; ++b) v[b] /= static_cast<double>(fg);

    v[16] = static_cast<double>(fg) / static_cast<double>(mask.values.size());

    const LabelMap lm = connected_components(mask, 8);
    v[17] = static_cast<double>(lm.count);
    v[18] = static_cast<double>(fg) / static_cast<double>(lm.count);

    double perimeter = 0.0;
    for (int label = 1; label <= lm.count; ++label)
        perimeter += trace_contour(component_mask(lm, label)).perimeter;
    v[19] = perimeter / static_cast<double>(fg);

    // Hu invariants of the binary mask.
    double m00 = static_cast<double>(fg), mr = 0.0, mc = 0.0;
    for (std::size_t r = 0; r < mask.height; ++r)
        for (std::size_t c = 0; c < mask.width; ++c)
            if (mask.at(r, c)) {
                mr += static_cast<double>(r);
                mc += static_cast<double>(c);
            }
    const double cr = mr / m00, cc = mc / m00;
    double mu[4][4] = {};
    for (std::size_t r = 0; r < mask.height; ++r)
        for (std::size_t c = 0; c < mask.width; ++c)
            if (mask.at(r, c)) {
                const double dr = static_cast<double>(r) - cr;
                const double dc = static_cast<double>(c) - cc;
                double rp = 1.0;
                for (int p = 0; p <= 3; ++p) {
                    double cq = 1.0;
                    for (int q = 0; q + p <= 3; ++q) {
                        mu[p][q] += rp * cq;
                        cq *= dc;
                    }
                    rp *= dr;
                }
            }
    auto eta = [&](int p, int q) {
        return mu[p][q] / std::pow(m00, 1.0 + 0.5 * static_cast<double>(p + q));
    };
    const double n20 = eta(2, 0), n02 = eta(0, 2), n11 = eta(1, 1);
    const double n30 = eta(3, 0), n03 = eta(0, 3), n21 = eta(2, 1), n12 = eta(1, 2);
    v[20] = n20 + n02;
    v[21] = (n20 - n02) * (n20 - n02) + 4.0 * n11 * n11;
    v[22] = (n30 - 3 * n12) * (n30 - 3 * n12) + (3 * n21 - n03) * (3 * n21 - n03);
    v[23] = (n30 + n12) * (n30 + n12) + (n21 + n03) * (n21 + n03);
    v[24] = (n30 - 3 * n12) * (n30 + n12) *
                ((n30 + n12) * (n30 + n12) - 3 * (n21 + n03) * (n21 + n03)) +
            (3 * n21 - n03) * (n21 + n03) *
                (3 * (n30 + n12) * (n30 + n12) - (n21 + n03) * (n21 + n03));
    v[25] = (n20 - n02) * ((n30 + n12) * (n30 + n12) - (n21 + n03) * (n21 + n03)) +
            4.0 * n11 * (n30 + n12) * (n21 + n03);
    v[26] = (3 * n21 - n03) * (n30 + n12) *
                ((n30 + n12) * (n30 + n12) - 3 * (n21 + n03) * (n21 + n03)) -
            (n30 - 3 * n12) * (n21 + n03) *
                (3 * (n30 + n12) * (n30 + n12) - (n21 + n03) * (n21 + n03));
    return out;
}

PatchEmbedder::PatchEmbedder(std::uint64_t seed) : seed_(seed) {
    SeededRng rng(mix_seed(seed, 0xED6EULL));
    const std::size_t flat = kEdgePatch * kEdgePatch;
    projection_ = Matrix(kEdgeDim, flat);
    const double scale = 1.0 / std::sqrt(static_cast<double>(flat));
    for (auto& p : projection_.data) p = scale * rng.normal();
}

FeatureVector PatchEmbedder::embed(const GrayImage& patch) const {
    if (patch.height != kEdgePatch || patch.width != kEdgePatch)
        throw ShapeError("embed_patch: expected " + std::to_string(kEdgePatch) + "x" +
                         std::to_string(kEdgePatch) + " patch");
    FeatureVector fv;
    fv.modality = Modality::Edge;
    fv.values.assign(kEdgeDim, 0.0);
    const std::size_t flat = kEdgePatch * kEdgePatch;
    for (std::size_t i = 0; i < kEdgeDim; ++i) {
        const double* prow = projection_.row_ptr(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < flat; ++j)
            acc += prow[j] * static_cast<double>(patch.pixels[j]);
        fv.values[i] = acc / 255.0;
    }
    return fv;
}

Matrix FeatureCache::as_matrix() const {
    Matrix m(rows.size(), dim);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < dim; ++j) m(i, j) = rows[i][j];
    return m;
}

void save_feature_cache(const std::string& path, const FeatureCache& cache) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("feature cache: cannot write " + path);
    out.write("FECTFEAT", 8);
    write_u16_le(out, 1);
    out.put(static_cast<char>(cache.modality));
    write_u32_le(out, static_cast<std::uint32_t>(cache.dim));
    write_u32_le(out, static_cast<std::uint32_t>(cache.rows.size()));
    for (const auto& row : cache.rows) {
        if (row.size() != cache.dim)
            throw ShapeError("feature cache: inconsistent row width");
        for (double x : row) write_f32_le(out, static_cast<float>(x));
    }
}

FeatureCache load_feature_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("feature cache: cannot open " + path);
    expect_magic(in, "FECTFEAT", "feature cache " + path);
    const std::uint16_t version = read_u16_le(in);
    if (version != 1)
        throw ParseError("feature cache " + path + ": unsupported version " +
                         std::to_string(version));
    FeatureCache cache;
    const int m = in.get();
    if (m < 0 || m > 2) throw ParseError("feature cache " + path + ": bad modality byte");
    cache.modality = static_cast<Modality>(m);
    cache.dim = read_u32_le(in);
    const std::uint32_t count = read_u32_le(in);
    cache.rows.assign(count, std::vector<double>(cache.dim, 0.0));
    for (auto& row : cache.rows)
        for (auto& x : row) x = static_cast<double>(read_f32_le(in));
    return cache;
}

} // namespace fect
