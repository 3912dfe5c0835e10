#include "fect/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "fect/errors.hpp"
#include "fect/rng.hpp"

namespace fs = std::filesystem;

namespace fect {

namespace {

constexpr double kTau = 2.0 * M_PI;

struct RadialRegion {
    double cy = 0.0, cx = 0.0;
    double base_radius = 0.0;
    double axis_a = 1.0, axis_b = 1.0; // area-preserving ellipse semi-axis factors
    double orientation = 0.0;
    double amp[4] = {0, 0, 0, 0}; // harmonics k = 2..5
    double phase[4] = {0, 0, 0, 0};

    double radius_at(double theta) const {
        const double psi = theta - orientation;
        const double ca = axis_b * std::cos(psi);
        const double sa = axis_a * std::sin(psi);
        double r = base_radius * axis_a * axis_b / std::sqrt(ca * ca + sa * sa);
        for (int k = 0; k < 4; ++k)
            r += amp[k] * std::sin(static_cast<double>(k + 2) * theta + phase[k]);
        return std::max(r, 4.0);
    }

    bool contains(double row, double col) const {
        const double dy = row - cy, dx = col - cx;
        const double dist = std::sqrt(dy * dy + dx * dx);
        return dist <= radius_at(std::atan2(dy, dx));
    }
};

void stamp_blob(GrayImage& img, double cy, double cx, double ax, double bx,
                double angle, double depth) {
    const double ca = std::cos(angle), sa = std::sin(angle);
    const long reach = static_cast<long>(std::ceil(2.0 * std::max(ax, bx)));
    const long r0 = static_cast<long>(cy) - reach, r1 = static_cast<long>(cy) + reach;
    const long c0 = static_cast<long>(cx) - reach, c1 = static_cast<long>(cx) + reach;
    for (long r = r0; r <= r1; ++r) {
        if (r < 0 || r >= static_cast<long>(img.height)) continue;
        for (long c = c0; c <= c1; ++c) {
            if (c < 0 || c >= static_cast<long>(img.width)) continue;
            const double dy = static_cast<double>(r) - cy;
            const double dx = static_cast<double>(c) - cx;
            const double u = (dx * ca + dy * sa) / ax;
            const double v = (-dx * sa + dy * ca) / bx;
            const double q = u * u + v * v;
            if (q > 4.0) continue;
            const double val = static_cast<double>(img.at(static_cast<std::size_t>(r),
                                                          static_cast<std::size_t>(c))) -
                               depth * std::exp(-q);
            img.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) =
                static_cast<std::uint8_t>(std::clamp(val, 10.0, 255.0));
        }
    }
}

struct GeneratedSample {
    GrayImage image;
    BinaryMask mask;
    std::vector<PixelCoord> centroids;
};

GeneratedSample generate_sample(const ClassSpec& spec, std::size_t size, SeededRng& rng) {
    GeneratedSample out;
    out.image = GrayImage(size, size, 0);
    out.mask = BinaryMask(size, size, 0);

    const double fsize = static_cast<double>(size);
    const int nregions = std::max(1, spec.region_count);

    std::vector<RadialRegion> regions;
    for (int i = 0; i < nregions; ++i) {
        RadialRegion reg;
        if (nregions == 1) {
            reg.cy = fsize * 0.5 + rng.uniform(-0.06, 0.06) * fsize;
            reg.cx = fsize * 0.5 + rng.uniform(-0.06, 0.06) * fsize;
            reg.base_radius = fsize * rng.uniform(0.20, 0.30);
        } else {
            const double ring_angle = kTau * (static_cast<double>(i) / nregions) +
                                      rng.uniform(-0.2, 0.2);
            const double ring_dist = 0.25 * fsize;
            reg.cy = fsize * 0.5 + ring_dist * std::sin(ring_angle);
            reg.cx = fsize * 0.5 + ring_dist * std::cos(ring_angle);
            reg.base_radius = fsize * rng.uniform(0.13, 0.18);
        }
        // Random elongation keeps global shape statistics overlapping across
        // classes, so category identity hinges on the finer boundary cues.
        const double ecc = rng.uniform(1.0, 1.6);
        reg.axis_a = std::sqrt(ecc);
        reg.axis_b = 1.0 / std::sqrt(ecc);
        reg.orientation = rng.uniform(0.0, kTau);

        // Roughness is the per-class amplitude ceiling; each sample draws its
        // own amplitude so rough classes overlap smooth ones at the low end.
        const double amplitude = spec.boundary_roughness <= 1.0
                                     ? spec.boundary_roughness
                                     : rng.uniform(1.0, spec.boundary_roughness);
        double total = 0.0;
        double raw[4];
        for (int k = 0; k < 4; ++k) {
            raw[k] = rng.uniform(0.5, 1.0);
            total += raw[k];
            reg.phase[k] = rng.uniform(0.0, kTau);
        }
        for (int k = 0; k < 4; ++k) reg.amp[k] = amplitude * raw[k] / total;
        regions.push_back(reg);
    }

    // Mask fill; restrict scanning to each region's bounding box.
    for (const auto& reg : regions) {
        const double reach =
            reg.base_radius * reg.axis_a + spec.boundary_roughness + 2.0;
        const long r0 = std::max<long>(0, static_cast<long>(reg.cy - reach));
        const long r1 = std::min<long>(static_cast<long>(size) - 1,
                                       static_cast<long>(reg.cy + reach));
        const long c0 = std::max<long>(0, static_cast<long>(reg.cx - reach));
        const long c1 = std::min<long>(static_cast<long>(size) - 1,
                                       static_cast<long>(reg.cx + reach));
        for (long r = r0; r <= r1; ++r)
            for (long c = c0; c <= c1; ++c)
                if (reg.contains(static_cast<double>(r), static_cast<double>(c)))
                    out.mask.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = 1;
    }

    // Base shading plus per-pixel grain. The per-sample brightness offset
    // imitates staining variation and keeps absolute intensity statistics
    // from becoming a class giveaway.
    const double brightness = rng.uniform(-12.0, 12.0);
    for (std::size_t i = 0; i < out.image.pixels.size(); ++i) {
        const double base = (out.mask.values[i] ? 205.0 : 230.0) + brightness;
        const double noise = rng.uniform(-8.0, 8.0);
        out.image.pixels[i] = static_cast<std::uint8_t>(std::clamp(base + noise, 0.0, 255.0));
    }

    const double fg_area = static_cast<double>(out.mask.foreground_count());

    // Cells are dark elliptical blobs with a Gaussian profile. Ring classes
    // divert a fixed share of the budget to a border layer hugging the
    // region boundaries; border cells mimic the myoepithelial layer, so they
    // are drawn but not listed as epithelial centroids. The stamp count and
    // statistics are identical across classes, so masked intensity
    // histograms differ by placement only.
    const std::size_t n_cells = static_cast<std::size_t>(
        std::max(3.0, std::round(spec.cell_density * fg_area / 1000.0)));
    const std::size_t n_border =
        spec.border_ring ? static_cast<std::size_t>(std::round(0.35 * n_cells)) : 0;

    auto stamp_cell = [&](double py, double px) {
        stamp_blob(out.image, py, px, rng.uniform(2.5, 5.0), rng.uniform(2.5, 5.0),
                   rng.uniform(0.0, kTau), rng.uniform(90.0, 130.0));
    };

    for (std::size_t i = 0; i + n_border < n_cells; ++i) {
        for (int attempt = 0; attempt < 256; ++attempt) {
            const long r = static_cast<long>(rng.next_below(size));
            const long col = static_cast<long>(rng.next_below(size));
            if (out.mask.at(static_cast<std::size_t>(r), static_cast<std::size_t>(col))) {
                out.centroids.push_back(PixelCoord{r, col});
                stamp_cell(static_cast<double>(r), static_cast<double>(col));
                break;
            }
        }
    }

    if (n_border > 0) {
        // split the border budget across regions by approximate perimeter
        std::vector<double> perimeters;
        double total_perimeter = 0.0;
        for (const auto& reg : regions) {
            double p = 0.0;
            const int steps = 256;
            double prev_r = reg.radius_at(0.0);
            for (int i = 1; i <= steps; ++i) {
                const double theta = kTau * static_cast<double>(i) / steps;
                const double r = reg.radius_at(theta);
                const double dr = r - prev_r;
                p += std::sqrt(r * prev_r * (kTau / steps) * (kTau / steps) + dr * dr);
                prev_r = r;
            }
            perimeters.push_back(p);
            total_perimeter += p;
        }
        // Band width chosen so the border layer's local cell density equals
        // the interior density; overlap statistics then match across classes
        // and only the placement pattern carries the category.
        const double band_width = std::max(
            6.0, static_cast<double>(n_border) * fg_area /
                     (static_cast<double>(n_cells) * total_perimeter));
        for (std::size_t ri = 0; ri < regions.size(); ++ri) {
            const RadialRegion& reg = regions[ri];
            const long cells = static_cast<long>(std::round(
                static_cast<double>(n_border) * perimeters[ri] / total_perimeter));
            for (long i = 0; i < cells; ++i) {
                const double theta = rng.uniform(0.0, kTau);
                const double rad =
                    reg.radius_at(theta) - rng.uniform(4.0, 4.0 + band_width);
                stamp_cell(reg.cy + rad * std::sin(theta),
                           reg.cx + rad * std::cos(theta));
            }
        }
    }

    return out;
}

void validate_recipe(const SyntheticRecipe& recipe) {
    if (recipe.classes.empty()) throw DataError("recipe: no classes defined");
    if (recipe.image_size < 128) throw DataError("recipe: image_size must be >= 128");
    for (const auto& c : recipe.classes) {
        if (c.cell_density < 0.0) throw DataError("recipe: negative cell_density");
        if (c.boundary_roughness < 0.0) throw DataError("recipe: negative roughness");
        if (c.region_count < 1) throw DataError("recipe: region_count must be >= 1");
    }
}

} // namespace

SyntheticRecipe default_recipe() {
    SyntheticRecipe r;
    r.classes = {
        {"normal-like", 0.8, 1.0, false, 1},
        {"benign-like", 3.0, 3.0, false, 2},
        {"in-situ-like", 1.8, 1.0, true, 1},
        {"invasive-like", 1.8, 8.0, false, 1},
    };
    r.image_size = 512;
    r.samples_per_class = 16;
    r.seed = 1;
    return r;
}

SyntheticRecipe load_recipe(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("recipe: cannot open " + path);

    SyntheticRecipe recipe;
    recipe.classes.clear();
    ClassSpec* current = nullptr;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        // trim
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        const auto e = line.find_last_not_of(" \t\r");
        line = line.substr(b, e - b + 1);

        if (line == "[class]") {
            recipe.classes.emplace_back();
            current = &recipe.classes.back();
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("recipe: expected key=value at " + path + ":" +
                             std::to_string(lineno));
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        try {
            if (key == "image_size") recipe.image_size = std::stoul(value);
            else if (key == "samples_per_class") recipe.samples_per_class = std::stoul(value);
            else if (key == "seed") recipe.seed = std::stoull(value);
            else if (current && key == "name") current->name = value;
            else if (current && key == "cell_density") current->cell_density = std::stod(value);
            else if (current && key == "boundary_roughness") current->boundary_roughness = std::stod(value);
            else if (current && key == "border_ring") current->border_ring = (value == "true" || value == "1");
            else if (current && key == "region_count") current->region_count = std::stoi(value);
            else
                throw ParseError("recipe: unknown key \"" + key + "\" at " + path + ":" +
                                 std::to_string(lineno));
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception&) {
            throw ParseError("recipe: bad value for \"" + key + "\" at " + path + ":" +
                             std::to_string(lineno));
        }
    }
    if (recipe.classes.empty())
        throw ParseError("recipe: no [class] blocks in " + path);
    return recipe;
}

Manifest generate_dataset(const SyntheticRecipe& recipe, const std::string& output_dir) {
    validate_recipe(recipe);

    std::error_code ec;
    fs::create_directories(fs::path(output_dir) / "images", ec);
    fs::create_directories(fs::path(output_dir) / "masks", ec);
    fs::create_directories(fs::path(output_dir) / "centroids", ec);
    if (ec) throw DataError("generate_dataset: cannot create " + output_dir);

    Manifest manifest;
    for (std::size_t cls = 0; cls < recipe.classes.size(); ++cls) {
        for (std::size_t s = 0; s < recipe.samples_per_class; ++s) {
            SeededRng rng(mix_seed(recipe.seed, cls * 1000003ULL + s));
            GeneratedSample sample = generate_sample(recipe.classes[cls],
                                                     recipe.image_size, rng);

            char id[32];
            std::snprintf(id, sizeof(id), "c%zu_s%04zu", cls, s);

            ManifestEntry e;
            e.id = id;
            e.image_path = (fs::path(output_dir) / "images" / (e.id + ".pgm")).string();
            e.mask_path = (fs::path(output_dir) / "masks" / (e.id + ".pgm")).string();
            e.centroids_path =
                (fs::path(output_dir) / "centroids" / (e.id + ".csv")).string();
            e.label = static_cast<int>(cls);

            save_netpbm_file(e.image_path, sample.image);
            GrayImage mask_img(sample.mask.height, sample.mask.width, 0);
            for (std::size_t i = 0; i < sample.mask.values.size(); ++i)
                mask_img.pixels[i] = sample.mask.values[i] ? 255 : 0;
            save_netpbm_file(e.mask_path, mask_img);
            save_centroids(e.centroids_path, sample.centroids);

            manifest.entries.push_back(std::move(e));
        }
    }
    save_manifest((fs::path(output_dir) / "manifest.json").string(), manifest);
    return manifest;
}

SplitManifests split_dataset(const Manifest& manifest, double train_frac,
                             double val_frac, std::uint64_t seed) {
    if (train_frac <= 0.0 || train_frac >= 1.0 || val_frac <= 0.0 || val_frac >= 1.0 ||
        train_frac + val_frac >= 1.0)
        throw DataError("split_dataset: fractions must lie in (0,1) and sum below 1");

    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i)
        by_class[manifest.entries[i].label].push_back(i);

    SplitManifests out;
    for (auto& [label, indices] : by_class) {
        SeededRng rng(mix_seed(seed, static_cast<std::uint64_t>(label) + 0x517cc1b7ULL));
        rng.shuffle(indices);
        const std::size_t n = indices.size();
        const std::size_t n_train =
            static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_frac));
        const std::size_t n_val =
            static_cast<std::size_t>(std::floor(static_cast<double>(n) * val_frac));
        if (n_train == 0 || n_val == 0 || n_train + n_val >= n)
            throw DataError("split_dataset: class " + std::to_string(label) +
                            " has too few samples for the requested split");
        for (std::size_t i = 0; i < n; ++i) {
            const ManifestEntry& e = manifest.entries[indices[i]];
            if (i < n_train) out.train.entries.push_back(e);
            else if (i < n_train + n_val) out.val.entries.push_back(e);
            else out.test.entries.push_back(e);
        }
    }
    auto by_id = [](Manifest& m) {
        std::sort(m.entries.begin(), m.entries.end(),
                  [](const ManifestEntry& a, const ManifestEntry& b) { return a.id < b.id; });
    };
    by_id(out.train);
    by_id(out.val);
    by_id(out.test);
    return out;
}

} // namespace fect
