#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fect/manifest.hpp"

namespace fect {

// One synthetic tissue category. The four defaults differ along the axes
// the downstream features are supposed to resolve: cell crowding, region
// multiplicity, boundary roughness, and a stained border band.
struct ClassSpec {
    std::string name;
    double cell_density = 1.0;       // cells per 1000 px^2 of foreground
    double boundary_roughness = 1.0; // radial noise amplitude in px
    bool border_ring = false;        // dark band hugging the region boundary
    int region_count = 1;
};

struct SyntheticRecipe {
    std::vector<ClassSpec> classes;
    std::size_t image_size = 512;
    std::size_t samples_per_class = 16;
    std::uint64_t seed = 1;
};

SyntheticRecipe default_recipe();

// Plain key=value recipe file (class blocks separated by [class] lines).
SyntheticRecipe load_recipe(const std::string& path);

// Writes images/, masks/, centroids/ and manifest.json under output_dir.
// Fully determined by the recipe seed.
Manifest generate_dataset(const SyntheticRecipe& recipe, const std::string& output_dir);

struct SplitManifests {
    Manifest train;
    Manifest val;
    Manifest test;
};

// Stratified, disjoint, seed-deterministic split. Every class must receive
// at least one sample per split.
SplitManifests split_dataset(const Manifest& manifest, double train_frac,
                             double val_frac, std::uint64_t seed);

} // namespace fect
