#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fect/geometry.hpp"
#include "fect/image.hpp"
#include "fect/matrix.hpp"

namespace fect {

enum class Modality : std::uint8_t { Cell = 0, Tissue = 1, Edge = 2 };

const char* modality_name(Modality m);
Modality modality_from_name(const std::string& name);

struct FeatureVector {
    Modality modality = Modality::Cell;
    std::vector<double> values;

    std::size_t dim() const { return values.size(); }
};

inline constexpr std::size_t kCellWindow = 32;
inline constexpr std::size_t kCellDim = 14;   // 8-bin hist + mean + var + 4 moments
inline constexpr std::size_t kTissueDim = 27; // 16-bin hist + 4 shape stats + 7 Hu
inline constexpr std::size_t kEdgePatch = 64;
inline constexpr std::size_t kEdgeDim = 32;

// Intensity statistics of the window around one nucleus.
FeatureVector extract_cell_descriptor(const GrayImage& image, PixelCoord centroid);

struct TissueFeature {
    FeatureVector feature;
    bool degenerate = false; // empty mask; feature is all zeros
};

// Whole-image structure statistics of the masked region.
TissueFeature extract_tissue_descriptor(const GrayImage& image, const BinaryMask& mask);

// Fixed seeded random projection of 64x64 patches, the stand-in embedding
// for boundary patches.
class PatchEmbedder {
public:
    explicit PatchEmbedder(std::uint64_t seed);

    FeatureVector embed(const GrayImage& patch) const;
    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    Matrix projection_; // kEdgeDim x (kEdgePatch * kEdgePatch)
};

// Feature cache: one file per (manifest, modality), row order = manifest order.
struct FeatureCache {
    Modality modality = Modality::Cell;
    std::size_t dim = 0;
    std::vector<std::vector<double>> rows;

    Matrix as_matrix() const;
};

void save_feature_cache(const std::string& path, const FeatureCache& cache);
FeatureCache load_feature_cache(const std::string& path);

} // namespace fect
