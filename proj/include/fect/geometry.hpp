#pragma once

#include <cstdint>
#include <vector>

#include "fect/image.hpp"

namespace fect {

// Ordered outer boundary of one connected component.
struct Contour {
    int component_id = 0;
    std::vector<PixelCoord> points; // closed loop, consecutive points 8-adjacent
    double perimeter = 0.0;         // arc length in pixels along the loop
};

struct LabelMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<int> labels; // 0 = background, components numbered 1..count
    int count = 0;

    int at(std::size_t r, std::size_t c) const { return labels[r * width + c]; }
};

// Component labeling by flood fill, seeded in raster order so the labeling
// is deterministic. connectivity must be 4 or 8.
LabelMap connected_components(const BinaryMask& mask, int connectivity = 8);

// Extracts the mask of a single labeled component.
BinaryMask component_mask(const LabelMap& lm, int label);

// Moore-neighbor tracing of the outer boundary, clockwise, starting from
// the top-most then left-most boundary pixel. The component must be the
// only foreground in the mask.
Contour trace_contour(const BinaryMask& single_component);

// Equal arc-length sampling along the contour loop. The number of points is
// clamp(floor(perimeter / spacing), min_points, max_points); targets are
// centered in their arc intervals and snapped to the nearest contour vertex.
std::vector<PixelCoord> sample_contour_uniform(const Contour& contour, double spacing,
                                               std::size_t min_points = 8,
                                               std::size_t max_points = 64);

// size x size window centered at center (top-left = center - size/2),
// zero-padded where it leaves the image.
GrayImage crop_patch(const GrayImage& image, PixelCoord center, std::size_t size);

// Variance of the turning angle between chords of +-step points, a scalar
// summary of boundary roughness used to validate generated shapes.
double contour_turning_variance(const Contour& contour, std::size_t step = 5);

} // namespace fect
