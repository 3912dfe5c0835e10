#pragma once

#include <string>
#include <vector>

#include "fect/image.hpp"

namespace fect {

struct ManifestEntry {
    std::string id;
    std::string image_path;
    std::string mask_path;
    std::string centroids_path;
    int label = 0;
};

struct Manifest {
    std::vector<ManifestEntry> entries;

    std::size_t size() const { return entries.size(); }
    int num_classes() const;
};

void save_manifest(const std::string& path, const Manifest& manifest);
Manifest load_manifest(const std::string& path);

// Centroid lists: one "row,col" line per cell.
void save_centroids(const std::string& path, const std::vector<PixelCoord>& centroids);
std::vector<PixelCoord> load_centroids(const std::string& path);

// Loads the full sample behind a manifest entry (image, mask, centroids).
ImageSample load_sample(const ManifestEntry& entry);

} // namespace fect
