#include "fect/manifest.hpp"

#include <fstream>

#include <json.hpp>

#include "fect/errors.hpp"

namespace fect {

int Manifest::num_classes() const {
    int k = 0;
    for (const auto& e : entries) k = std::max(k, e.label + 1);
    return k;
}

void save_manifest(const std::string& path, const Manifest& manifest) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : manifest.entries) {
        arr.push_back({{"id", e.id},
                       {"image_path", e.image_path},
                       {"mask_path", e.mask_path},
                       {"centroids_path", e.centroids_path},
                       {"label", e.label}});
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("manifest: cannot write " + path);
    out << arr.dump(2) << "\n";
}

Manifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("manifest: cannot open " + path);
    nlohmann::json arr;
    try {
        in >> arr;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("manifest: invalid JSON in " + path + ": " + e.what());
    }
    if (!arr.is_array()) throw ParseError("manifest: expected a JSON array in " + path);

    Manifest m;
    for (const auto& item : arr) {
        ManifestEntry e;
        try {
            e.id = item.at("id").get<std::string>();
            e.image_path = item.at("image_path").get<std::string>();
            e.mask_path = item.at("mask_path").get<std::string>();
            e.centroids_path = item.at("centroids_path").get<std::string>();
            e.label = item.at("label").get<int>();
        } catch (const nlohmann::json::exception& ex) {
            throw ParseError("manifest: malformed entry in " + path + ": " + ex.what());
        }
        m.entries.push_back(std::move(e));
    }
    return m;
}

void save_centroids(const std::string& path, const std::vector<PixelCoord>& centroids) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("centroids: cannot write " + path);
    for (const auto& c : centroids) out << c.row << "," << c.col << "\n";
}

std::vector<PixelCoord> load_centroids(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("centroids: cannot open " + path);
    std::vector<PixelCoord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw ParseError("centroids: missing comma at " + path + ":" +
                             std::to_string(lineno));
        try {
            PixelCoord c;
            c.row = std::stol(line.substr(0, comma));
            c.col = std::stol(line.substr(comma + 1));
            out.push_back(c);
        } catch (const std::exception&) {
            throw ParseError("centroids: bad number at " + path + ":" +
                             std::to_string(lineno));
        }
    }
    return out;
}

ImageSample load_sample(const ManifestEntry& entry) {
    ImageSample s;
    s.id = entry.id;
    s.image = load_netpbm_file(entry.image_path);
    s.mask = threshold_to_mask(load_netpbm_file(entry.mask_path));
    if (s.mask.height != s.image.height || s.mask.width != s.image.width)
        throw DataError("sample " + entry.id + ": mask dimensions differ from image");
    s.centroids = load_centroids(entry.centroids_path);
    for (const auto& c : s.centroids) {
        if (!s.image.in_bounds(c.row, c.col))
            throw DataError("sample " + entry.id + ": centroid outside image bounds");
    }
    s.label = entry.label;
    return s;
}

} // namespace fect
