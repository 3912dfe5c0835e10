#include "fect/image.hpp"

#include <cstdio>
#include <fstream>
#include <string>

#include "fect/errors.hpp"

namespace fect {

namespace {

// NetPBM header token reader: skips whitespace and '#' comments, tracking
// the byte offset for diagnostics.
struct TokenReader {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;

    void skip_ws_and_comments() {
        while (pos < bytes.size()) {
            const char c = static_cast<char>(bytes[pos]);
            if (c == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos;
            } else {
                break;
            }
        }
    }

    std::string next_token() {
        skip_ws_and_comments();
        std::size_t start = pos;
        while (pos < bytes.size()) {
            const char c = static_cast<char>(bytes[pos]);
            if (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '#') break;
            ++pos;
        }
        if (start == pos)
            throw ParseError("netpbm: unexpected end of header at offset " +
                             std::to_string(start));
        return std::string(bytes.begin() + static_cast<long>(start),
                           bytes.begin() + static_cast<long>(pos));
    }

    std::size_t next_uint(const char* what) {
        const std::size_t at = pos;
        const std::string tok = next_token();
        std::size_t value = 0;
        for (char c : tok) {
            if (c < '0' || c > '9')
                throw ParseError(std::string("netpbm: bad ") + what +
                                 " at offset " + std::to_string(at));
            value = value * 10 + static_cast<std::size_t>(c - '0');
        }
        return value;
    }
};

} // namespace

GrayImage parse_netpbm(const std::vector<std::uint8_t>& bytes) {
    TokenReader rd{bytes};
    const std::string magic = rd.next_token();
    if (magic != "P5" && magic != "P6")
        throw ParseError("netpbm: unsupported magic \"" + magic + "\" at offset 0");

    const std::size_t width = rd.next_uint("width");
    const std::size_t height = rd.next_uint("height");
    const std::size_t maxval = rd.next_uint("maxval");
    if (maxval == 0 || maxval > 255)
        throw ParseError("netpbm: maxval " + std::to_string(maxval) +
                         " out of supported range at offset " + std::to_string(rd.pos));

    // Exactly one whitespace byte separates header and payload.
    if (rd.pos >= bytes.size())
        throw ParseError("netpbm: missing payload at offset " + std::to_string(rd.pos));
    ++rd.pos;

    const std::size_t channels = (magic == "P6") ? 3 : 1;
    const std::size_t need = width * height * channels;
    if (bytes.size() - rd.pos < need)
        throw ParseError("netpbm: truncated payload, need " + std::to_string(need) +
                         " bytes at offset " + std::to_string(rd.pos) + ", have " +
                         std::to_string(bytes.size() - rd.pos));

    GrayImage img(height, width);
    if (channels == 1) {
        std::copy(bytes.begin() + static_cast<long>(rd.pos),
                  bytes.begin() + static_cast<long>(rd.pos + need), img.pixels.begin());
    } else {
        for (std::size_t i = 0; i < width * height; ++i) {
            const std::size_t o = rd.pos + 3 * i;
            const unsigned r = bytes[o], g = bytes[o + 1], b = bytes[o + 2];
            img.pixels[i] =
                static_cast<std::uint8_t>((299 * r + 587 * g + 114 * b + 500) / 1000);
        }
    }
    return img;
}

std::vector<std::uint8_t> serialize_p5(const GrayImage& img) {
    char header[64];
    const int n = std::snprintf(header, sizeof(header), "P5\n%zu %zu\n255\n",
                                img.width, img.height);
    std::vector<std::uint8_t> out(header, header + n);
    out.insert(out.end(), img.pixels.begin(), img.pixels.end());
    return out;
}

BinaryMask threshold_to_mask(const GrayImage& img) {
    BinaryMask mask(img.height, img.width);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        mask.values[i] = img.pixels[i] != 0 ? 1 : 0;
    return mask;
}

GrayImage load_netpbm_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("netpbm: cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    try {
        return parse_netpbm(bytes);
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

void save_netpbm_file(const std::string& path, const GrayImage& img) {
    const auto bytes = serialize_p5(img);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("netpbm: cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<long>(bytes.size()));
}

} // namespace fect
