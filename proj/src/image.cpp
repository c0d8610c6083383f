#include "splitseg/image.hpp"

#include <cctype>
#include <fstream>
#include <string>

#include "splitseg/container.hpp"

namespace splitseg {

namespace {

// Reads one whitespace/comment-delimited token from a netpbm header.
std::string next_token(std::istream& in) {
    std::string token;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) {
            if (!token.empty()) return token;
            continue;
        }
        token.push_back(static_cast<char>(c));
    }
    if (token.empty()) throw IoError("netpbm: truncated header");
    return token;
}

struct PnmHeader {
    int width = 0;
    int height = 0;
};

PnmHeader read_header(std::istream& in, const char* magic, const std::filesystem::path& path) {
    if (next_token(in) != magic) {
        throw IoError("'" + path.string() + "': expected " + magic + " header");
    }
    PnmHeader h;
    h.width = std::stoi(next_token(in));
    h.height = std::stoi(next_token(in));
    const int maxval = std::stoi(next_token(in));
    if (h.width < 1 || h.height < 1) throw IoError("'" + path.string() + "': bad dimensions");
    if (maxval != 255) throw IoError("'" + path.string() + "': only maxval 255 is supported");
    return h;
}

}  // namespace

Tensor load_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    const PnmHeader h = read_header(in, "P6", path);

    const std::size_t n = static_cast<std::size_t>(h.width) * h.height * 3;
    std::vector<uint8_t> raw(n);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
        throw IoError("'" + path.string() + "': truncated pixel data");
    }

    Tensor image({3, h.height, h.width});
    for (int y = 0; y < h.height; ++y) {
        for (int x = 0; x < h.width; ++x) {
            const std::size_t base = (static_cast<std::size_t>(y) * h.width + x) * 3;
            for (int c = 0; c < 3; ++c) {
                image.at(c, y, x) = static_cast<float>(raw[base + c]) / 255.0f;
            }
        }
    }
    return image;
}

void save_ppm(const std::filesystem::path& path, const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw IoError("save_ppm: expected a 3 x H x W tensor");
    }
    const int h = image.dim(1), w = image.dim(2);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << "P6\n" << w << " " << h << "\n255\n";
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                float v = image.at(c, y, x) * 255.0f + 0.5f;
                if (v < 0.0f) v = 0.0f;
                if (v > 255.0f) v = 255.0f;
                out.put(static_cast<char>(static_cast<uint8_t>(v)));
            }
        }
    }
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

SegMap load_pgm_labels(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    const PnmHeader h = read_header(in, "P5", path);

    const std::size_t n = static_cast<std::size_t>(h.width) * h.height;
    std::vector<uint8_t> raw(n);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
        throw IoError("'" + path.string() + "': truncated pixel data");
    }

    SegMap map;
    map.height = h.height;
    map.width = h.width;
    map.labels.assign(raw.begin(), raw.end());
    return map;
}

void save_pgm_labels(const std::filesystem::path& path, const SegMap& map) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << "P5\n" << map.width << " " << map.height << "\n255\n";
    for (uint16_t label : map.labels) {
        if (label > 255) throw IoError("save_pgm_labels: label exceeds 8 bits");
        out.put(static_cast<char>(static_cast<uint8_t>(label)));
    }
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace splitseg
