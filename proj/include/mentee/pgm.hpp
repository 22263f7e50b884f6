#pragma once
// Binary PGM (P5) writing plus the filter-grid layout used by export-filters:
// tiles arranged rows = floor(sqrt(F)), cols = ceil(F / rows), 1-pixel black
// separators between tiles, no outer border. Each tile is min-max normalized
// to [0,255]; constant tiles render mid-gray (128).

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mentee/errors.hpp"
#include "mentee/tensor.hpp"

namespace mentee {

struct GrayImage {
    std::size_t width = 0, height = 0;
    std::vector<unsigned char> pixels; // row-major

    unsigned char& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
    const unsigned char& at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
};

inline void write_pgm(const GrayImage& img, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + path.string());
    f << "P5\n" << img.width << " " << img.height << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
}

inline GrayImage read_pgm(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot read " + path.string());
    std::string magic;
    f >> magic;
    if (magic != "P5") throw Error(path.string() + ": not a P5 PGM");
    GrayImage img;
    std::size_t maxval = 0;
    f >> img.width >> img.height >> maxval;
    if (maxval != 255) throw Error(path.string() + ": unsupported maxval");
    f.get(); // single whitespace after the header
    img.pixels.resize(img.width * img.height);
    if (!f.read(reinterpret_cast<char*>(img.pixels.data()),
                static_cast<std::streamsize>(img.pixels.size())))
        throw Error(path.string() + ": truncated pixel data");
    return img;
}

struct GridLayout {
    std::size_t rows = 0, cols = 0;
    std::size_t width = 0, height = 0; // final image extents
};

inline GridLayout grid_layout(std::size_t tiles, std::size_t tile_h, std::size_t tile_w) {
    if (tiles == 0) throw NotVisualizable("no tiles to lay out");
    GridLayout g;
    g.rows = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(tiles))));
    g.rows = std::max<std::size_t>(g.rows, 1);
    g.cols = (tiles + g.rows - 1) / g.rows;
    g.height = g.rows * tile_h + (g.rows - 1);
    g.width = g.cols * tile_w + (g.cols - 1);
    return g;
}

// tiles: each [tile_h x tile_w], already in float; normalized per tile.
template <class T>
GrayImage render_filter_grid(const std::vector<Tensor<T>>& tiles) {
    if (tiles.empty()) throw NotVisualizable("no filters to render");
    const std::size_t th = tiles[0].extent(0), tw = tiles[0].extent(1);
    const GridLayout g = grid_layout(tiles.size(), th, tw);
    GrayImage img;
    img.width = g.width;
    img.height = g.height;
    img.pixels.assign(img.width * img.height, 0); // separators stay black
    for (std::size_t k = 0; k < tiles.size(); ++k) {
        const std::size_t r = k / g.cols, c = k % g.cols;
        const Tensor<T>& t = tiles[k];
        T mn = t[0], mx = t[0];
        for (const T v : t) {
            mn = std::min(mn, v);
            mx = std::max(mx, v);
        }
        const double span = static_cast<double>(mx) - static_cast<double>(mn);
        for (std::size_t y = 0; y < th; ++y)
            for (std::size_t x = 0; x < tw; ++x) {
                unsigned char px = 128;
                if (span > 0) {
                    const double u = (static_cast<double>(t.at2(y, x)) - static_cast<double>(mn)) / span;
                    px = static_cast<unsigned char>(std::lround(u * 255.0));
                }
                img.at(r * (th + 1) + y, c * (tw + 1) + x) = px;
            }
    }
    return img;
}

} // namespace mentee
