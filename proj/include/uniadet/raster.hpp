#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

namespace uniadet {

/// Row-major H x W x C image with real-valued samples (nominally in [0, 1]).
struct Raster {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 1;
    std::vector<double> data;

    Raster() = default;
    Raster(std::size_t h, std::size_t w, std::size_t c = 1, double fill = 0.0)
        : height(h), width(w), channels(c), data(h * w * c, fill) {}

    double& at(std::size_t r, std::size_t c, std::size_t ch = 0) { return data[(r * width + c) * channels + ch]; }
    double at(std::size_t r, std::size_t c, std::size_t ch = 0) const {
        return data[(r * width + c) * channels + ch];
    }
    /// Channel mean at one pixel.
    double intensity(std::size_t r, std::size_t c) const;

    void validate() const;

    bool operator==(const Raster&) const = default;
};

/// Binary H x W raster; nonzero = anomalous pixel. An empty (0 x 0) mask means
/// "all normal" at whatever resolution it is used.
struct Mask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> data;

    Mask() = default;
    Mask(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), data(h * w, fill) {}

    std::uint8_t& at(std::size_t r, std::size_t c) { return data[r * width + c]; }
    std::uint8_t at(std::size_t r, std::size_t c) const { return data[r * width + c]; }

    bool empty() const { return data.empty(); }
    bool any() const;
    std::size_t count() const;

    bool operator==(const Mask&) const = default;
};

/// Half-open pixel range [begin, end) of cell `index` when `extent` pixels are
/// split into `parts` cells.
std::pair<std::size_t, std::size_t> cell_span(std::size_t extent, std::size_t parts, std::size_t index);

/// Corner-aligned bilinear resize.
Raster resize_bilinear(const Raster& image, std::size_t out_h, std::size_t out_w);

/// Each output pixel is the max over the source pixels its cell covers.
/// Used to project masks onto patch grids and to shrink mosaic tiles.
Mask resize_mask_max(const Mask& mask, std::size_t out_h, std::size_t out_w);

/// Nearest-neighbour mask resize (floor mapping; every source row/col is hit
/// when upscaling).
Mask resize_mask_nearest(const Mask& mask, std::size_t out_h, std::size_t out_w);

Raster crop(const Raster& image, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1);
Mask crop(const Mask& mask, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1);

/// Binary grid (0/1 doubles) of a mask max-pooled to grid_h x grid_w; an empty
/// mask gives all zeros.
std::vector<double> pool_mask_to_grid(const Mask& mask, std::size_t grid_h, std::size_t grid_w);

}  // namespace uniadet
