#include "uniadet/raster.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "uniadet/error.hpp"

namespace uniadet {

double Raster::intensity(std::size_t r, std::size_t c) const {
    double s = 0.0;
    for (std::size_t ch = 0; ch < channels; ++ch) s += at(r, c, ch);
    return s / static_cast<double>(channels);
}

void Raster::validate() const {
    if (height == 0 || width == 0 || channels == 0) throw ShapeError("raster has a zero dimension");
    if (data.size() != height * width * channels) throw ShapeError("raster data size mismatch");
    for (double v : data)
        if (!std::isfinite(v)) throw DomainError("raster contains a non-finite sample");
}

bool Mask::any() const {
    return std::any_of(data.begin(), data.end(), [](std::uint8_t v) { return v != 0; });
}

std::size_t Mask::count() const {
    return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](std::uint8_t v) { return v != 0; }));
}

std::pair<std::size_t, std::size_t> cell_span(std::size_t extent, std::size_t parts, std::size_t index) {
    return {index * extent / parts, (index + 1) * extent / parts};
}

Raster resize_bilinear(const Raster& image, std::size_t out_h, std::size_t out_w) {
    if (out_h == 0 || out_w == 0) throw UsageError("resize_bilinear: target size must be positive");
    if (image.height == out_h && image.width == out_w) return image;
    Raster out(out_h, out_w, image.channels);
    const double sy = out_h > 1 ? static_cast<double>(image.height - 1) / static_cast<double>(out_h - 1) : 0.0;
    const double sx = out_w > 1 ? static_cast<double>(image.width - 1) / static_cast<double>(out_w - 1) : 0.0;
    for (std::size_t i = 0; i < out_h; ++i) {
        const double y = static_cast<double>(i) * sy;
        const std::size_t y0 = std::min(static_cast<std::size_t>(y), image.height - 1);
        const std::size_t y1 = std::min(y0 + 1, image.height - 1);
        const double fy = y - static_cast<double>(y0);
        for (std::size_t j = 0; j < out_w; ++j) {
            const double x = static_cast<double>(j) * sx;
            const std::size_t x0 = std::min(static_cast<std::size_t>(x), image.width - 1);
            const std::size_t x1 = std::min(x0 + 1, image.width - 1);
            const double fx = x - static_cast<double>(x0);
            for (std::size_t ch = 0; ch < image.channels; ++ch) {
                const double top = image.at(y0, x0, ch) * (1.0 - fx) + image.at(y0, x1, ch) * fx;
                const double bottom = image.at(y1, x0, ch) * (1.0 - fx) + image.at(y1, x1, ch) * fx;
                out.at(i, j, ch) = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    return out;
}

Mask resize_mask_max(const Mask& mask, std::size_t out_h, std::size_t out_w) {
    if (out_h == 0 || out_w == 0) throw UsageError("resize_mask_max: target size must be positive");
    if (mask.empty()) return Mask(out_h, out_w);
    Mask out(out_h, out_w);
    for (std::size_t i = 0; i < out_h; ++i) {
        // ceil on the upper bound so every source pixel lands in some cell and
        // every cell covers at least one source pixel
        const std::size_t r0 = i * mask.height / out_h;
        const std::size_t r1 = std::max(r0 + 1, ((i + 1) * mask.height + out_h - 1) / out_h);
        for (std::size_t j = 0; j < out_w; ++j) {
            const std::size_t c0 = j * mask.width / out_w;
            const std::size_t c1 = std::max(c0 + 1, ((j + 1) * mask.width + out_w - 1) / out_w);
            std::uint8_t v = 0;
            for (std::size_t r = r0; r < r1 && !v; ++r)
                for (std::size_t c = c0; c < c1; ++c)
                    if (mask.at(r, c)) {
                        v = 1;
                        break;
                    }
            out.at(i, j) = v;
        }
    }
    return out;
}

Mask resize_mask_nearest(const Mask& mask, std::size_t out_h, std::size_t out_w) {
    if (out_h == 0 || out_w == 0) throw UsageError("resize_mask_nearest: target size must be positive");
    if (mask.empty()) return Mask(out_h, out_w);
    Mask out(out_h, out_w);
    for (std::size_t i = 0; i < out_h; ++i) {
        const std::size_t r = i * mask.height / out_h;
        for (std::size_t j = 0; j < out_w; ++j) out.at(i, j) = mask.at(r, j * mask.width / out_w) ? 1 : 0;
    }
    return out;
}

Raster crop(const Raster& image, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
    if (r1 <= r0 || c1 <= c0 || r1 > image.height || c1 > image.width) throw UsageError("crop: bad bounds");
    Raster out(r1 - r0, c1 - c0, image.channels);
    for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c)
            for (std::size_t ch = 0; ch < image.channels; ++ch) out.at(r - r0, c - c0, ch) = image.at(r, c, ch);
    return out;
}

Mask crop(const Mask& mask, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
    if (r1 <= r0 || c1 <= c0) throw UsageError("crop: bad bounds");
    if (mask.empty()) return Mask(r1 - r0, c1 - c0);
    if (r1 > mask.height || c1 > mask.width) throw UsageError("crop: bad bounds");
    Mask out(r1 - r0, c1 - c0);
    for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) out.at(r - r0, c - c0) = mask.at(r, c);
    return out;
}

std::vector<double> pool_mask_to_grid(const Mask& mask, std::size_t grid_h, std::size_t grid_w) {
    std::vector<double> out(grid_h * grid_w, 0.0);
    if (mask.empty()) return out;
    const Mask pooled = resize_mask_max(mask, grid_h, grid_w);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = pooled.data[k] ? 1.0 : 0.0;
    return out;
}

}  // namespace uniadet
