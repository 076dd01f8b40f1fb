#include "uniadet/augment.hpp"

#include <algorithm>
#include <numeric>

#include <spdlog/spdlog.h>

#include "uniadet/error.hpp"

namespace uniadet {

bool TrainSample::consistent() const {
    if (mask.empty()) return label == 0;
    return (label == 1) == mask.any();
}

TrainSample compose_mosaic(std::span<const TrainSample* const> tiles, int n, std::size_t out_h, std::size_t out_w) {
    if (n < 1) throw UsageError("compose_mosaic: n must be >= 1");
    const auto nn = static_cast<std::size_t>(n);
    if (tiles.size() != nn * nn) throw UsageError("compose_mosaic: expected n*n tiles");
    if (out_h < nn || out_w < nn) throw UsageError("compose_mosaic: image smaller than the grid");

    TrainSample out;
    out.image = Raster(out_h, out_w, tiles[0]->image.channels);
    out.mask = Mask(out_h, out_w);
    for (std::size_t gi = 0; gi < nn; ++gi) {
        const auto [r0, r1] = cell_span(out_h, nn, gi);
        for (std::size_t gj = 0; gj < nn; ++gj) {
            const auto [c0, c1] = cell_span(out_w, nn, gj);
            const TrainSample& tile = *tiles[gi * nn + gj];
            if (tile.image.channels != out.image.channels) throw ShapeError("compose_mosaic: channel mismatch");
            const Raster img = resize_bilinear(tile.image, r1 - r0, c1 - c0);
            const Mask msk = resize_mask_max(tile.mask, r1 - r0, c1 - c0);
            for (std::size_t r = r0; r < r1; ++r)
                for (std::size_t c = c0; c < c1; ++c) {
                    for (std::size_t ch = 0; ch < img.channels; ++ch) out.image.at(r, c, ch) = img.at(r - r0, c - c0, ch);
                    out.mask.at(r, c) = msk.at(r - r0, c - c0);
                }
        }
    }
    return out;
}

TrainSample grid_mosaic(const TrainSample& candidate, std::span<const TrainSample* const> pool, int n, Rng& rng,
                        std::vector<std::string>* layout) {
    if (n < 1) throw UsageError("grid_mosaic: n must be >= 1");
    if (n == 1) {
        if (layout) *layout = {candidate.id};
        return candidate;
    }
    std::vector<const TrainSample*> eligible;
    for (const auto* s : pool) {
        if (s == &candidate || s->id == candidate.id) continue;
        if (s->class_name != candidate.class_name) continue;
        if (candidate.label == 0 && s->label != 0) continue;
        eligible.push_back(s);
    }
    const auto cells = static_cast<std::size_t>(n) * static_cast<std::size_t>(n);
    const std::size_t needed = cells - 1;
    if (eligible.empty()) {
        spdlog::debug("grid_mosaic: no eligible pool images for '{}', skipping", candidate.id);
        if (layout) *layout = {candidate.id};
        return candidate;
    }

    std::vector<const TrainSample*> others;
    if (eligible.size() >= needed) {
        std::shuffle(eligible.begin(), eligible.end(), rng);
        others.assign(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(needed));
    } else {
        for (std::size_t k = 0; k < needed; ++k) others.push_back(eligible[uniform_index(rng, eligible.size())]);
    }

    const std::size_t slot = uniform_index(rng, cells);
    std::vector<const TrainSample*> tiles;
    tiles.reserve(cells);
    for (std::size_t k = 0, o = 0; k < cells; ++k) tiles.push_back(k == slot ? &candidate : others[o++]);

    TrainSample out = compose_mosaic(tiles, n, candidate.image.height, candidate.image.width);
    out.label = candidate.label;
    out.class_name = candidate.class_name;
    out.id = candidate.id + "#mosaic" + std::to_string(n);
    if (layout) {
        layout->clear();
        for (const auto* t : tiles) layout->push_back(t->id);
    }
    return out;
}

TrainSample grid_crop(const TrainSample& candidate, int n, Rng& rng, std::size_t* chosen_cell) {
    if (n < 1) throw UsageError("grid_crop: n must be >= 1");
    const auto nn = static_cast<std::size_t>(n);
    const std::size_t h = candidate.image.height, w = candidate.image.width;
    if (nn > std::min(h, w)) throw UsageError("grid_crop: grid finer than the image");
    if (candidate.label == 1 && !candidate.mask.any())
        throw ValidationError("grid_crop: anomalous sample '" + candidate.id + "' has an empty mask");
    if (n == 1) {
        if (chosen_cell) *chosen_cell = 0;
        return candidate;
    }

    std::vector<std::size_t> eligible;
    for (std::size_t gi = 0; gi < nn; ++gi) {
        const auto [r0, r1] = cell_span(h, nn, gi);
        for (std::size_t gj = 0; gj < nn; ++gj) {
            if (candidate.label == 0) {
                eligible.push_back(gi * nn + gj);
                continue;
            }
            const auto [c0, c1] = cell_span(w, nn, gj);
            bool hit = false;
            for (std::size_t r = r0; r < r1 && !hit; ++r)
                for (std::size_t c = c0; c < c1 && !hit; ++c) hit = candidate.mask.at(r, c) != 0;
            if (hit) eligible.push_back(gi * nn + gj);
        }
    }
    const std::size_t cell = eligible[uniform_index(rng, eligible.size())];
    if (chosen_cell) *chosen_cell = cell;

    const auto [r0, r1] = cell_span(h, nn, cell / nn);
    const auto [c0, c1] = cell_span(w, nn, cell % nn);
    TrainSample out;
    out.image = resize_bilinear(crop(candidate.image, r0, r1, c0, c1), h, w);
    out.mask = candidate.mask.empty() ? Mask() : resize_mask_nearest(crop(candidate.mask, r0, r1, c0, c1), h, w);
    out.label = candidate.label;
    out.class_name = candidate.class_name;
    out.id = candidate.id + "#crop" + std::to_string(n);
    return out;
}

}  // namespace uniadet
