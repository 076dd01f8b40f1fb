#pragma once

#include <span>
#include <string>
#include <vector>

#include "uniadet/raster.hpp"
#include "uniadet/rng.hpp"

namespace uniadet {

/// Raster-level training example.
struct TrainSample {
    std::string id;
    Raster image;
    Mask mask;  // empty or all-zero for normal samples
    int label = 0;
    std::string class_name;

    /// label = 1 iff the mask has an anomalous pixel (when a mask is present).
    bool consistent() const;
};

/// Grid Mosaic. Tiles the candidate with n*n - 1 images drawn from `pool`
/// into an n x n grid; the candidate lands in a uniformly random cell.
///
/// `pool` should hold same-category samples other than the candidate. Normal
/// candidates only draw normal pool members so the mosaic stays normal;
/// anomalous candidates draw from the whole pool. Tiles are drawn without
/// replacement when enough eligible images exist, with replacement otherwise.
/// If no eligible image exists the candidate is returned unchanged.
///
/// When `layout` is given it receives the ids of the tiles in row-major order.
TrainSample grid_mosaic(const TrainSample& candidate, std::span<const TrainSample* const> pool, int n, Rng& rng,
                        std::vector<std::string>* layout = nullptr);

/// Composes n*n tiles (row-major) into an out_h x out_w mosaic. Images are
/// shrunk bilinearly, masks by max-pooling.
TrainSample compose_mosaic(std::span<const TrainSample* const> tiles, int n, std::size_t out_h, std::size_t out_w);

/// Grid Cropping. Splits the candidate into an n x n grid, picks one cell
/// (any cell for normal samples, only anomaly-containing cells for anomalous
/// ones) and scales it back to full size. Throws ValidationError for an
/// anomalous sample with an empty mask.
TrainSample grid_crop(const TrainSample& candidate, int n, Rng& rng, std::size_t* chosen_cell = nullptr);

}  // namespace uniadet
