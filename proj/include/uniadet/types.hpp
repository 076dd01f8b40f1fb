#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace uniadet {

/// Dense row-major 2-D array of doubles. Used for anomaly maps at any resolution.
struct Grid {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Grid() = default;
    Grid(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

    std::size_t size() const { return values.size(); }
    bool empty() const { return values.empty(); }
    double max() const;
    double min() const;

    bool operator==(const Grid&) const = default;
};

/// Frozen representations of one transformer block: a global token and a
/// grid_h x grid_w grid of patch tokens, each of length `dim`.
struct LayerFeatures {
    int block_index = 0;
    std::size_t dim = 0;
    std::size_t grid_h = 0;
    std::size_t grid_w = 0;
    std::vector<float> global_token;
    std::vector<float> patch_tokens;  // [grid_h][grid_w][dim]

    std::size_t cells() const { return grid_h * grid_w; }

    std::span<const float> patch(std::size_t cell) const {
        return {patch_tokens.data() + cell * dim, dim};
    }
    std::span<const float> patch(std::size_t r, std::size_t c) const { return patch(r * grid_w + c); }
    std::span<float> patch(std::size_t cell) { return {patch_tokens.data() + cell * dim, dim}; }

    /// Throws ShapeError / DomainError on inconsistent sizes or non-finite values.
    void validate() const;

    bool operator==(const LayerFeatures&) const = default;
};

/// All layers extracted from one image, ordered by ascending block index.
struct FeatureStack {
    std::vector<LayerFeatures> layers;
    std::size_t image_height = 0;
    std::size_t image_width = 0;
    std::string source_id;

    std::vector<int> block_indices() const;
    void validate() const;

    bool operator==(const FeatureStack&) const = default;
};

/// Two-class weight matrix (d x 2), stored column-major: normal column first.
struct TwoClassWeights {
    std::size_t dim = 0;
    std::vector<double> values;

    TwoClassWeights() = default;
    explicit TwoClassWeights(std::size_t d) : dim(d), values(2 * d, 0.0) {}

    std::span<const double> normal() const { return {values.data(), dim}; }
    std::span<const double> anomaly() const { return {values.data() + dim, dim}; }
    std::span<double> normal() { return {values.data(), dim}; }
    std::span<double> anomaly() { return {values.data() + dim, dim}; }

    /// Swaps the normal and anomaly columns.
    TwoClassWeights swapped() const;

    bool operator==(const TwoClassWeights&) const = default;
};

struct LayerWeights {
    int block_index = 0;
    TwoClassWeights cls;
    TwoClassWeights seg;

    std::size_t dim() const { return cls.dim; }

    bool operator==(const LayerWeights&) const = default;
};

inline constexpr double kDefaultTau = 0.07;
inline constexpr double kDefaultLambdaP = 0.5;
inline constexpr double kDefaultLambdaF = 0.5;

/// The learned artifact: per-layer classification and segmentation heads plus
/// the softmax temperature and the two fusion coefficients.
struct WeightBank {
    std::vector<LayerWeights> layers;
    double tau = kDefaultTau;
    double lambda_p = kDefaultLambdaP;
    double lambda_f = kDefaultLambdaF;
    nlohmann::json metadata = nlohmann::json::object();

    std::vector<int> block_indices() const;

    /// Non-zero finite columns, tau > 0, lambdas in [0, 1].
    void validate() const;

    bool operator==(const WeightBank&) const = default;
};

struct AnomalyPrediction {
    Grid map;  // image_height x image_width, values in [0, 1]
    double score = 0.0;
    std::vector<Grid> layer_maps;  // per-layer grids, diagnostics only
    std::vector<double> layer_scores;
};

/// Throws ConfigError unless `weights` was trained for exactly the layers in
/// `features` (same block indices, same order, same dims).
void check_compatible(const FeatureStack& features, const WeightBank& weights);

}  // namespace uniadet
