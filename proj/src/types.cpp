#include "uniadet/types.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "uniadet/error.hpp"

namespace uniadet {

double Grid::max() const {
    if (values.empty()) throw UsageError("max of an empty grid");
    return *std::max_element(values.begin(), values.end());
}

double Grid::min() const {
    if (values.empty()) throw UsageError("min of an empty grid");
    return *std::min_element(values.begin(), values.end());
}

void LayerFeatures::validate() const {
    const auto tag = "layer block " + std::to_string(block_index);
    if (dim == 0) throw ShapeError(tag + ": dim must be positive");
    if (grid_h == 0 || grid_w == 0) throw ShapeError(tag + ": empty patch grid");
    if (global_token.size() != dim) throw ShapeError(tag + ": global token length != dim");
    if (patch_tokens.size() != cells() * dim) throw ShapeError(tag + ": patch token count != grid_h*grid_w*dim");
    for (float v : global_token)
        if (!std::isfinite(v)) throw DomainError(tag + ": non-finite value in global token");
    for (std::size_t i = 0; i < patch_tokens.size(); ++i) {
        if (!std::isfinite(patch_tokens[i])) {
            const auto cell = i / dim;
            throw DomainError(tag + ": non-finite value in patch token (row " + std::to_string(cell / grid_w) +
                              ", col " + std::to_string(cell % grid_w) + ")");
        }
    }
}

std::vector<int> FeatureStack::block_indices() const {
    std::vector<int> out;
    out.reserve(layers.size());
    for (const auto& l : layers) out.push_back(l.block_index);
    return out;
}

void FeatureStack::validate() const {
    if (layers.empty()) throw ShapeError("feature stack has no layers");
    if (image_height == 0 || image_width == 0) throw ShapeError("feature stack has zero image size");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        layers[i].validate();
        if (i > 0 && layers[i].block_index <= layers[i - 1].block_index)
            throw ShapeError("feature stack layers are not in ascending block order");
    }
}

TwoClassWeights TwoClassWeights::swapped() const {
    TwoClassWeights out(dim);
    std::copy(values.begin() + static_cast<std::ptrdiff_t>(dim), values.end(), out.values.begin());
    std::copy(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(dim),
              out.values.begin() + static_cast<std::ptrdiff_t>(dim));
    return out;
}

std::vector<int> WeightBank::block_indices() const {
    std::vector<int> out;
    out.reserve(layers.size());
    for (const auto& l : layers) out.push_back(l.block_index);
    return out;
}

namespace {

void check_head(const TwoClassWeights& w, const std::string& tag) {
    if (w.dim == 0 || w.values.size() != 2 * w.dim) throw ShapeError(tag + ": malformed weight matrix");
    for (auto column : {w.normal(), w.anomaly()}) {
        double norm2 = 0.0;
        for (double v : column) {
            if (!std::isfinite(v)) throw DomainError(tag + ": non-finite weight");
            norm2 += v * v;
        }
        if (norm2 == 0.0) throw DomainError(tag + ": zero weight column");
    }
}

}  // namespace

void WeightBank::validate() const {
    if (layers.empty()) throw ConfigError("weight bank has no layers");
    if (!(tau > 0.0) || !std::isfinite(tau)) throw DomainError("tau must be positive");
    if (!(lambda_p >= 0.0 && lambda_p <= 1.0)) throw DomainError("lambda_p must lie in [0, 1]");
    if (!(lambda_f >= 0.0 && lambda_f <= 1.0)) throw DomainError("lambda_f must lie in [0, 1]");
    for (const auto& l : layers) {
        const auto tag = "weights block " + std::to_string(l.block_index);
        check_head(l.cls, tag + " cls");
        check_head(l.seg, tag + " seg");
        if (l.cls.dim != l.seg.dim) throw ShapeError(tag + ": cls/seg dims differ");
    }
}

void check_compatible(const FeatureStack& features, const WeightBank& weights) {
    if (features.layers.size() != weights.layers.size())
        throw ConfigError("feature stack has " + std::to_string(features.layers.size()) + " layers, weights have " +
                          std::to_string(weights.layers.size()));
    for (std::size_t i = 0; i < features.layers.size(); ++i) {
        const auto& f = features.layers[i];
        const auto& w = weights.layers[i];
        if (f.block_index != w.block_index)
            throw ConfigError("layer " + std::to_string(i) + ": features are from block " +
                              std::to_string(f.block_index) + ", weights from block " +
                              std::to_string(w.block_index));
        if (f.dim != w.dim())
            throw ConfigError("block " + std::to_string(f.block_index) + ": feature dim " + std::to_string(f.dim) +
                              " != weight dim " + std::to_string(w.dim()));
    }
}

}  // namespace uniadet
