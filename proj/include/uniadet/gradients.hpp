#pragma once

#include <span>
#include <string>
#include <vector>

#include "uniadet/raster.hpp"
#include "uniadet/training_config.hpp"
#include "uniadet/types.hpp"

namespace uniadet {

/// One training example after feature extraction.
struct LabeledFeatures {
    std::string id;
    FeatureStack features;
    Mask mask;  // image-resolution ground truth; empty = all normal
    int label = 0;
};

struct LossBreakdown {
    double total = 0.0;  // weighted sum
    double ce = 0.0;
    double focal = 0.0;
    double dice = 0.0;

    LossBreakdown& operator+=(const LossBreakdown& o);
    LossBreakdown& operator/=(double n);
};

/// d(loss)/d(weights), shaped like WeightBank::layers.
struct LayerGradient {
    TwoClassWeights cls;
    TwoClassWeights seg;
};

struct GradientResult {
    std::vector<LayerGradient> layers;
    LossBreakdown loss;
};

/// Batch-mean loss of the per-layer CE (classification) and focal + Dice
/// (segmentation) objectives.
LossBreakdown evaluate_loss(std::span<const LabeledFeatures> batch, const WeightBank& weights,
                            const TrainConfig& cfg);

/// Closed-form gradient of evaluate_loss with respect to every weight entry.
/// Per-sample contributions run in parallel and are reduced in sample order.
GradientResult compute_gradients(std::span<const LabeledFeatures> batch, const WeightBank& weights,
                                 const TrainConfig& cfg);

/// Gradient and loss of a single sample (not averaged).
GradientResult sample_gradient(const LabeledFeatures& sample, const WeightBank& weights, const TrainConfig& cfg);

}  // namespace uniadet
