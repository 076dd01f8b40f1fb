#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uniadet/types.hpp"

namespace uniadet {

enum class Optimizer { adam, sgd };

/// Ablation switches: DCS (separate cls/seg heads), DHF (separate heads per
/// layer) and CAA (class-aware augmentation).
struct AblationFlags {
    bool decouple_cls_seg = true;
    bool decouple_layers = true;
    bool use_caa = true;
};

struct LossWeights {
    double ce = 1.0;
    double focal = 1.0;
    double dice = 1.0;
};

struct TrainConfig {
    int epochs = 15;
    double learning_rate = 1e-3;
    double tau = kDefaultTau;
    double lambda_p = kDefaultLambdaP;
    double lambda_f = kDefaultLambdaF;
    Optimizer optimizer = Optimizer::adam;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double caa_probability = 0.5;
    std::vector<int> caa_grids{2, 3};
    std::uint64_t seed = 0;
    AblationFlags ablation;
    double focal_gamma = 2.0;
    double focal_alpha = 1.0;
    double dice_smooth = 1.0;
    LossWeights loss_weights;
    std::size_t batch_size = 16;
    /// Sum segmentation/classification losses over layers (true) or average them.
    bool sum_over_layers = true;
    /// Manifest split used as the training corpus.
    std::string split = "train";

    void validate() const;
    nlohmann::json to_json() const;
};

}  // namespace uniadet
