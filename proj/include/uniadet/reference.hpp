#pragma once

#include <span>

#include "uniadet/gradients.hpp"
#include "uniadet/memory_bank.hpp"
#include "uniadet/types.hpp"

// Straightforward single-threaded versions of the parallel kernels. Tests
// compare against these and the benchmark times both.
namespace uniadet::reference {

Grid score_patches(const LayerFeatures& features, const TwoClassWeights& head, double tau);

Grid query_layer(const LayerFeatures& query, const BankLayer& bank);

GradientResult compute_gradients(std::span<const LabeledFeatures> batch, const WeightBank& weights,
                                 const TrainConfig& cfg);

}  // namespace uniadet::reference
