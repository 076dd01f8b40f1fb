#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "uniadet/types.hpp"

namespace uniadet {

/// Unit-normalized normal patch tokens from one layer of K reference images,
/// stored row-major [rows x dim] in reference order, then row-major grid order.
struct BankLayer {
    int block_index = 0;
    std::size_t dim = 0;
    std::size_t grid_h = 0;
    std::size_t grid_w = 0;
    std::size_t rows = 0;
    std::vector<double> tokens;

    std::span<const double> row(std::size_t i) const { return {tokens.data() + i * dim, dim}; }

    bool operator==(const BankLayer&) const = default;
};

struct MemoryBank {
    std::vector<BankLayer> layers;
    std::size_t shots = 0;
    std::vector<std::string> source_ids;

    std::vector<int> block_indices() const;

    bool operator==(const MemoryBank&) const = default;
};

/// Flattens and unit-normalizes every patch token of every reference, layer by
/// layer. Throws ConfigError when the references disagree on layer structure.
MemoryBank build_bank(std::span<const FeatureStack> references);

/// Exact nearest-neighbour cosine distance, min over bank rows of
/// 1 - <q, m>, for every patch of `query`. Values lie in [0, 2].
Grid query_layer(const LayerFeatures& query, const BankLayer& bank);

struct FewShotOptions {
    /// Multiplier applied to raw [0, 2] distances so they mix with [0, 1]
    /// probabilities.
    double distance_scale = 0.5;
};

/// Few-shot inference: averaged nearest-neighbour distance maps fused with
/// the zero-shot map (lambda_f), image score fused with the fused map maximum
/// (lambda_p).
AnomalyPrediction predict_few_shot(const FeatureStack& features, const WeightBank& weights, const MemoryBank& bank,
                                   const FewShotOptions& options = {});

/// Throws ConfigError unless the bank covers exactly the layers of `features`.
void check_compatible(const FeatureStack& features, const MemoryBank& bank);

}  // namespace uniadet
