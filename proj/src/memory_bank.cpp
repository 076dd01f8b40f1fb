#include "uniadet/memory_bank.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "uniadet/error.hpp"
#include "uniadet/scoring.hpp"

namespace uniadet {

std::vector<int> MemoryBank::block_indices() const {
    std::vector<int> out;
    for (const auto& l : layers) out.push_back(l.block_index);
    return out;
}

MemoryBank build_bank(std::span<const FeatureStack> references) {
    if (references.empty()) throw UsageError("build_bank: need at least one reference");
    const auto& first = references.front();
    first.validate();
    MemoryBank bank;
    bank.shots = references.size();
    for (const auto& l : first.layers) {
        BankLayer bl;
        bl.block_index = l.block_index;
        bl.dim = l.dim;
        bl.grid_h = l.grid_h;
        bl.grid_w = l.grid_w;
        bank.layers.push_back(bl);
    }
    for (const auto& ref : references) {
        ref.validate();
        if (ref.layers.size() != first.layers.size())
            throw ConfigError("build_bank: reference '" + ref.source_id + "' has a different layer count");
        for (std::size_t li = 0; li < ref.layers.size(); ++li) {
            const auto& l = ref.layers[li];
            auto& bl = bank.layers[li];
            if (l.block_index != bl.block_index || l.dim != bl.dim || l.grid_h != bl.grid_h || l.grid_w != bl.grid_w)
                throw ConfigError("build_bank: reference '" + ref.source_id + "' differs in block " +
                                  std::to_string(bl.block_index));
            for (std::size_t c = 0; c < l.cells(); ++c) {
                const auto t = l.patch(c);
                double n2 = 0.0;
                for (float v : t) n2 += static_cast<double>(v) * static_cast<double>(v);
                if (n2 == 0.0) throw DomainError("build_bank: zero-norm patch token in '" + ref.source_id + "'");
                const double norm = std::sqrt(n2);
                for (float v : t) bl.tokens.push_back(static_cast<double>(v) / norm);
                ++bl.rows;
            }
        }
        bank.source_ids.push_back(ref.source_id);
    }
    return bank;
}

Grid query_layer(const LayerFeatures& query, const BankLayer& bank) {
    if (bank.rows == 0) throw UsageError("query_layer: empty bank layer");
    if (query.dim != bank.dim)
        throw ShapeError("query_layer: query dim " + std::to_string(query.dim) + " != bank dim " +
                         std::to_string(bank.dim));
    const std::size_t d = query.dim;
    const auto cells = static_cast<long long>(query.cells());

    // unit-normalized queries, [cells x d]
    std::vector<double> unit(query.cells() * d);
    bool zero_token = false;
#pragma omp parallel for schedule(static) reduction(|| : zero_token)
    for (long long cc = 0; cc < cells; ++cc) {
        const auto c = static_cast<std::size_t>(cc);
        const auto t = query.patch(c);
        double n2 = 0.0;
        for (float v : t) n2 += static_cast<double>(v) * static_cast<double>(v);
        if (n2 == 0.0) {
            zero_token = true;
            continue;
        }
        const double norm = std::sqrt(n2);
        for (std::size_t k = 0; k < d; ++k) unit[c * d + k] = static_cast<double>(t[k]) / norm;
    }
    if (zero_token) throw DomainError("query_layer: zero-norm query token");

    Grid out(query.grid_h, query.grid_w);
#pragma omp parallel for schedule(static)
    for (long long cc = 0; cc < cells; ++cc) {
        const auto c = static_cast<std::size_t>(cc);
        const double* qn = unit.data() + c * d;
        double best = 2.0;
        const double* row = bank.tokens.data();
        for (std::size_t r = 0; r < bank.rows; ++r, row += d) {
            double dot = 0.0;
            for (std::size_t k = 0; k < d; ++k) dot += qn[k] * row[k];
            best = std::min(best, 1.0 - dot);
        }
        out.values[c] = std::clamp(best, 0.0, 2.0);
    }
    return out;
}

void check_compatible(const FeatureStack& features, const MemoryBank& bank) {
    if (features.layers.size() != bank.layers.size())
        throw ConfigError("memory bank has " + std::to_string(bank.layers.size()) + " layers, features have " +
                          std::to_string(features.layers.size()));
    for (std::size_t i = 0; i < bank.layers.size(); ++i) {
        if (features.layers[i].block_index != bank.layers[i].block_index ||
            features.layers[i].dim != bank.layers[i].dim)
            throw ConfigError("memory bank layer " + std::to_string(i) + " does not match the features");
    }
}

AnomalyPrediction predict_few_shot(const FeatureStack& features, const WeightBank& weights, const MemoryBank& bank,
                                   const FewShotOptions& options) {
    check_compatible(features, weights);
    check_compatible(features, bank);

    const AnomalyPrediction zero = predict_zero_shot(features, weights);
    const Grid zero_grid = average_maps(zero.layer_maps);
    const double zero_score = [&] {
        double s = 0.0;
        for (double v : zero.layer_scores) s += v;
        return s / static_cast<double>(zero.layer_scores.size());
    }();

    std::vector<Grid> distances;
    distances.reserve(bank.layers.size());
    for (std::size_t l = 0; l < bank.layers.size(); ++l) distances.push_back(query_layer(features.layers[l], bank.layers[l]));
    Grid few = average_maps(distances);
    few = upsample_map(few, zero_grid.rows, zero_grid.cols);

    Grid fused(zero_grid.rows, zero_grid.cols);
    for (std::size_t k = 0; k < fused.size(); ++k)
        fused.values[k] = fuse(zero_grid.values[k], options.distance_scale * few.values[k], weights.lambda_f);

    AnomalyPrediction pred;
    pred.map = upsample_map(fused, features.image_height, features.image_width);
    for (double& v : pred.map.values) v = clamp_unit(v);
    pred.score = clamp_unit(fuse(zero_score, pred.map.max(), weights.lambda_p));
    pred.layer_maps = std::move(distances);
    pred.layer_scores = zero.layer_scores;
    return pred;
}

}  // namespace uniadet
