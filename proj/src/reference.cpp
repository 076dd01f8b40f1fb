#include "uniadet/reference.hpp"

#include <algorithm>
#include <cmath>

#include <omp.h>

#include "uniadet/error.hpp"
#include "uniadet/parallel.hpp"
#include "uniadet/scoring.hpp"

namespace uniadet {

void set_thread_count(int threads) {
    if (threads < 0) throw UsageError("thread count must be non-negative");
    if (threads > 0) omp_set_num_threads(threads);
}

int thread_count() { return omp_get_max_threads(); }

namespace reference {

Grid score_patches(const LayerFeatures& features, const TwoClassWeights& head, double tau) {
    if (head.dim != features.dim) throw ShapeError("reference::score_patches: dim mismatch");
    Grid out(features.grid_h, features.grid_w);
    for (std::size_t c = 0; c < features.cells(); ++c) {
        const auto t = features.patch(c);
        out.values[c] = two_class_softmax(cosine_similarity(t, head.normal()), cosine_similarity(t, head.anomaly()), tau);
    }
    return out;
}

Grid query_layer(const LayerFeatures& query, const BankLayer& bank) {
    if (bank.rows == 0) throw UsageError("reference::query_layer: empty bank layer");
    if (query.dim != bank.dim) throw ShapeError("reference::query_layer: dim mismatch");
    const std::size_t d = query.dim;
    Grid out(query.grid_h, query.grid_w);
    std::vector<double> q(d);
    for (std::size_t c = 0; c < query.cells(); ++c) {
        const auto t = query.patch(c);
        double n2 = 0.0;
        for (float v : t) n2 += static_cast<double>(v) * static_cast<double>(v);
        if (n2 == 0.0) throw DomainError("reference::query_layer: zero-norm query token");
        const double norm = std::sqrt(n2);
        for (std::size_t k = 0; k < d; ++k) q[k] = static_cast<double>(t[k]) / norm;
        double best = 2.0;
        for (std::size_t r = 0; r < bank.rows; ++r) {
            const auto m = bank.row(r);
            double dot = 0.0;
            for (std::size_t k = 0; k < d; ++k) dot += q[k] * m[k];
            best = std::min(best, 1.0 - dot);
        }
        out.values[c] = std::clamp(best, 0.0, 2.0);
    }
    return out;
}

GradientResult compute_gradients(std::span<const LabeledFeatures> batch, const WeightBank& weights,
                                 const TrainConfig& cfg) {
    if (batch.empty()) throw UsageError("reference::compute_gradients: empty batch");
    GradientResult out;
    out.layers.resize(weights.layers.size());
    for (std::size_t l = 0; l < weights.layers.size(); ++l) {
        out.layers[l].cls = TwoClassWeights(weights.layers[l].dim());
        out.layers[l].seg = TwoClassWeights(weights.layers[l].dim());
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (const auto& sample : batch) {
        const GradientResult part = sample_gradient(sample, weights, cfg);
        out.loss += part.loss;
        for (std::size_t l = 0; l < part.layers.size(); ++l)
            for (std::size_t k = 0; k < part.layers[l].cls.values.size(); ++k) {
                out.layers[l].cls.values[k] += part.layers[l].cls.values[k] * inv;
                out.layers[l].seg.values[k] += part.layers[l].seg.values[k] * inv;
            }
    }
    out.loss /= static_cast<double>(batch.size());
    return out;
}

}  // namespace reference
}  // namespace uniadet
