#include "uniadet/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "uniadet/error.hpp"

namespace uniadet {

namespace {

template <typename A>
double cosine_impl(std::span<const A> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw ShapeError("cosine_similarity: lengths " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()));
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a[i];
        dot += x * b[i];
        na += x * x;
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw DomainError("cosine_similarity: zero-norm vector");
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double column_norm(std::span<const double> w) {
    double n = 0.0;
    for (double v : w) n += v * v;
    if (n == 0.0) throw DomainError("zero weight column");
    return std::sqrt(n);
}

void check_tau(double tau) {
    if (!(tau > 0.0)) throw DomainError("tau must be positive");
}

}  // namespace

double cosine_similarity(std::span<const double> a, std::span<const double> b) { return cosine_impl(a, b); }

double cosine_similarity(std::span<const float> a, std::span<const double> b) { return cosine_impl(a, b); }

double two_class_softmax(double sim_normal, double sim_anomaly, double tau) {
    check_tau(tau);
    const double zn = sim_normal / tau;
    const double za = sim_anomaly / tau;
    const double m = std::max(zn, za);
    const double en = std::exp(zn - m);
    const double ea = std::exp(za - m);
    return ea / (en + ea);
}

double clamp_unit(double v) { return std::clamp(v, 0.0, 1.0); }

Grid score_patches(const LayerFeatures& features, const TwoClassWeights& head, double tau) {
    check_tau(tau);
    if (head.dim != features.dim)
        throw ShapeError("block " + std::to_string(features.block_index) + ": weight dim " +
                         std::to_string(head.dim) + " != feature dim " + std::to_string(features.dim));
    const double norm_n = column_norm(head.normal());
    const double norm_a = column_norm(head.anomaly());
    const auto wn = head.normal();
    const auto wa = head.anomaly();
    const std::size_t d = features.dim;
    const auto cells = static_cast<long long>(features.cells());

    Grid out(features.grid_h, features.grid_w);
    bool zero_token = false;
#pragma omp parallel for schedule(static) reduction(|| : zero_token)
    for (long long c = 0; c < cells; ++c) {
        const float* t = features.patch_tokens.data() + static_cast<std::size_t>(c) * d;
        double dn = 0.0, da = 0.0, nt = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            const double x = t[k];
            dn += x * wn[k];
            da += x * wa[k];
            nt += x * x;
        }
        if (nt == 0.0) {
            zero_token = true;
            continue;
        }
        const double norm_t = std::sqrt(nt);
        const double sn = std::clamp(dn / (norm_t * norm_n), -1.0, 1.0);
        const double sa = std::clamp(da / (norm_t * norm_a), -1.0, 1.0);
        out.values[static_cast<std::size_t>(c)] = two_class_softmax(sn, sa, tau);
    }
    if (zero_token)
        throw DomainError("block " + std::to_string(features.block_index) + ": zero-norm patch token");
    return out;
}

double score_global(const LayerFeatures& features, const TwoClassWeights& head, double tau) {
    std::span<const float> g(features.global_token);
    return two_class_softmax(cosine_similarity(g, head.normal()), cosine_similarity(g, head.anomaly()), tau);
}

LayerScore score_layer(const LayerFeatures& features, const LayerWeights& weights, double tau) {
    return {score_patches(features, weights.seg, tau), score_global(features, weights.cls, tau)};
}

LayerScore score_layer_shared(const LayerFeatures& features, const TwoClassWeights& shared, double tau) {
    return {score_patches(features, shared, tau), score_global(features, shared, tau)};
}

Grid upsample_map(const Grid& map, std::size_t out_h, std::size_t out_w) {
    if (out_h == 0 || out_w == 0) throw UsageError("upsample_map: target size must be positive");
    if (map.empty()) throw UsageError("upsample_map: empty input grid");
    if (map.rows == out_h && map.cols == out_w) return map;

    const double sy = out_h > 1 ? static_cast<double>(map.rows - 1) / static_cast<double>(out_h - 1) : 0.0;
    const double sx = out_w > 1 ? static_cast<double>(map.cols - 1) / static_cast<double>(out_w - 1) : 0.0;

    std::vector<std::size_t> x0(out_w), x1(out_w);
    std::vector<double> fx(out_w);
    for (std::size_t j = 0; j < out_w; ++j) {
        const double x = static_cast<double>(j) * sx;
        x0[j] = std::min(static_cast<std::size_t>(x), map.cols - 1);
        x1[j] = std::min(x0[j] + 1, map.cols - 1);
        fx[j] = x - static_cast<double>(x0[j]);
    }

    Grid out(out_h, out_w);
    const auto rows = static_cast<long long>(out_h);
#pragma omp parallel for schedule(static)
    for (long long ii = 0; ii < rows; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        const double y = static_cast<double>(i) * sy;
        const std::size_t y0 = std::min(static_cast<std::size_t>(y), map.rows - 1);
        const std::size_t y1 = std::min(y0 + 1, map.rows - 1);
        const double fy = y - static_cast<double>(y0);
        for (std::size_t j = 0; j < out_w; ++j) {
            const double top = map(y0, x0[j]) + (map(y0, x1[j]) - map(y0, x0[j])) * fx[j];
            const double bottom = map(y1, x0[j]) + (map(y1, x1[j]) - map(y1, x0[j])) * fx[j];
            double v = top + (bottom - top) * fy;
            // interpolation weights can overshoot by an ulp
            const double lo = std::min({map(y0, x0[j]), map(y0, x1[j]), map(y1, x0[j]), map(y1, x1[j])});
            const double hi = std::max({map(y0, x0[j]), map(y0, x1[j]), map(y1, x0[j]), map(y1, x1[j])});
            out(i, j) = std::clamp(v, lo, hi);
        }
    }
    return out;
}

Grid average_maps(std::span<const Grid> maps) {
    if (maps.empty()) throw UsageError("average_maps: no layers");
    std::size_t finest = 0;
    for (std::size_t i = 1; i < maps.size(); ++i)
        if (maps[i].size() > maps[finest].size()) finest = i;
    const std::size_t rows = maps[finest].rows;
    const std::size_t cols = maps[finest].cols;

    Grid sum(rows, cols);
    for (const auto& m : maps) {
        const Grid resampled = upsample_map(m, rows, cols);
        for (std::size_t k = 0; k < sum.size(); ++k) sum.values[k] += resampled.values[k];
    }
    const double n = static_cast<double>(maps.size());
    for (double& v : sum.values) v /= n;
    return sum;
}

AggregatedScore aggregate_layers(std::span<const Grid> layer_maps, std::span<const double> layer_scores) {
    if (layer_maps.empty() || layer_scores.empty()) throw UsageError("aggregate_layers: no layers");
    if (layer_maps.size() != layer_scores.size())
        throw ShapeError("aggregate_layers: map and score counts differ");
    double total = 0.0;
    for (double s : layer_scores) total += s;
    return {average_maps(layer_maps), total / static_cast<double>(layer_scores.size())};
}

AnomalyPrediction predict_zero_shot(const FeatureStack& features, const WeightBank& weights) {
    check_compatible(features, weights);
    AnomalyPrediction pred;
    pred.layer_maps.reserve(features.layers.size());
    pred.layer_scores.reserve(features.layers.size());
    for (std::size_t l = 0; l < features.layers.size(); ++l) {
        auto ls = score_layer(features.layers[l], weights.layers[l], weights.tau);
        pred.layer_maps.push_back(std::move(ls.map));
        pred.layer_scores.push_back(ls.score);
    }
    const auto agg = aggregate_layers(pred.layer_maps, pred.layer_scores);
    pred.map = upsample_map(agg.map, features.image_height, features.image_width);
    for (double& v : pred.map.values) v = clamp_unit(v);
    pred.score = clamp_unit(fuse(agg.score, pred.map.max(), weights.lambda_p));
    return pred;
}

}  // namespace uniadet
