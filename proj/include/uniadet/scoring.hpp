#pragma once

#include <span>
#include <vector>

#include "uniadet/types.hpp"

namespace uniadet {

/// a.b / (|a| |b|). Throws DomainError on a zero-norm input, ShapeError on a
/// length mismatch.
double cosine_similarity(std::span<const double> a, std::span<const double> b);
double cosine_similarity(std::span<const float> a, std::span<const double> b);

/// Anomaly-class probability of a two-way softmax over (sim_normal, sim_anomaly) / tau.
double two_class_softmax(double sim_normal, double sim_anomaly, double tau);

struct LayerScore {
    Grid map;  // grid_h x grid_w anomaly probabilities
    double score = 0.0;
};

/// Decoupled per-layer scoring: patch tokens against the segmentation head,
/// the global token against the classification head.
LayerScore score_layer(const LayerFeatures& features, const LayerWeights& weights, double tau);

/// Baseline scoring with one matrix for both heads.
LayerScore score_layer_shared(const LayerFeatures& features, const TwoClassWeights& shared, double tau);

/// Anomaly probability for every patch token against one head.
Grid score_patches(const LayerFeatures& features, const TwoClassWeights& head, double tau);

/// Anomaly probability of the global token against one head.
double score_global(const LayerFeatures& features, const TwoClassWeights& head, double tau);

struct AggregatedScore {
    Grid map;
    double score = 0.0;
};

/// Averages per-layer maps (each bilinearly resampled to the finest grid
/// present) and per-layer scores.
AggregatedScore aggregate_layers(std::span<const Grid> layer_maps, std::span<const double> layer_scores);

/// Mean of maps resampled to the finest grid among them.
Grid average_maps(std::span<const Grid> maps);

/// Corner-aligned bilinear resampling to out_h x out_w.
Grid upsample_map(const Grid& map, std::size_t out_h, std::size_t out_w);

/// Zero-shot inference: per-layer decoupled maps and scores, averaged across
/// layers, upsampled to image resolution. The image score fuses the mean
/// classification probability with the map maximum using lambda_p.
AnomalyPrediction predict_zero_shot(const FeatureStack& features, const WeightBank& weights);

/// (1 - lambda) * base + lambda * extra, the fusion rule shared by the score
/// and map paths.
inline double fuse(double base, double extra, double lambda) { return (1.0 - lambda) * base + lambda * extra; }

double clamp_unit(double v);

}  // namespace uniadet
