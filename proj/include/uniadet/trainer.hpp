#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "uniadet/augment.hpp"
#include "uniadet/gradients.hpp"
#include "uniadet/manifest.hpp"
#include "uniadet/provider.hpp"
#include "uniadet/training_config.hpp"

namespace uniadet {

/// A training example: its precomputed features, and the raster it came from
/// when the provider can re-extract (needed for class-aware augmentation).
struct TrainingItem {
    LabeledFeatures base;
    std::optional<TrainSample> raster;
};

struct EpochLog {
    int epoch = 0;
    LossBreakdown loss;  // mean over the epoch's batches
};

struct TrainResult {
    WeightBank weights;
    std::vector<EpochLog> log;
};

/// Loads the configured split of `manifest` into training items. Anomalous
/// entries must carry a non-empty mask.
std::vector<TrainingItem> load_training_items(const DatasetManifest& manifest, const FeatureProvider& provider,
                                              const TrainConfig& cfg);

/// Unit-norm Gaussian columns for every head, honouring the ablation ties
/// (shared cls/seg matrix without DCS, one pair for all layers without DHF).
WeightBank initialize_weights(const FeatureStack& layout, const TrainConfig& cfg);

/// Learns a WeightBank. Deterministic for a fixed cfg.seed regardless of the
/// number of worker threads.
TrainResult train(const std::vector<TrainingItem>& items, const FeatureProvider& provider, const TrainConfig& cfg);
TrainResult train(const DatasetManifest& manifest, const FeatureProvider& provider, const TrainConfig& cfg);

/// CSV with columns epoch,total,ce,focal,dice.
void write_training_log(std::span<const EpochLog> log, const std::filesystem::path& path);

}  // namespace uniadet
