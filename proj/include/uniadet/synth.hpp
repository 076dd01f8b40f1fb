#pragma once

#include <cstdint>
#include <filesystem>

#include "uniadet/augment.hpp"
#include "uniadet/manifest.hpp"
#include "uniadet/provider.hpp"
#include "uniadet/rng.hpp"

namespace uniadet {

struct SynthOptions {
    std::filesystem::path out_dir;
    int classes = 2;
    int images_per_class = 40;
    double anomaly_fraction = 0.5;
    std::uint64_t seed = 7;
    std::size_t image_size = 64;
    /// Write a provider.json whose synthetic extractor puts global and patch
    /// anomalies on conflicting directions.
    bool conflict = false;

    void validate() const;
};

/// Writes images/, masks/, manifest.json and provider.json under out_dir.
/// Within each class the anomalous images are a seeded subset of
/// round(images_per_class * anomaly_fraction); normal and anomalous images
/// alternate between the train and test splits. Returns the manifest.
DatasetManifest synthesize_corpus(const SynthOptions& options);

/// One textured image of `class_index`, with a blob or scratch defect when
/// `anomalous`. Exposed for tests.
TrainSample synthesize_image(int class_index, bool anomalous, std::size_t size, Rng& rng);

}  // namespace uniadet
