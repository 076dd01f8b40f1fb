#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uniadet/manifest.hpp"
#include "uniadet/metrics.hpp"
#include "uniadet/provider.hpp"
#include "uniadet/types.hpp"

namespace uniadet {

struct EvalConfig {
    /// Normal reference images per class; 0 = zero-shot.
    std::size_t shots = 0;
    std::size_t repeats = 1;
    std::uint64_t seed = 0;
    double fpr_limit = kDefaultAuproLimit;
    double distance_scale = 0.5;
    bool pixel_metrics = true;

    void validate() const;
    nlohmann::json to_json() const;
};

struct ClassReport {
    std::string class_name;
    std::size_t images = 0;
    std::size_t anomalies = 0;
    std::vector<double> mean;    // per metric, over repeats
    std::vector<double> stddev;  // population std over repeats
};

struct MetricsReport {
    std::vector<std::string> metrics = metric_names();
    std::vector<ClassReport> classes;
    ClassReport overall;  // arithmetic mean of the per-class rows
    /// runs[r][c][m]: metric m of class c in repeat r.
    std::vector<std::vector<std::vector<double>>> runs;
    /// references[r][class] = reference ids drawn in repeat r (few-shot only).
    nlohmann::json references = nlohmann::json::array();
    nlohmann::json config = nlohmann::json::object();

    /// Mean value of `metric` for a class name or "mean". Throws UsageError if unknown.
    double value(const std::string& class_name, const std::string& metric) const;

    nlohmann::json to_json() const;
    /// category,<metrics...>,<metric>_std... ; last row is "mean".
    std::string to_csv() const;
};

/// Keeps only the blocks `weights` was trained on.
FeatureStack align_to_weights(const FeatureStack& stack, const WeightBank& weights);

/// Scores the test split. For shots > 0, every repeat draws `shots` normal
/// train-split references per class (uniform without replacement, seeded per
/// (repeat, class)) and runs the few-shot path.
MetricsReport evaluate(const DatasetManifest& manifest, const FeatureProvider& provider, const WeightBank& weights,
                       const EvalConfig& cfg);

/// Seeded reference draw used by evaluate() and the bank command.
std::vector<const ManifestEntry*> draw_references(const DatasetManifest& manifest, const std::string& class_name,
                                                  std::size_t class_index, std::size_t shots, std::size_t repeat,
                                                  std::uint64_t seed);

void write_report(const MetricsReport& report, const std::filesystem::path& out_dir);

}  // namespace uniadet
