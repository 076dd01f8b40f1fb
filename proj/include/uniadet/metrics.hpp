#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uniadet/raster.hpp"
#include "uniadet/types.hpp"

namespace uniadet {

/// Scores with binary labels (1 = anomaly).
struct ScoredSet {
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;

    void add(double score, bool anomalous) {
        scores.push_back(score);
        labels.push_back(anomalous ? 1 : 0);
    }
    std::size_t positives() const;
    std::size_t negatives() const { return labels.size() - positives(); }
};

/// Probability that a random positive outscores a random negative, ties
/// counted as one half.
double auroc(const ScoredSet& set);

/// Step-wise average precision over descending unique thresholds.
double aupr(const ScoredSet& set);

/// Best F1 over thresholds at unique scores, predicting positive when score >= t.
double f1_max(const ScoredSet& set);

/// Histogram approximations over [0, 1] with `bins` equal-width bins. The AP
/// variant places the positives of a bin at their expected ranks within it.
double auroc_binned(const ScoredSet& set, std::size_t bins = 1000);
double aupr_binned(const ScoredSet& set, std::size_t bins = 1000);

inline constexpr double kDefaultAuproLimit = 0.3;

/// Per-region overlap: mean recall of every 8-connected anomalous region,
/// integrated (trapezoid) against the false-positive rate on normal pixels up
/// to `fpr_limit`, divided by `fpr_limit`. An empty mask means an all-normal
/// image of the map's size.
double aupro(std::span<const Grid> maps, std::span<const Mask> masks, double fpr_limit = kDefaultAuproLimit);

/// 8-connected component labels (0 = background, 1..n = regions).
std::vector<std::uint32_t> label_regions(const Mask& mask, std::uint32_t* count = nullptr);

/// Area under the piecewise-linear curve through (xs, ys), over x in [0, x_max].
/// xs must be non-decreasing.
double trapezoid_area(std::span<const double> xs, std::span<const double> ys, double x_max);

/// Metric columns of the report tables.
inline const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names{"I-AUROC", "I-AUPR", "I-F1max", "P-AUROC",
                                                "P-AUPR",  "P-F1max", "P-AUPRO"};
    return names;
}

/// One class's evaluation inputs.
struct ClassEvaluation {
    std::string class_name;
    ScoredSet image;
    std::vector<Grid> maps;
    std::vector<Mask> masks;
};

/// Metric values keyed like metric_names(); NaN where the metric is undefined
/// for the class (e.g. no anomalous images).
std::vector<double> evaluate_class(const ClassEvaluation& ev, double fpr_limit = kDefaultAuproLimit);

}  // namespace uniadet
