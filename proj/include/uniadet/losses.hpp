#pragma once

#include <span>
#include <vector>

namespace uniadet {

/// Probabilities are clamped to [kProbEpsilon, 1 - kProbEpsilon] before any log.
inline constexpr double kProbEpsilon = 1e-7;

/// Binary cross-entropy of an anomaly probability against a 0/1 label.
double cross_entropy_loss(double anomaly_prob, int label);

/// d(cross_entropy_loss)/d(anomaly_prob). Zero where the clamp is active.
double cross_entropy_grad(double anomaly_prob, int label);

/// Mean over cells of -alpha (1 - p_t)^gamma ln(p_t), p_t = p where mask = 1 and
/// 1 - p elsewhere. `mask` holds 0/1 values.
double focal_loss(std::span<const double> prob_map, std::span<const double> mask, double gamma, double alpha);

/// Per-cell derivative of focal_loss with respect to each probability.
std::vector<double> focal_grad(std::span<const double> prob_map, std::span<const double> mask, double gamma,
                               double alpha);

/// Soft Dice loss: 1 - (2 sum(p m) + smooth) / (sum p + sum m + smooth).
double dice_loss(std::span<const double> prob_map, std::span<const double> mask, double smooth);

std::vector<double> dice_grad(std::span<const double> prob_map, std::span<const double> mask, double smooth);

}  // namespace uniadet
