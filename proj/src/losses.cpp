#include "uniadet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "uniadet/error.hpp"

namespace uniadet {

namespace {

void check_shapes(std::span<const double> p, std::span<const double> m, const char* what) {
    if (p.size() != m.size())
        throw ShapeError(std::string(what) + ": map has " + std::to_string(p.size()) + " cells, mask has " +
                         std::to_string(m.size()));
    if (p.empty()) throw ShapeError(std::string(what) + ": empty map");
}

bool clamped(double p) { return p < kProbEpsilon || p > 1.0 - kProbEpsilon; }

double clamp_prob(double p) { return std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon); }

// Focal term for one cell written in terms of p_t, plus its derivative in p_t.
double focal_term(double pt, double gamma, double alpha) {
    return -alpha * std::pow(1.0 - pt, gamma) * std::log(pt);
}

double focal_term_grad(double pt, double gamma, double alpha) {
    const double one_minus = 1.0 - pt;
    const double tail = gamma == 0.0 ? 0.0 : gamma * std::pow(one_minus, gamma - 1.0) * std::log(pt);
    return alpha * (tail - std::pow(one_minus, gamma) / pt);
}

}  // namespace

double cross_entropy_loss(double anomaly_prob, int label) {
    const double p = clamp_prob(anomaly_prob);
    return label ? -std::log(p) : -std::log(1.0 - p);
}

double cross_entropy_grad(double anomaly_prob, int label) {
    if (clamped(anomaly_prob)) return 0.0;
    return label ? -1.0 / anomaly_prob : 1.0 / (1.0 - anomaly_prob);
}

double focal_loss(std::span<const double> prob_map, std::span<const double> mask, double gamma, double alpha) {
    check_shapes(prob_map, mask, "focal_loss");
    double total = 0.0;
    for (std::size_t i = 0; i < prob_map.size(); ++i) {
        const double p = clamp_prob(prob_map[i]);
        total += focal_term(mask[i] > 0.5 ? p : 1.0 - p, gamma, alpha);
    }
    return total / static_cast<double>(prob_map.size());
}

std::vector<double> focal_grad(std::span<const double> prob_map, std::span<const double> mask, double gamma,
                               double alpha) {
    check_shapes(prob_map, mask, "focal_grad");
    const double inv_n = 1.0 / static_cast<double>(prob_map.size());
    std::vector<double> g(prob_map.size(), 0.0);
    for (std::size_t i = 0; i < prob_map.size(); ++i) {
        const double p = prob_map[i];
        if (clamped(p)) continue;
        // dp_t/dp = +1 on anomalous cells, -1 on normal cells
        if (mask[i] > 0.5)
            g[i] = focal_term_grad(p, gamma, alpha) * inv_n;
        else
            g[i] = -focal_term_grad(1.0 - p, gamma, alpha) * inv_n;
    }
    return g;
}

double dice_loss(std::span<const double> prob_map, std::span<const double> mask, double smooth) {
    check_shapes(prob_map, mask, "dice_loss");
    double inter = 0.0, sp = 0.0, sm = 0.0;
    for (std::size_t i = 0; i < prob_map.size(); ++i) {
        inter += prob_map[i] * mask[i];
        sp += prob_map[i];
        sm += mask[i];
    }
    const double denom = sp + sm + smooth;
    if (denom == 0.0) return 0.0;
    return std::clamp(1.0 - (2.0 * inter + smooth) / denom, 0.0, 1.0);
}

std::vector<double> dice_grad(std::span<const double> prob_map, std::span<const double> mask, double smooth) {
    check_shapes(prob_map, mask, "dice_grad");
    double inter = 0.0, sp = 0.0, sm = 0.0;
    for (std::size_t i = 0; i < prob_map.size(); ++i) {
        inter += prob_map[i] * mask[i];
        sp += prob_map[i];
        sm += mask[i];
    }
    const double denom = sp + sm + smooth;
    std::vector<double> g(prob_map.size(), 0.0);
    if (denom == 0.0) return g;
    const double numer = 2.0 * inter + smooth;
    const double denom2 = denom * denom;
    for (std::size_t i = 0; i < prob_map.size(); ++i) g[i] = -(2.0 * mask[i] * denom - numer) / denom2;
    return g;
}

}  // namespace uniadet
