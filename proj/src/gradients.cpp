#include "uniadet/gradients.hpp"

#include <cmath>
#include <string>

#include "uniadet/error.hpp"
#include "uniadet/losses.hpp"
#include "uniadet/parallel.hpp"
#include "uniadet/scoring.hpp"

namespace uniadet {

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
    total += o.total;
    ce += o.ce;
    focal += o.focal;
    dice += o.dice;
    return *this;
}

LossBreakdown& LossBreakdown::operator/=(double n) {
    total /= n;
    ce /= n;
    focal /= n;
    dice /= n;
    return *this;
}

namespace {

double norm_of(std::span<const double> w) {
    double n = 0.0;
    for (double v : w) n += v * v;
    return std::sqrt(n);
}

// Cosine similarities of one token against both columns of a head, with the
// pieces needed to backpropagate through them.
struct HeadCosines {
    double sim_n = 0.0, sim_a = 0.0;
    double norm_x = 0.0;
};

HeadCosines head_cosines(std::span<const float> x, const TwoClassWeights& w, double norm_n, double norm_a) {
    double dn = 0.0, da = 0.0, nx = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double v = x[k];
        dn += v * w.values[k];
        da += v * w.values[w.dim + k];
        nx += v * v;
    }
    if (nx == 0.0) throw DomainError("zero-norm token");
    HeadCosines h;
    h.norm_x = std::sqrt(nx);
    h.sim_n = dn / (h.norm_x * norm_n);
    h.sim_a = da / (h.norm_x * norm_a);
    return h;
}

// grad += dL/dsim * d cos(w, x) / dw  where d cos/dw = x/(|w||x|) - cos * w/|w|^2
void accumulate_cos_grad(std::span<double> grad, std::span<const double> w, double norm_w, std::span<const float> x,
                         double norm_x, double cos, double dl_dsim) {
    if (dl_dsim == 0.0) return;
    const double a = dl_dsim / (norm_w * norm_x);
    const double b = dl_dsim * cos / (norm_w * norm_w);
    for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += a * static_cast<double>(x[k]) - b * w[k];
}

// Accumulates gradient of `dl_dp * p` for one token through the softmax and cosines.
void backprop_token(TwoClassWeights& grad, const TwoClassWeights& w, double norm_n, double norm_a,
                    std::span<const float> x, const HeadCosines& h, double p, double dl_dp, double tau) {
    const double dl_dz = dl_dp * p * (1.0 - p);
    const double dl_dsa = dl_dz / tau;
    accumulate_cos_grad(grad.anomaly(), w.anomaly(), norm_a, x, h.norm_x, h.sim_a, dl_dsa);
    accumulate_cos_grad(grad.normal(), w.normal(), norm_n, x, h.norm_x, h.sim_n, -dl_dsa);
}

GradientResult run_sample(const LabeledFeatures& sample, const WeightBank& weights, const TrainConfig& cfg,
                          bool want_grad) {
    check_compatible(sample.features, weights);
    const auto& lw = cfg.loss_weights;
    const double tau = cfg.tau;
    const double layer_scale = cfg.sum_over_layers ? 1.0 : 1.0 / static_cast<double>(weights.layers.size());

    GradientResult out;
    if (want_grad) out.layers.resize(weights.layers.size());

    for (std::size_t l = 0; l < weights.layers.size(); ++l) {
        const auto& f = sample.features.layers[l];
        const auto& w = weights.layers[l];
        if (want_grad) {
            out.layers[l].cls = TwoClassWeights(w.dim());
            out.layers[l].seg = TwoClassWeights(w.dim());
        }

        // classification head on the global token
        const double cn = norm_of(w.cls.normal()), ca = norm_of(w.cls.anomaly());
        if (cn == 0.0 || ca == 0.0) throw DomainError("zero weight column");
        std::span<const float> g(f.global_token);
        const auto hc = head_cosines(g, w.cls, cn, ca);
        const double p_img = two_class_softmax(hc.sim_n, hc.sim_a, tau);
        const double ce = cross_entropy_loss(p_img, sample.label);
        if (want_grad && lw.ce != 0.0) {
            const double dl_dp = layer_scale * lw.ce * cross_entropy_grad(p_img, sample.label);
            backprop_token(out.layers[l].cls, w.cls, cn, ca, g, hc, p_img, dl_dp, tau);
        }

        // segmentation head on every patch token
        const double sn = norm_of(w.seg.normal()), sa = norm_of(w.seg.anomaly());
        if (sn == 0.0 || sa == 0.0) throw DomainError("zero weight column");
        const std::size_t cells = f.cells();
        std::vector<HeadCosines> hs(cells);
        std::vector<double> probs(cells);
        for (std::size_t c = 0; c < cells; ++c) {
            hs[c] = head_cosines(f.patch(c), w.seg, sn, sa);
            probs[c] = two_class_softmax(hs[c].sim_n, hs[c].sim_a, tau);
        }
        const auto target = pool_mask_to_grid(sample.mask, f.grid_h, f.grid_w);
        const double focal = focal_loss(probs, target, cfg.focal_gamma, cfg.focal_alpha);
        const double dice = dice_loss(probs, target, cfg.dice_smooth);

        if (want_grad && (lw.focal != 0.0 || lw.dice != 0.0)) {
            std::vector<double> dl_dp(cells, 0.0);
            if (lw.focal != 0.0) {
                const auto gf = focal_grad(probs, target, cfg.focal_gamma, cfg.focal_alpha);
                for (std::size_t c = 0; c < cells; ++c) dl_dp[c] += lw.focal * gf[c];
            }
            if (lw.dice != 0.0) {
                const auto gd = dice_grad(probs, target, cfg.dice_smooth);
                for (std::size_t c = 0; c < cells; ++c) dl_dp[c] += lw.dice * gd[c];
            }
            for (std::size_t c = 0; c < cells; ++c)
                backprop_token(out.layers[l].seg, w.seg, sn, sa, f.patch(c), hs[c], probs[c],
                               layer_scale * dl_dp[c], tau);
        }

        LossBreakdown lb;
        lb.ce = layer_scale * ce;
        lb.focal = layer_scale * focal;
        lb.dice = layer_scale * dice;
        lb.total = lw.ce * lb.ce + lw.focal * lb.focal + lw.dice * lb.dice;
        out.loss += lb;
    }

    if (!std::isfinite(out.loss.total)) throw NumericError("non-finite loss for sample '" + sample.id + "'");
    if (want_grad) {
        for (const auto& lg : out.layers)
            for (const auto* head : {&lg.cls, &lg.seg})
                for (double v : head->values)
                    if (!std::isfinite(v)) throw NumericError("non-finite gradient for sample '" + sample.id + "'");
    }
    return out;
}

}  // namespace

GradientResult sample_gradient(const LabeledFeatures& sample, const WeightBank& weights, const TrainConfig& cfg) {
    return run_sample(sample, weights, cfg, true);
}

LossBreakdown evaluate_loss(std::span<const LabeledFeatures> batch, const WeightBank& weights,
                            const TrainConfig& cfg) {
    if (batch.empty()) throw UsageError("evaluate_loss: empty batch");
    LossBreakdown total;
    for (const auto& s : batch) total += run_sample(s, weights, cfg, false).loss;
    total /= static_cast<double>(batch.size());
    return total;
}

GradientResult compute_gradients(std::span<const LabeledFeatures> batch, const WeightBank& weights,
                                 const TrainConfig& cfg) {
    if (batch.empty()) throw UsageError("compute_gradients: empty batch");
    std::vector<GradientResult> parts(batch.size());
    parallel_for(batch.size(), [&](std::size_t i) { parts[i] = run_sample(batch[i], weights, cfg, true); });

    GradientResult out;
    out.layers.resize(weights.layers.size());
    for (std::size_t l = 0; l < weights.layers.size(); ++l) {
        out.layers[l].cls = TwoClassWeights(weights.layers[l].dim());
        out.layers[l].seg = TwoClassWeights(weights.layers[l].dim());
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (const auto& part : parts) {
        out.loss += part.loss;
        for (std::size_t l = 0; l < part.layers.size(); ++l) {
            for (std::size_t k = 0; k < part.layers[l].cls.values.size(); ++k) {
                out.layers[l].cls.values[k] += part.layers[l].cls.values[k] * inv;
                out.layers[l].seg.values[k] += part.layers[l].seg.values[k] * inv;
            }
        }
    }
    out.loss /= static_cast<double>(batch.size());
    return out;
}

}  // namespace uniadet
