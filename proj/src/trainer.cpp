#include "uniadet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

#include "uniadet/error.hpp"
#include "uniadet/formats.hpp"
#include "uniadet/parallel.hpp"
#include "uniadet/rng.hpp"

namespace uniadet {

using nlohmann::json;

void TrainConfig::validate() const {
    if (epochs < 0) throw ValidationError("epochs must be >= 0");
    if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
    if (!(tau > 0.0)) throw ValidationError("tau must be positive");
    if (!(lambda_p >= 0.0 && lambda_p <= 1.0) || !(lambda_f >= 0.0 && lambda_f <= 1.0))
        throw ValidationError("lambda_p and lambda_f must lie in [0, 1]");
    if (!(caa_probability >= 0.0 && caa_probability <= 1.0))
        throw ValidationError("CAA probability must lie in [0, 1]");
    if (caa_grids.empty()) throw ValidationError("CAA grid set is empty");
    for (int g : caa_grids)
        if (g < 1) throw ValidationError("CAA grid sizes must be >= 1");
    if (batch_size == 0) throw ValidationError("batch size must be positive");
    if (focal_gamma < 0.0 || focal_alpha < 0.0 || dice_smooth < 0.0)
        throw ValidationError("focal/dice parameters must be non-negative");
    parse_split(split);
}

json TrainConfig::to_json() const {
    return {{"epochs", epochs},
            {"learning_rate", learning_rate},
            {"tau", tau},
            {"lambda_p", lambda_p},
            {"lambda_f", lambda_f},
            {"optimizer", optimizer == Optimizer::adam ? "adam" : "sgd"},
            {"adam", {{"beta1", adam_beta1}, {"beta2", adam_beta2}, {"epsilon", adam_epsilon}}},
            {"caa_probability", caa_probability},
            {"caa_grids", caa_grids},
            {"seed", seed},
            {"ablation",
             {{"decouple_cls_seg", ablation.decouple_cls_seg},
              {"decouple_layers", ablation.decouple_layers},
              {"use_caa", ablation.use_caa}}},
            {"focal_gamma", focal_gamma},
            {"focal_alpha", focal_alpha},
            {"dice_smooth", dice_smooth},
            {"loss_weights", {{"ce", loss_weights.ce}, {"focal", loss_weights.focal}, {"dice", loss_weights.dice}}},
            {"batch_size", batch_size},
            {"layer_reduction", sum_over_layers ? "sum" : "mean"},
            {"split", split}};
}

namespace {

enum Stream : std::uint64_t { kInitStream = 1, kShuffleStream = 2, kAugmentStream = 3 };

// Maps every (layer, head) slot of a WeightBank onto a trainable matrix.
class ParameterTies {
public:
    ParameterTies(std::size_t layers, const AblationFlags& flags)
        : layers_(layers), per_layer_(flags.decouple_layers), per_head_(flags.decouple_cls_seg) {}

    std::size_t count() const { return (per_layer_ ? layers_ : 1) * (per_head_ ? 2 : 1); }

    std::size_t index(std::size_t layer, bool seg) const {
        return (per_layer_ ? layer : 0) * (per_head_ ? 2 : 1) + (per_head_ && seg ? 1 : 0);
    }

private:
    std::size_t layers_;
    bool per_layer_;
    bool per_head_;
};

void check_layout(const FeatureStack& layout, const TrainConfig& cfg) {
    layout.validate();
    if (!cfg.ablation.decouple_layers) {
        for (const auto& l : layout.layers)
            if (l.dim != layout.layers.front().dim)
                throw ConfigError("sharing weights across layers requires equal dims in every layer");
    }
}

std::vector<TwoClassWeights> params_from_bank(const WeightBank& bank, const ParameterTies& ties) {
    std::vector<TwoClassWeights> params(ties.count());
    for (std::size_t l = 0; l < bank.layers.size(); ++l) {
        params[ties.index(l, false)] = bank.layers[l].cls;
        params[ties.index(l, true)] = bank.layers[l].seg;
    }
    return params;
}

void params_to_bank(const std::vector<TwoClassWeights>& params, const ParameterTies& ties, WeightBank& bank) {
    for (std::size_t l = 0; l < bank.layers.size(); ++l) {
        bank.layers[l].cls = params[ties.index(l, false)];
        bank.layers[l].seg = params[ties.index(l, true)];
    }
}

class Optimizers {
public:
    Optimizers(const std::vector<TwoClassWeights>& params, const TrainConfig& cfg) : cfg_(cfg) {
        for (const auto& p : params) {
            m_.emplace_back(p.values.size(), 0.0);
            v_.emplace_back(p.values.size(), 0.0);
        }
    }

    void step(std::vector<TwoClassWeights>& params, const std::vector<TwoClassWeights>& grads) {
        ++t_;
        const double lr = cfg_.learning_rate;
        if (cfg_.optimizer == Optimizer::sgd) {
            for (std::size_t p = 0; p < params.size(); ++p)
                for (std::size_t k = 0; k < params[p].values.size(); ++k) params[p].values[k] -= lr * grads[p].values[k];
            return;
        }
        const double b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
        for (std::size_t p = 0; p < params.size(); ++p) {
            for (std::size_t k = 0; k < params[p].values.size(); ++k) {
                const double g = grads[p].values[k];
                m_[p][k] = b1 * m_[p][k] + (1.0 - b1) * g;
                v_[p][k] = b2 * v_[p][k] + (1.0 - b2) * g * g;
                params[p].values[k] -= lr * (m_[p][k] / c1) / (std::sqrt(v_[p][k] / c2) + cfg_.adam_epsilon);
            }
        }
    }

private:
    const TrainConfig& cfg_;
    std::vector<std::vector<double>> m_, v_;
    long t_ = 0;
};

LabeledFeatures augment_item(const TrainingItem& item, const std::vector<const TrainSample*>& pool,
                             const FeatureProvider& provider, const TrainConfig& cfg, Rng& rng) {
    const TrainSample& src = *item.raster;
    const int n = cfg.caa_grids[uniform_index(rng, cfg.caa_grids.size())];
    const bool mosaic = uniform_index(rng, 2) == 0;
    TrainSample aug = mosaic ? grid_mosaic(src, pool, n, rng) : grid_crop(src, n, rng);
    LabeledFeatures out;
    out.id = aug.id;
    out.label = aug.label;
    out.features = provider.extract(aug.image, aug.id);
    out.mask = std::move(aug.mask);
    return out;
}

}  // namespace

std::vector<TrainingItem> load_training_items(const DatasetManifest& manifest, const FeatureProvider& provider,
                                              const TrainConfig& cfg) {
    const auto entries = manifest.select(parse_split(cfg.split));
    if (entries.empty()) throw ConfigError("manifest has no '" + cfg.split + "' entries to train on");
    std::vector<TrainingItem> items(entries.size());
    parallel_for(entries.size(), [&](std::size_t i) {
        const auto& e = *entries[i];
        auto& item = items[i];
        item.base.id = e.id;
        item.base.label = e.label;
        item.base.features = provider.features(e);
        const auto dims = std::make_pair(item.base.features.image_height, item.base.features.image_width);
        if (e.mask_path) item.base.mask = read_mask(*e.mask_path, dims);
        if (e.label == 1 && !item.base.mask.any())
            throw ValidationError("training entry '" + e.id + "' is anomalous but has no anomalous mask pixels");
        if (e.label == 0 && item.base.mask.any())
            throw ValidationError("training entry '" + e.id + "' is normal but its mask marks anomalies");
        if (provider.can_extract() && e.image_path) {
            TrainSample s;
            s.id = e.id;
            s.image = read_raster(*e.image_path);
            s.mask = item.base.mask;
            s.label = e.label;
            s.class_name = e.class_name;
            item.raster = std::move(s);
        }
    });
    return items;
}

WeightBank initialize_weights(const FeatureStack& layout, const TrainConfig& cfg) {
    check_layout(layout, cfg);
    const ParameterTies ties(layout.layers.size(), cfg.ablation);
    WeightBank bank;
    bank.tau = cfg.tau;
    bank.lambda_p = cfg.lambda_p;
    bank.lambda_f = cfg.lambda_f;
    for (const auto& l : layout.layers) {
        LayerWeights lw;
        lw.block_index = l.block_index;
        lw.cls = TwoClassWeights(l.dim);
        lw.seg = TwoClassWeights(l.dim);
        bank.layers.push_back(std::move(lw));
    }
    std::vector<TwoClassWeights> params(ties.count());
    for (std::size_t p = 0; p < params.size(); ++p) {
        // every parameter group has the dim of the first layer it covers
        std::size_t layer = 0;
        while (ties.index(layer, false) != p && ties.index(layer, true) != p) ++layer;
        const std::size_t d = layout.layers[layer].dim;
        auto rng = make_rng(cfg.seed, {kInitStream, p});
        std::normal_distribution<double> gauss(0.0, 1.0);
        params[p] = TwoClassWeights(d);
        for (auto column : {params[p].normal(), params[p].anomaly()}) {
            double norm = 0.0;
            do {
                norm = 0.0;
                for (double& v : column) {
                    v = gauss(rng);
                    norm += v * v;
                }
            } while (norm == 0.0);
            norm = std::sqrt(norm);
            for (double& v : column) v /= norm;
        }
    }
    params_to_bank(params, ties, bank);
    return bank;
}

TrainResult train(const std::vector<TrainingItem>& items, const FeatureProvider& provider, const TrainConfig& cfg) {
    cfg.validate();
    if (items.empty()) throw ConfigError("no training items");
    bool has_normal = false, has_anomaly = false;
    for (const auto& it : items) (it.base.label ? has_anomaly : has_normal) = true;
    if (!has_normal || !has_anomaly)
        throw ConfigError("training needs both normal and anomalous samples; found only " +
                          std::string(has_normal ? "normal" : "anomalous") + " ones");

    const FeatureStack& layout = items.front().base.features;
    for (const auto& it : items) {
        const auto& f = it.base.features;
        bool same = f.layers.size() == layout.layers.size();
        for (std::size_t l = 0; same && l < f.layers.size(); ++l)
            same = f.layers[l].block_index == layout.layers[l].block_index && f.layers[l].dim == layout.layers[l].dim;
        if (!same) throw ConfigError("training item '" + it.base.id + "' has a different layer layout");
    }

    TrainResult result;
    result.weights = initialize_weights(layout, cfg);
    const ParameterTies ties(layout.layers.size(), cfg.ablation);
    auto params = params_from_bank(result.weights, ties);
    Optimizers opt(params, cfg);

    const bool caa = cfg.ablation.use_caa && cfg.caa_probability > 0.0;
    bool caa_available = caa;
    for (const auto& it : items) caa_available = caa_available && it.raster.has_value();
    if (caa && !caa_available)
        spdlog::warn("class-aware augmentation disabled: the feature provider cannot re-extract from images");

    std::map<std::string, std::vector<const TrainSample*>> pools;
    if (caa_available)
        for (const auto& it : items) pools[it.raster->class_name].push_back(&*it.raster);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(items.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        auto shuffle_rng = make_rng(cfg.seed, {kShuffleStream, static_cast<std::uint64_t>(epoch)});
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        LossBreakdown epoch_loss;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<LabeledFeatures> batch(end - start);
            parallel_for(batch.size(), [&](std::size_t k) {
                const std::size_t idx = order[start + k];
                const auto& item = items[idx];
                auto rng = make_rng(cfg.seed, {kAugmentStream, static_cast<std::uint64_t>(epoch), idx});
                if (caa_available && uniform_real(rng) < cfg.caa_probability)
                    batch[k] = augment_item(item, pools.at(item.raster->class_name), provider, cfg, rng);
                else
                    batch[k] = item.base;
            });

            const auto grads = compute_gradients(batch, result.weights, cfg);
            std::vector<TwoClassWeights> tied(params.size());
            for (std::size_t p = 0; p < params.size(); ++p) tied[p] = TwoClassWeights(params[p].dim);
            for (std::size_t l = 0; l < grads.layers.size(); ++l) {
                auto add = [](TwoClassWeights& dst, const TwoClassWeights& src) {
                    for (std::size_t k = 0; k < dst.values.size(); ++k) dst.values[k] += src.values[k];
                };
                add(tied[ties.index(l, false)], grads.layers[l].cls);
                add(tied[ties.index(l, true)], grads.layers[l].seg);
            }
            opt.step(params, tied);
            params_to_bank(params, ties, result.weights);
            epoch_loss += grads.loss;
            ++batches;
        }
        epoch_loss /= static_cast<double>(batches);
        result.log.push_back({epoch + 1, epoch_loss});
        spdlog::info("epoch {:>3}  loss {:.5f}  (ce {:.5f}  focal {:.5f}  dice {:.5f})", epoch + 1, epoch_loss.total,
                     epoch_loss.ce, epoch_loss.focal, epoch_loss.dice);
    }

    result.weights.validate();
    json meta = cfg.to_json();
    meta["blocks"] = layout.block_indices();
    meta["provider"] = provider.describe();
    meta["train_items"] = items.size();
    meta["caa_applied"] = caa_available;
    if (!result.log.empty()) {
        const auto& last = result.log.back().loss;
        meta["final_loss"] = {{"total", last.total}, {"ce", last.ce}, {"focal", last.focal}, {"dice", last.dice}};
    }
    result.weights.metadata = std::move(meta);
    return result;
}

TrainResult train(const DatasetManifest& manifest, const FeatureProvider& provider, const TrainConfig& cfg) {
    cfg.validate();
    return train(load_training_items(manifest, provider, cfg), provider, cfg);
}

void write_training_log(std::span<const EpochLog> log, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write training log '" + path.string() + "'");
    out << "epoch,total,ce,focal,dice\n";
    out.precision(10);
    for (const auto& e : log)
        out << e.epoch << ',' << e.loss.total << ',' << e.loss.ce << ',' << e.loss.focal << ',' << e.loss.dice << '\n';
}

}  // namespace uniadet
