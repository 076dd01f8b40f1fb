#include "uniadet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <spdlog/spdlog.h>

#include "uniadet/error.hpp"
#include "uniadet/formats.hpp"
#include "uniadet/memory_bank.hpp"
#include "uniadet/parallel.hpp"
#include "uniadet/rng.hpp"
#include "uniadet/scoring.hpp"

namespace uniadet {

using nlohmann::json;

void EvalConfig::validate() const {
    if (repeats < 1) throw ValidationError("repeat must be >= 1");
    if (!(fpr_limit > 0.0 && fpr_limit <= 1.0)) throw ValidationError("AUPRO fpr limit must lie in (0, 1]");
    if (!(distance_scale > 0.0) || !std::isfinite(distance_scale))
        throw ValidationError("distance scale must be positive");
}

json EvalConfig::to_json() const {
    return {{"shots", shots},
            {"repeats", repeats},
            {"seed", seed},
            {"aupro_fpr_limit", fpr_limit},
            {"distance_scale", distance_scale},
            {"pixel_metrics", pixel_metrics},
            {"stddev", "population"}};
}

namespace {

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

json number_or_null(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

std::string format_value(double v) {
    if (std::isnan(v)) return "nan";
    std::ostringstream os;
    os.precision(6);
    os << std::fixed << v;
    return os.str();
}

void summarize(const std::vector<std::vector<double>>& per_repeat, std::vector<double>& mean, std::vector<double>& sd) {
    const std::size_t m = per_repeat.front().size();
    mean.assign(m, 0.0);
    sd.assign(m, 0.0);
    const double r = static_cast<double>(per_repeat.size());
    for (std::size_t k = 0; k < m; ++k) {
        for (const auto& row : per_repeat) mean[k] += row[k];
        mean[k] /= r;
        for (const auto& row : per_repeat) sd[k] += (row[k] - mean[k]) * (row[k] - mean[k]);
        sd[k] = std::isnan(mean[k]) ? nan() : std::sqrt(sd[k] / r);
    }
}

// Mean over classes that define the metric.
std::vector<double> class_mean(const std::vector<std::vector<double>>& per_class) {
    const std::size_t m = per_class.front().size();
    std::vector<double> out(m, nan());
    for (std::size_t k = 0; k < m; ++k) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& row : per_class)
            if (!std::isnan(row[k])) {
                sum += row[k];
                ++n;
            }
        if (n) out[k] = sum / static_cast<double>(n);
    }
    return out;
}

struct TestImage {
    const ManifestEntry* entry = nullptr;
    FeatureStack features;
    Mask mask;
};

}  // namespace

double MetricsReport::value(const std::string& class_name, const std::string& metric) const {
    const auto it = std::find(metrics.begin(), metrics.end(), metric);
    if (it == metrics.end()) throw UsageError("unknown metric '" + metric + "'");
    const auto k = static_cast<std::size_t>(it - metrics.begin());
    if (class_name == "mean") return overall.mean.at(k);
    for (const auto& c : classes)
        if (c.class_name == class_name) return c.mean.at(k);
    throw UsageError("unknown class '" + class_name + "'");
}

json MetricsReport::to_json() const {
    auto row = [&](const ClassReport& c) {
        json values = json::object(), sds = json::object();
        for (std::size_t k = 0; k < metrics.size(); ++k) {
            values[metrics[k]] = number_or_null(c.mean[k]);
            sds[metrics[k]] = number_or_null(c.stddev[k]);
        }
        return json{{"category", c.class_name},
                    {"images", c.images},
                    {"anomalies", c.anomalies},
                    {"values", values},
                    {"stddev", sds}};
    };
    json doc;
    doc["config"] = config;
    doc["metrics"] = metrics;
    doc["classes"] = json::array();
    for (const auto& c : classes) doc["classes"].push_back(row(c));
    doc["mean"] = row(overall);
    doc["references"] = references;
    json runs_json = json::array();
    for (const auto& run : runs) {
        json rj = json::object();
        for (std::size_t c = 0; c < classes.size(); ++c) {
            json vals = json::array();
            for (double v : run[c]) vals.push_back(number_or_null(v));
            rj[classes[c].class_name] = vals;
        }
        runs_json.push_back(rj);
    }
    doc["runs"] = runs_json;
    return doc;
}

std::string MetricsReport::to_csv() const {
    std::ostringstream os;
    os << "category";
    for (const auto& m : metrics) os << ',' << m;
    for (const auto& m : metrics) os << ',' << m << "_std";
    os << '\n';
    auto row = [&](const ClassReport& c) {
        os << c.class_name;
        for (double v : c.mean) os << ',' << format_value(v);
        for (double v : c.stddev) os << ',' << format_value(v);
        os << '\n';
    };
    for (const auto& c : classes) row(c);
    row(overall);
    return os.str();
}

FeatureStack align_to_weights(const FeatureStack& stack, const WeightBank& weights) {
    const auto blocks = weights.block_indices();
    if (stack.block_indices() == blocks) return stack;
    return select_layers(stack, blocks);
}

std::vector<const ManifestEntry*> draw_references(const DatasetManifest& manifest, const std::string& class_name,
                                                  std::size_t class_index, std::size_t shots, std::size_t repeat,
                                                  std::uint64_t seed) {
    std::vector<const ManifestEntry*> normals;
    for (const auto* e : manifest.select(Split::train, class_name))
        if (e->label == 0) normals.push_back(e);
    if (normals.size() < shots)
        throw ValidationError("class '" + class_name + "' has " + std::to_string(normals.size()) +
                              " normal train images, " + std::to_string(shots) + " shots requested");
    Rng rng = make_rng(seed, {0x5e1ec7, repeat, class_index});
    // partial Fisher-Yates
    for (std::size_t i = 0; i < shots; ++i) std::swap(normals[i], normals[i + uniform_index(rng, normals.size() - i)]);
    normals.resize(shots);
    return normals;
}

MetricsReport evaluate(const DatasetManifest& manifest, const FeatureProvider& provider, const WeightBank& weights,
                       const EvalConfig& cfg) {
    cfg.validate();
    weights.validate();
    const auto classes = manifest.class_names();

    // every class must be testable and, for few-shot, have enough references
    std::vector<std::string> problems;
    for (const auto& cls : classes) {
        if (manifest.select(Split::test, cls).empty()) problems.push_back(cls + " (no test images)");
        if (cfg.shots > 0) {
            std::size_t normals = 0;
            for (const auto* e : manifest.select(Split::train, cls)) normals += e->label == 0;
            if (normals < cfg.shots)
                problems.push_back(cls + " (" + std::to_string(normals) + " normal train images < " +
                                   std::to_string(cfg.shots) + " shots)");
        }
    }
    if (!problems.empty()) {
        std::string msg = "cannot evaluate classes:";
        for (const auto& p : problems) msg += " " + p + ";";
        throw ValidationError(msg);
    }

    // test features and masks, loaded once
    std::vector<TestImage> tests;
    for (const auto* e : manifest.select(Split::test)) tests.push_back({e, {}, {}});
    parallel_for(tests.size(), [&](std::size_t i) {
        auto& t = tests[i];
        t.features = align_to_weights(provider.features(*t.entry), weights);
        check_compatible(t.features, weights);
        if (t.entry->mask_path)
            t.mask = read_mask(*t.entry->mask_path, std::make_pair(t.features.image_height, t.features.image_width));
        if (t.entry->label == 1 && cfg.pixel_metrics && (t.mask.empty() || !t.mask.any()))
            throw ValidationError("anomalous test entry '" + t.entry->id + "' has no anomalous mask pixels");
    });

    FewShotOptions few;
    few.distance_scale = cfg.distance_scale;
    MetricsReport report;
    const std::size_t metric_count = report.metrics.size();

    std::vector<AnomalyPrediction> zero_shot;
    if (cfg.shots == 0) {
        zero_shot.resize(tests.size());
        parallel_for(tests.size(), [&](std::size_t i) { zero_shot[i] = predict_zero_shot(tests[i].features, weights); });
    }

    // reference features are cached by id across repeats
    std::map<std::string, FeatureStack> ref_cache;

    for (std::size_t r = 0; r < cfg.repeats; ++r) {
        std::vector<std::vector<double>> per_class;
        json drawn = json::object();
        for (std::size_t ci = 0; ci < classes.size(); ++ci) {
            const auto& cls = classes[ci];
            std::vector<std::size_t> idx;
            for (std::size_t i = 0; i < tests.size(); ++i)
                if (tests[i].entry->class_name == cls) idx.push_back(i);

            std::vector<AnomalyPrediction> preds(idx.size());
            if (cfg.shots == 0) {
                for (std::size_t j = 0; j < idx.size(); ++j) preds[j] = zero_shot[idx[j]];
            } else {
                const auto refs = draw_references(manifest, cls, ci, cfg.shots, r, cfg.seed);
                std::vector<FeatureStack> ref_features;
                json ids = json::array();
                for (const auto* e : refs) {
                    auto it = ref_cache.find(e->id);
                    if (it == ref_cache.end())
                        it = ref_cache.emplace(e->id, align_to_weights(provider.features(*e), weights)).first;
                    ref_features.push_back(it->second);
                    ids.push_back(e->id);
                }
                drawn[cls] = ids;
                const MemoryBank bank = build_bank(ref_features);
                parallel_for(idx.size(), [&](std::size_t j) {
                    preds[j] = predict_few_shot(tests[idx[j]].features, weights, bank, few);
                });
            }

            ClassEvaluation ev;
            ev.class_name = cls;
            for (std::size_t j = 0; j < idx.size(); ++j) {
                ev.image.add(preds[j].score, tests[idx[j]].entry->label == 1);
                if (cfg.pixel_metrics) {
                    ev.maps.push_back(std::move(preds[j].map));
                    ev.masks.push_back(tests[idx[j]].mask);
                }
            }
            auto values = evaluate_class(ev, cfg.fpr_limit);
            values.resize(metric_count, nan());
            per_class.push_back(std::move(values));
        }
        report.runs.push_back(std::move(per_class));
        if (cfg.shots > 0) report.references.push_back(std::move(drawn));
    }

    for (std::size_t ci = 0; ci < classes.size(); ++ci) {
        ClassReport cr;
        cr.class_name = classes[ci];
        for (const auto& t : tests)
            if (t.entry->class_name == classes[ci]) {
                ++cr.images;
                cr.anomalies += t.entry->label == 1;
            }
        std::vector<std::vector<double>> per_repeat;
        for (const auto& run : report.runs) per_repeat.push_back(run[ci]);
        summarize(per_repeat, cr.mean, cr.stddev);
        report.classes.push_back(std::move(cr));
    }
    report.overall.class_name = "mean";
    std::vector<std::vector<double>> mean_rows;
    for (const auto& run : report.runs) mean_rows.push_back(class_mean(run));
    summarize(mean_rows, report.overall.mean, report.overall.stddev);
    for (const auto& c : report.classes) {
        report.overall.images += c.images;
        report.overall.anomalies += c.anomalies;
    }

    report.config = cfg.to_json();
    report.config["tau"] = weights.tau;
    report.config["lambda_p"] = weights.lambda_p;
    report.config["lambda_f"] = weights.lambda_f;
    report.config["blocks"] = weights.block_indices();
    report.config["weights_metadata"] = weights.metadata;
    report.config["provider"] = provider.describe();
    spdlog::debug("evaluated {} test images over {} repeat(s)", tests.size(), cfg.repeats);
    return report;
}

void write_report(const MetricsReport& report, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
    auto dump = [&](const std::filesystem::path& p, const std::string& text) {
        std::ofstream out(p, std::ios::trunc);
        if (!out) throw IoError("cannot write '" + p.string() + "'");
        out << text;
        if (!out) throw IoError("write failed: '" + p.string() + "'");
    };
    dump(out_dir / "report.csv", report.to_csv());
    dump(out_dir / "report.json", report.to_json().dump(2) + "\n");
}

}  // namespace uniadet
