#include "uniadet/commands.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "uniadet/error.hpp"
#include "uniadet/formats.hpp"
#include "uniadet/scoring.hpp"

namespace uniadet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw IoError("write failed: '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::shared_ptr<const FeatureProvider> provider_from_json(const fs::path& path) {
    json j;
    try {
        j = json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw ValidationError("provider config '" + path.string() + "': " + e.what());
    }
    const std::string kind = j.value("kind", std::string("synthetic"));
    if (kind == "synthetic") return std::make_shared<SyntheticProvider>(SyntheticConfig::from_json(j));
    if (kind == "files") {
        std::optional<fs::path> dir;
        if (j.contains("features_dir")) dir = path.parent_path() / j.at("features_dir").get<std::string>();
        return std::make_shared<FileFeatureProvider>(dir);
    }
    throw ValidationError("provider config '" + path.string() + "': unknown kind '" + kind + "'");
}

}  // namespace

std::shared_ptr<const FeatureProvider> resolve_provider(const ProviderOptions& options, const fs::path& manifest_path) {
    std::shared_ptr<const FeatureProvider> base;
    if (options.spec == "files") {
        base = std::make_shared<FileFeatureProvider>(options.features_dir);
    } else if (options.spec == "synthetic" || options.spec == "synthetic-conflict") {
        SyntheticConfig cfg;
        cfg.conflict = options.spec == "synthetic-conflict";
        base = std::make_shared<SyntheticProvider>(cfg);
    } else if (!options.spec.empty()) {
        base = provider_from_json(options.spec);
    } else {
        const fs::path sidecar = manifest_path.parent_path() / "provider.json";
        if (!options.features_dir && !manifest_path.empty() && fs::exists(sidecar))
            base = provider_from_json(sidecar);
        else
            base = std::make_shared<FileFeatureProvider>(options.features_dir);
    }
    if (options.layers.empty()) return base;
    return std::make_shared<LayerSubsetProvider>(base, options.layers);
}

void FusionOverrides::apply(WeightBank& weights) const {
    if (tau) weights.tau = *tau;
    if (lambda_p) weights.lambda_p = *lambda_p;
    if (lambda_f) weights.lambda_f = *lambda_f;
    weights.validate();
}

TrainResult run_train(const TrainCommand& cmd) {
    cmd.config.validate();
    const auto manifest = load_manifest(cmd.manifest);
    const auto provider = resolve_provider(cmd.provider, cmd.manifest);
    TrainResult result = train(manifest, *provider, cmd.config);
    write_weight_file(result.weights, cmd.out);
    write_training_log(result.log, cmd.log ? *cmd.log : fs::path(cmd.out.string() + ".log.csv"));
    return result;
}

MetricsReport run_eval(const EvalCommand& cmd) {
    ManifestOptions mo;
    mo.require_test_masks = cmd.config.pixel_metrics;
    const auto manifest = load_manifest(cmd.manifest, mo);
    const auto provider = resolve_provider(cmd.provider, cmd.manifest);
    WeightBank weights = read_weight_file(cmd.weights);
    cmd.overrides.apply(weights);
    MetricsReport report = evaluate(manifest, *provider, weights, cmd.config);
    report.config["manifest"] = cmd.manifest.string();
    report.config["weights"] = cmd.weights.string();
    if (cmd.out) write_report(report, *cmd.out);
    return report;
}

MemoryBank run_bank(const BankCommand& cmd) {
    if (cmd.shots < 1) throw ValidationError("bank: shots must be >= 1");
    const auto manifest = load_manifest(cmd.manifest);
    const auto provider = resolve_provider(cmd.provider, cmd.manifest);
    const auto classes = manifest.class_names();
    std::string cls;
    if (cmd.class_name) {
        cls = *cmd.class_name;
    } else if (classes.size() == 1) {
        cls = classes.front();
    } else {
        throw UsageError("bank: the manifest has several classes; choose one with --class");
    }
    const auto it = std::find(classes.begin(), classes.end(), cls);
    if (it == classes.end()) throw ValidationError("bank: unknown class '" + cls + "'");
    const auto refs = draw_references(manifest, cls, static_cast<std::size_t>(it - classes.begin()), cmd.shots, 0,
                                      cmd.seed);
    std::vector<FeatureStack> stacks;
    for (const auto* e : refs) stacks.push_back(provider->features(*e));
    MemoryBank bank = build_bank(stacks);
    write_bank_file(bank, cmd.out);
    return bank;
}

AnomalyPrediction run_predict(const PredictCommand& cmd) {
    WeightBank weights = read_weight_file(cmd.weights);
    cmd.overrides.apply(weights);

    FeatureStack features;
    if (cmd.input.extension() == ".ufst") {
        features = read_feature_file(cmd.input);
    } else {
        const auto provider = resolve_provider(cmd.provider, {});
        features = provider->extract(read_raster(cmd.input), cmd.input.stem().string());
    }
    features = align_to_weights(features, weights);

    AnomalyPrediction pred;
    json info;
    if (cmd.bank) {
        const MemoryBank bank = read_bank_file(*cmd.bank);
        FewShotOptions few;
        few.distance_scale = cmd.distance_scale;
        pred = predict_few_shot(features, weights, bank, few);
        info["shots"] = bank.shots;
        info["references"] = bank.source_ids;
    } else {
        pred = predict_zero_shot(features, weights);
        info["shots"] = 0;
    }
    write_map_pgm(pred.map, cmd.out);
    info["source"] = features.source_id;
    info["score"] = pred.score;
    info["layer_scores"] = pred.layer_scores;
    info["blocks"] = weights.block_indices();
    info["height"] = pred.map.rows;
    info["width"] = pred.map.cols;
    info["map_max"] = pred.map.max();
    info["tau"] = weights.tau;
    info["lambda_p"] = weights.lambda_p;
    info["lambda_f"] = weights.lambda_f;
    write_text(fs::path(cmd.out.string() + ".json"), info.dump(2) + "\n");
    return pred;
}

std::vector<AblationSetting> parse_ablation_grid(const std::string& grid, const std::vector<int>& blocks) {
    std::vector<AblationSetting> out;
    auto components = [&] {
        out.push_back({"shared", {false, false, false}, {}, 0});
        out.push_back({"dcs", {true, false, false}, {}, 0});
        out.push_back({"dcs_dhf", {true, true, false}, {}, 0});
        out.push_back({"full", {true, true, true}, {}, 0});
        out.push_back({"full_1shot", {true, true, true}, {}, 1});
    };
    auto layer_sweep = [&] {
        std::vector<int> sorted = blocks;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t k = 1; k <= sorted.size(); ++k) {
            AblationSetting s;
            s.layers.assign(sorted.end() - static_cast<std::ptrdiff_t>(k), sorted.end());
            s.name = "blocks";
            for (int b : s.layers) s.name += "_" + std::to_string(b);
            out.push_back(std::move(s));
        }
    };
    if (grid == "components") {
        components();
    } else if (grid == "layers") {
        layer_sweep();
    } else if (grid == "all") {
        components();
        layer_sweep();
    } else {
        std::stringstream settings(grid);
        std::string item;
        while (std::getline(settings, item, ';')) {
            if (item.empty()) continue;
            AblationSetting s;
            std::stringstream tokens(item);
            std::string tok;
            while (std::getline(tokens, tok, ',')) {
                if (tok == "no-dcs") {
                    s.flags.decouple_cls_seg = false;
                } else if (tok == "no-dhf") {
                    s.flags.decouple_layers = false;
                } else if (tok == "no-caa") {
                    s.flags.use_caa = false;
                } else if (tok.rfind("layers=", 0) == 0) {
                    std::stringstream ls(tok.substr(7));
                    std::string b;
                    while (std::getline(ls, b, '+')) {
                        try {
                            s.layers.push_back(std::stoi(b));
                        } catch (const std::exception&) {
                            throw UsageError("ablation: bad block '" + b + "'");
                        }
                    }
                } else if (tok.rfind("shots=", 0) == 0) {
                    try {
                        s.shots = std::stoul(tok.substr(6));
                    } catch (const std::exception&) {
                        throw UsageError("ablation: bad shots in '" + tok + "'");
                    }
                } else if (tok.rfind("name=", 0) == 0) {
                    s.name = tok.substr(5);
                } else if (!tok.empty()) {
                    throw UsageError("ablation: unknown token '" + tok + "'");
                }
            }
            if (s.name.empty()) s.name = item;
            out.push_back(std::move(s));
        }
    }
    if (out.empty()) throw UsageError("ablation: empty grid '" + grid + "'");
    return out;
}

std::vector<AblationRow> run_ablate(const AblateCommand& cmd) {
    ManifestOptions mo;
    mo.require_test_masks = cmd.eval.pixel_metrics;
    const auto manifest = load_manifest(cmd.manifest, mo);
    if (manifest.entries.empty()) throw ValidationError("ablation: empty manifest");
    const auto provider = resolve_provider(cmd.provider, cmd.manifest);
    const auto blocks = provider->features(manifest.entries.front()).block_indices();
    const auto settings = parse_ablation_grid(cmd.grid, blocks);

    std::vector<AblationRow> rows;
    for (const auto& s : settings) {
        spdlog::info("ablation setting {}", s.name);
        std::shared_ptr<const FeatureProvider> p =
            s.layers.empty() ? provider : std::make_shared<LayerSubsetProvider>(provider, s.layers);
        TrainConfig tc = cmd.train;
        tc.ablation = s.flags;
        const TrainResult trained = train(manifest, *p, tc);
        EvalConfig ec = cmd.eval;
        ec.shots = s.shots;
        MetricsReport report = evaluate(manifest, *p, trained.weights, ec);
        rows.push_back({s, std::move(report)});
    }
    if (!cmd.out.empty()) {
        write_text(cmd.out / "ablation.csv", ablation_csv(rows));
        json doc = json::array();
        for (const auto& r : rows)
            doc.push_back({{"name", r.setting.name}, {"report", r.report.to_json()}});
        write_text(cmd.out / "ablation.json", doc.dump(2) + "\n");
    }
    return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    os << "name,dcs,dhf,caa,blocks,shots";
    for (const auto& m : metric_names()) os << ',' << m;
    os << ",mean_auroc\n";
    os.precision(6);
    os << std::fixed;
    for (const auto& r : rows) {
        const auto& f = r.setting.flags;
        os << r.setting.name << ',' << f.decouple_cls_seg << ',' << f.decouple_layers << ',' << f.use_caa << ',';
        const auto blocks = r.report.config.value("blocks", std::vector<int>{});
        for (std::size_t i = 0; i < blocks.size(); ++i) os << (i ? "+" : "") << blocks[i];
        os << ',' << r.setting.shots;
        for (double v : r.report.overall.mean) os << ',' << v;
        os << ',' << 0.5 * (r.report.value("mean", "I-AUROC") + r.report.value("mean", "P-AUROC")) << '\n';
    }
    return os.str();
}

}  // namespace uniadet
