#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "uniadet/commands.hpp"
#include "uniadet/error.hpp"
#include "uniadet/parallel.hpp"

using namespace uniadet;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("uniadet");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::info);
    if (const char* level = std::getenv("UNIADET_LOG")) {
        const auto parsed = spdlog::level::from_str(level);
        // from_str maps unknown names to "off"
        if (parsed == spdlog::level::off && std::string(level) != "off")
            spdlog::warn("UNIADET_LOG: unknown level '{}', keeping info", level);
        else
            spdlog::set_level(parsed);
    }
}

void add_provider_flags(CLI::App* cmd, ProviderOptions& p) {
    cmd->add_option("--provider", p.spec,
                    "files | synthetic | synthetic-conflict | provider JSON (default: provider.json next to the "
                    "manifest, else files)");
    cmd->add_option("--features-dir", p.features_dir, "directory of <id>.ufst feature files");
    cmd->add_option("--layers", p.layers, "restrict to these blocks")->delimiter(',');
}

void add_fusion_flags(CLI::App* cmd, FusionOverrides& o) {
    cmd->add_option("--tau", o.tau, "override the softmax temperature")->check(CLI::PositiveNumber);
    cmd->add_option("--lambda-p", o.lambda_p, "override the score fusion weight")->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--lambda-f", o.lambda_f, "override the few-shot map fusion weight")->check(CLI::Range(0.0, 1.0));
}

void add_train_flags(CLI::App* cmd, TrainConfig& cfg, std::optional<double>& tau) {
    cmd->add_option("--seed", cfg.seed, "random seed");
    cmd->add_option("--epochs", cfg.epochs, "training epochs")->check(CLI::NonNegativeNumber);
    cmd->add_option("--lr", cfg.learning_rate, "learning rate")->check(CLI::PositiveNumber);
    cmd->add_option("--batch-size", cfg.batch_size, "mini-batch size")->check(CLI::PositiveNumber);
    cmd->add_option("--tau", tau, "softmax temperature")->check(CLI::PositiveNumber);
    cmd->add_option("--lambda-p", cfg.lambda_p, "score fusion weight stored with the weights")
        ->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--lambda-f", cfg.lambda_f, "few-shot fusion weight stored with the weights")
        ->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--caa-prob", cfg.caa_probability, "class-aware augmentation probability")
        ->check(CLI::Range(0.0, 1.0));
    cmd->add_flag("--sgd", [&cfg](std::int64_t) { cfg.optimizer = Optimizer::sgd; }, "plain SGD instead of Adam");
    cmd->add_flag("--no-dcs", [&cfg](std::int64_t) { cfg.ablation.decouple_cls_seg = false; },
                  "one weight matrix for classification and segmentation");
    cmd->add_flag("--no-dhf", [&cfg](std::int64_t) { cfg.ablation.decouple_layers = false; },
                  "one weight pair shared by all layers");
    cmd->add_flag("--no-caa", [&cfg](std::int64_t) { cfg.ablation.use_caa = false; },
                  "disable class-aware augmentation");
}

void add_eval_flags(CLI::App* cmd, EvalConfig& cfg) {
    cmd->add_option("--shots", cfg.shots, "normal reference images per class (0 = zero-shot)");
    cmd->add_option("--repeat", cfg.repeats, "reference draws")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", cfg.seed, "seed for reference draws");
    cmd->add_option("--aupro-fpr", cfg.fpr_limit, "AUPRO false-positive-rate limit")->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--distance-scale", cfg.distance_scale, "multiplier on few-shot distances")
        ->check(CLI::PositiveNumber);
    cmd->add_flag("!--no-pixel", cfg.pixel_metrics, "skip pixel-level metrics");
}

void print_report(const MetricsReport& report) { std::cout << report.to_csv(); }

}  // namespace

int main(int argc, char** argv) {
    setup_logging();

    CLI::App app{"uniadet: language-free universal anomaly detection"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "worker threads (default: all cores)")->check(CLI::NonNegativeNumber);

    SynthOptions synth;
    auto* synth_cmd = app.add_subcommand("synth", "write a seeded synthetic corpus");
    synth_cmd->add_option("--out", synth.out_dir, "output directory")->required();
    synth_cmd->add_option("--classes", synth.classes, "number of classes");
    synth_cmd->add_option("--images", synth.images_per_class, "images per class");
    synth_cmd->add_option("--anomaly-fraction", synth.anomaly_fraction, "share of anomalous images");
    synth_cmd->add_option("--seed", synth.seed, "random seed");
    synth_cmd->add_option("--size", synth.image_size, "image side in pixels");
    synth_cmd->add_flag("--conflict", synth.conflict, "extractor with conflicting global/patch anomaly directions");

    TrainCommand train_cmd_args;
    std::optional<double> train_tau;
    auto* train_cmd = app.add_subcommand("train", "learn weights from the train split");
    train_cmd->add_option("--manifest", train_cmd_args.manifest, "dataset manifest")->required();
    train_cmd->add_option("--out", train_cmd_args.out, "output weight file (.uadw)")->required();
    train_cmd->add_option("--log", train_cmd_args.log, "training log CSV (default <out>.log.csv)");
    add_provider_flags(train_cmd, train_cmd_args.provider);
    add_train_flags(train_cmd, train_cmd_args.config, train_tau);

    EvalCommand eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "score the test split and write report.csv / report.json");
    eval_cmd->add_option("--manifest", eval_args.manifest, "dataset manifest")->required();
    eval_cmd->add_option("--weights", eval_args.weights, "weight file")->required();
    eval_cmd->add_option("--out", eval_args.out, "report directory");
    add_provider_flags(eval_cmd, eval_args.provider);
    add_fusion_flags(eval_cmd, eval_args.overrides);
    add_eval_flags(eval_cmd, eval_args.config);

    PredictCommand predict_args;
    auto* predict_cmd = app.add_subcommand("predict", "anomaly map and score for one image");
    predict_cmd->add_option("input", predict_args.input, "feature file (.ufst) or PGM/PPM image")->required();
    predict_cmd->add_option("--weights", predict_args.weights, "weight file")->required();
    predict_cmd->add_option("--bank", predict_args.bank, "memory bank (.ufsb) for few-shot inference");
    predict_cmd->add_option("--out", predict_args.out, "map PGM; the score goes to <out>.json")->required();
    predict_cmd->add_option("--distance-scale", predict_args.distance_scale, "multiplier on few-shot distances")
        ->check(CLI::PositiveNumber);
    add_provider_flags(predict_cmd, predict_args.provider);
    add_fusion_flags(predict_cmd, predict_args.overrides);

    BankCommand bank_args;
    auto* bank_cmd = app.add_subcommand("bank", "build a few-shot memory bank from normal train images");
    bank_cmd->add_option("--manifest", bank_args.manifest, "dataset manifest")->required();
    bank_cmd->add_option("--out", bank_args.out, "output bank file (.ufsb)")->required();
    bank_cmd->add_option("--class", bank_args.class_name, "class to draw references from");
    bank_cmd->add_option("--shots", bank_args.shots, "reference images")->check(CLI::PositiveNumber);
    bank_cmd->add_option("--seed", bank_args.seed, "seed for the reference draw");
    add_provider_flags(bank_cmd, bank_args.provider);

    AblateCommand ablate_args;
    std::optional<double> ablate_tau;
    auto* ablate_cmd = app.add_subcommand("ablate", "train + eval over a grid of settings");
    ablate_cmd->add_option("--manifest", ablate_args.manifest, "dataset manifest")->required();
    ablate_cmd->add_option("--out", ablate_args.out, "output directory")->required();
    ablate_cmd->add_option("--grid", ablate_args.grid,
                           "components | layers | all | custom settings, e.g. 'no-dcs;layers=21+24,shots=1'");
    add_provider_flags(ablate_cmd, ablate_args.provider);
    add_train_flags(ablate_cmd, ablate_args.train, ablate_tau);
    ablate_cmd->add_option("--repeat", ablate_args.eval.repeats, "reference draws")->check(CLI::PositiveNumber);
    ablate_cmd->add_option("--aupro-fpr", ablate_args.eval.fpr_limit, "AUPRO false-positive-rate limit")
        ->check(CLI::Range(0.0, 1.0));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        set_thread_count(threads);
        if (*synth_cmd) {
            const auto m = synthesize_corpus(synth);
            std::cout << "wrote " << m.entries.size() << " entries to " << synth.out_dir.string() << "\n";
        } else if (*train_cmd) {
            if (train_tau) train_cmd_args.config.tau = *train_tau;
            const auto result = run_train(train_cmd_args);
            if (!result.log.empty()) std::cout << "final loss " << result.log.back().loss.total << "\n";
            std::cout << "wrote " << train_cmd_args.out.string() << "\n";
        } else if (*eval_cmd) {
            print_report(run_eval(eval_args));
        } else if (*predict_cmd) {
            const auto pred = run_predict(predict_args);
            std::cout << "score " << pred.score << "\n";
        } else if (*bank_cmd) {
            const auto bank = run_bank(bank_args);
            std::cout << "bank of " << bank.shots << " shot(s) from";
            for (const auto& id : bank.source_ids) std::cout << ' ' << id;
            std::cout << "\n";
        } else if (*ablate_cmd) {
            if (ablate_tau) ablate_args.train.tau = *ablate_tau;
            ablate_args.eval.seed = ablate_args.train.seed;
            std::cout << ablation_csv(run_ablate(ablate_args));
        }
    } catch (const IoError& e) {
        spdlog::error("{}", e.what());
        return kExitIo;
    } catch (const NumericError& e) {
        spdlog::error("{}", e.what());
        return kExitNumeric;
    } catch (const DomainError& e) {
        spdlog::error("{}", e.what());
        return kExitNumeric;
    } catch (const UndefinedMetricError& e) {
        spdlog::error("{}", e.what());
        return kExitNumeric;
    } catch (const Error& e) {
        // validation, configuration, usage, shape and format problems
        spdlog::error("{}", e.what());
        return kExitValidation;
    } catch (const std::filesystem::filesystem_error& e) {
        spdlog::error("{}", e.what());
        return kExitIo;
    }
    return 0;
}
