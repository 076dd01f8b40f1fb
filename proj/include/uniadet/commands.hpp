#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "uniadet/evaluation.hpp"
#include "uniadet/memory_bank.hpp"
#include "uniadet/provider.hpp"
#include "uniadet/synth.hpp"
#include "uniadet/trainer.hpp"

// Subcommand bodies shared by the CLI and the test suites.
namespace uniadet {

struct ProviderOptions {
    /// "files", "synthetic", "synthetic-conflict", a provider JSON path, or
    /// empty: provider.json next to the manifest when present, else files.
    std::string spec;
    std::optional<std::filesystem::path> features_dir;
    /// Restrict to these blocks (empty = all).
    std::vector<int> layers;
};

std::shared_ptr<const FeatureProvider> resolve_provider(const ProviderOptions& options,
                                                        const std::filesystem::path& manifest_path);

/// tau / lambda overrides applied to a loaded WeightBank.
struct FusionOverrides {
    std::optional<double> tau;
    std::optional<double> lambda_p;
    std::optional<double> lambda_f;

    void apply(WeightBank& weights) const;
};

struct TrainCommand {
    std::filesystem::path manifest;
    ProviderOptions provider;
    std::filesystem::path out;  // .uadw
    std::optional<std::filesystem::path> log;  // default: <out>.log.csv
    TrainConfig config;
};
TrainResult run_train(const TrainCommand& cmd);

struct EvalCommand {
    std::filesystem::path manifest;
    ProviderOptions provider;
    std::filesystem::path weights;
    std::optional<std::filesystem::path> out;  // report directory
    EvalConfig config;
    FusionOverrides overrides;
};
MetricsReport run_eval(const EvalCommand& cmd);

struct BankCommand {
    std::filesystem::path manifest;
    ProviderOptions provider;
    std::optional<std::string> class_name;  // required when the manifest has several classes
    std::size_t shots = 1;
    std::uint64_t seed = 0;
    std::filesystem::path out;  // .ufsb
};
MemoryBank run_bank(const BankCommand& cmd);

struct PredictCommand {
    std::filesystem::path input;  // .ufst feature file, or a PGM/PPM image
    ProviderOptions provider;
    std::filesystem::path weights;
    std::optional<std::filesystem::path> bank;
    std::filesystem::path out;  // map PGM; the score goes to <out>.json
    FusionOverrides overrides;
    double distance_scale = 0.5;
};
AnomalyPrediction run_predict(const PredictCommand& cmd);

struct AblationSetting {
    std::string name;
    AblationFlags flags;
    std::vector<int> layers;  // empty = all
    std::size_t shots = 0;
};

/// "components" (head/augmentation variants, plus the full model one-shot),
/// "layers" (last 1..5 blocks of `blocks`), "all", or ';'-separated custom settings made of the tokens
/// no-dcs, no-dhf, no-caa, layers=21+24, shots=K, name=X.
std::vector<AblationSetting> parse_ablation_grid(const std::string& grid, const std::vector<int>& blocks);

struct AblationRow {
    AblationSetting setting;
    MetricsReport report;
};

struct AblateCommand {
    std::filesystem::path manifest;
    ProviderOptions provider;
    std::filesystem::path out;  // directory; ablation.csv
    std::string grid = "components";
    TrainConfig train;
    EvalConfig eval;
};
std::vector<AblationRow> run_ablate(const AblateCommand& cmd);

std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace uniadet
