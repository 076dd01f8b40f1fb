#include "uniadet/provider.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "uniadet/error.hpp"
#include "uniadet/formats.hpp"
#include "uniadet/rng.hpp"

namespace uniadet {

namespace fs = std::filesystem;
using nlohmann::json;

FeatureStack FeatureProvider::extract(const Raster&, const std::string&) const {
    throw UsageError("this feature provider cannot extract features from images");
}

// --- file-backed -----------------------------------------------------------

FileFeatureProvider::FileFeatureProvider(std::optional<fs::path> features_dir) : features_dir_(std::move(features_dir)) {}

FeatureStack FileFeatureProvider::features(const ManifestEntry& entry) const {
    fs::path path;
    if (entry.feature_path)
        path = *entry.feature_path;
    else if (features_dir_)
        path = *features_dir_ / (entry.id + ".ufst");
    else
        throw ConfigError("entry '" + entry.id + "' has no feature_path and no features directory was given");
    auto stack = read_feature_file(path);
    stack.source_id = entry.id;
    return stack;
}

json FileFeatureProvider::describe() const {
    json j{{"kind", "files"}};
    if (features_dir_) j["features_dir"] = features_dir_->string();
    return j;
}

// --- synthetic -------------------------------------------------------------

namespace {

constexpr std::size_t kDescriptorSide = 4;
constexpr std::size_t kDescriptorLen = kDescriptorSide * kDescriptorSide;
constexpr std::size_t kFixedAxes = 4;  // u, a, b, c

void orthonormalize(std::vector<double>& rows, std::size_t n, std::size_t dim) {
    for (std::size_t i = 0; i < n; ++i) {
        double* v = rows.data() + i * dim;
        for (std::size_t j = 0; j < i; ++j) {
            const double* u = rows.data() + j * dim;
            double dot = 0.0;
            for (std::size_t k = 0; k < dim; ++k) dot += v[k] * u[k];
            for (std::size_t k = 0; k < dim; ++k) v[k] -= dot * u[k];
        }
        double norm = 0.0;
        for (std::size_t k = 0; k < dim; ++k) norm += v[k] * v[k];
        norm = std::sqrt(norm);
        if (norm < 1e-9) throw NumericError("synthetic provider: degenerate random basis");
        for (std::size_t k = 0; k < dim; ++k) v[k] /= norm;
    }
}

void axpy(std::vector<double>& out, double a, const double* x) {
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += a * x[k];
}

}  // namespace

void SyntheticConfig::validate() const {
    if (layers.empty()) throw ValidationError("synthetic provider: no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        if (l.block < 0) throw ValidationError("synthetic provider: negative block index");
        if (i > 0 && l.block <= layers[i - 1].block)
            throw ValidationError("synthetic provider: layers must be in ascending block order");
        if (l.dim < kFixedAxes + 4) throw ValidationError("synthetic provider: dim must be >= 8");
        if (l.grid == 0) throw ValidationError("synthetic provider: grid must be positive");
    }
    if (!(band_low < band_high)) throw ValidationError("synthetic provider: empty intensity band");
}

json SyntheticConfig::to_json() const {
    json jl = json::array();
    for (const auto& l : layers) jl.push_back({{"block", l.block}, {"dim", l.dim}, {"grid", l.grid}});
    return {{"kind", "synthetic"},
            {"layers", jl},
            {"seed", seed},
            {"conflict", conflict},
            {"anomaly_strength", anomaly_strength},
            {"global_strength", global_strength},
            {"content_scale", content_scale},
            {"band_low", band_low},
            {"band_high", band_high}};
}

SyntheticConfig SyntheticConfig::from_json(const json& j) {
    SyntheticConfig c;
    try {
        if (j.contains("layers")) {
            c.layers.clear();
            for (const auto& jl : j.at("layers"))
                c.layers.push_back({jl.at("block").get<int>(), jl.value("dim", std::size_t{64}),
                                    jl.value("grid", std::size_t{16})});
        }
        c.seed = j.value("seed", c.seed);
        c.conflict = j.value("conflict", c.conflict);
        c.anomaly_strength = j.value("anomaly_strength", c.anomaly_strength);
        c.global_strength = j.value("global_strength", c.global_strength);
        c.content_scale = j.value("content_scale", c.content_scale);
        c.band_low = j.value("band_low", c.band_low);
        c.band_high = j.value("band_high", c.band_high);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("synthetic provider config: ") + e.what());
    }
    c.validate();
    return c;
}

SyntheticProvider::SyntheticProvider(SyntheticConfig config) : config_(std::move(config)) {
    config_.validate();
    for (const auto& spec : config_.layers) {
        auto rng = make_rng(config_.seed, {static_cast<std::uint64_t>(spec.block)});
        std::normal_distribution<double> gauss(0.0, 1.0);
        LayerGeometry g;
        g.basis.resize(spec.dim * spec.dim);
        for (auto& v : g.basis) v = gauss(rng);
        orthonormalize(g.basis, spec.dim, spec.dim);
        const std::size_t content = spec.dim - kFixedAxes;
        g.projection.resize(content * kDescriptorLen);
        const double scale = 1.0 / std::sqrt(static_cast<double>(kDescriptorLen));
        for (auto& v : g.projection) v = gauss(rng) * scale * 2.0;
        geometry_.push_back(std::move(g));
    }
}

std::span<const double> SyntheticProvider::anomaly_direction(std::size_t index) const {
    const auto& l = config_.layers.at(index);
    return {geometry_.at(index).basis.data() + l.dim, l.dim};
}

FeatureStack SyntheticProvider::features(const ManifestEntry& entry) const {
    if (!entry.image_path) throw ConfigError("entry '" + entry.id + "' has no image_path for the synthetic provider");
    return extract(read_raster(*entry.image_path), entry.id);
}

FeatureStack SyntheticProvider::extract(const Raster& image, const std::string& source_id) const {
    image.validate();
    FeatureStack stack;
    stack.image_height = image.height;
    stack.image_width = image.width;
    stack.source_id = source_id;

    for (std::size_t li = 0; li < config_.layers.size(); ++li) {
        const auto& spec = config_.layers[li];
        const auto& geo = geometry_[li];
        const std::size_t d = spec.dim;
        const std::size_t content = d - kFixedAxes;
        const std::size_t gh = std::min(spec.grid, image.height);
        const std::size_t gw = std::min(spec.grid, image.width);
        auto axis = [&](std::size_t k) { return geo.basis.data() + k * d; };
        const double* u = axis(0);
        const double* a = axis(1);
        const double* b = config_.conflict ? axis(1) : axis(2);
        const double* c = config_.conflict ? axis(0) : axis(3);

        LayerFeatures lf;
        lf.block_index = spec.block;
        lf.dim = d;
        lf.grid_h = gh;
        lf.grid_w = gw;
        lf.patch_tokens.resize(gh * gw * d);

        // content_scale is the rough content norm, independent of dim
        const double content_weight = config_.content_scale / std::sqrt(static_cast<double>(content));
        std::vector<double> mean_content(content, 0.0);
        double max_evidence = 0.0;
        std::vector<double> desc(kDescriptorLen), z(content), token(d);

        for (std::size_t gi = 0; gi < gh; ++gi) {
            const auto [r0, r1] = cell_span(image.height, gh, gi);
            for (std::size_t gj = 0; gj < gw; ++gj) {
                const auto [c0, c1] = cell_span(image.width, gw, gj);
                std::size_t outside = 0;
                for (std::size_t r = r0; r < r1; ++r)
                    for (std::size_t col = c0; col < c1; ++col) {
                        const double v = image.intensity(r, col);
                        if (v < config_.band_low || v > config_.band_high) ++outside;
                    }
                const double evidence = static_cast<double>(outside) / static_cast<double>((r1 - r0) * (c1 - c0));
                max_evidence = std::max(max_evidence, evidence);

                for (std::size_t si = 0; si < kDescriptorSide; ++si) {
                    const std::size_t r = r0 + (2 * si + 1) * (r1 - r0) / (2 * kDescriptorSide);
                    for (std::size_t sj = 0; sj < kDescriptorSide; ++sj) {
                        const std::size_t col = c0 + (2 * sj + 1) * (c1 - c0) / (2 * kDescriptorSide);
                        desc[si * kDescriptorSide + sj] = (image.intensity(r, col) - 0.5) * 4.0;
                    }
                }
                for (std::size_t k = 0; k < content; ++k) {
                    double s = 0.0;
                    for (std::size_t q = 0; q < kDescriptorLen; ++q) s += geo.projection[k * kDescriptorLen + q] * desc[q];
                    z[k] = std::tanh(s);
                    mean_content[k] += z[k];
                }

                std::fill(token.begin(), token.end(), 0.0);
                axpy(token, 1.0, u);
                for (std::size_t k = 0; k < content; ++k) axpy(token, content_weight * z[k], axis(kFixedAxes + k));
                axpy(token, config_.anomaly_strength * evidence, a);
                float* out = lf.patch(gi * gw + gj).data();
                for (std::size_t k = 0; k < d; ++k) out[k] = static_cast<float>(token[k]);
            }
        }

        // global token: rotated mean content so the global manifold differs from the patch one
        const double inv_cells = 1.0 / static_cast<double>(gh * gw);
        std::fill(token.begin(), token.end(), 0.0);
        axpy(token, 1.0, b);
        for (std::size_t k = 0; k < content; ++k)
            axpy(token, content_weight * mean_content[k] * inv_cells, axis(kFixedAxes + (k + 1) % content));
        axpy(token, config_.global_strength * max_evidence, c);
        lf.global_token.resize(d);
        for (std::size_t k = 0; k < d; ++k) lf.global_token[k] = static_cast<float>(token[k]);

        stack.layers.push_back(std::move(lf));
    }
    return stack;
}

json SyntheticProvider::describe() const { return config_.to_json(); }

std::unique_ptr<FeatureProvider> synthetic_provider(const SyntheticConfig& config) {
    return std::make_unique<SyntheticProvider>(config);
}

// --- layer subset ----------------------------------------------------------

FeatureStack select_layers(const FeatureStack& stack, std::span<const int> blocks) {
    std::vector<int> wanted(blocks.begin(), blocks.end());
    std::sort(wanted.begin(), wanted.end());
    wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());
    FeatureStack out;
    out.image_height = stack.image_height;
    out.image_width = stack.image_width;
    out.source_id = stack.source_id;
    for (int b : wanted) {
        auto it = std::find_if(stack.layers.begin(), stack.layers.end(),
                               [b](const LayerFeatures& l) { return l.block_index == b; });
        if (it == stack.layers.end())
            throw ConfigError("block " + std::to_string(b) + " is not available from '" + stack.source_id + "'");
        out.layers.push_back(*it);
    }
    return out;
}

LayerSubsetProvider::LayerSubsetProvider(std::shared_ptr<const FeatureProvider> inner, std::vector<int> blocks)
    : inner_(std::move(inner)), blocks_(std::move(blocks)) {
    if (!inner_) throw UsageError("LayerSubsetProvider: null provider");
    if (blocks_.empty()) throw UsageError("LayerSubsetProvider: empty block list");
}

FeatureStack LayerSubsetProvider::features(const ManifestEntry& entry) const {
    return select_layers(inner_->features(entry), blocks_);
}

FeatureStack LayerSubsetProvider::extract(const Raster& image, const std::string& source_id) const {
    return select_layers(inner_->extract(image, source_id), blocks_);
}

json LayerSubsetProvider::describe() const {
    auto j = inner_->describe();
    j["blocks"] = blocks_;
    return j;
}

}  // namespace uniadet
