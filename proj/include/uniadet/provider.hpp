#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uniadet/manifest.hpp"
#include "uniadet/raster.hpp"
#include "uniadet/types.hpp"

namespace uniadet {

/// Source of frozen features. Implementations must be deterministic and safe
/// to call concurrently.
class FeatureProvider {
public:
    virtual ~FeatureProvider() = default;

    /// Features for a manifest entry.
    virtual FeatureStack features(const ManifestEntry& entry) const = 0;

    /// Whether extract() works, i.e. features can be computed from pixels (and
    /// so from augmented training images).
    virtual bool can_extract() const { return false; }

    /// Features for an in-memory image. Throws UsageError unless can_extract().
    virtual FeatureStack extract(const Raster& image, const std::string& source_id) const;

    virtual nlohmann::json describe() const = 0;
};

/// Reads precomputed UFST files: the entry's feature_path, or
/// `<features_dir>/<id>.ufst`.
class FileFeatureProvider final : public FeatureProvider {
public:
    explicit FileFeatureProvider(std::optional<std::filesystem::path> features_dir = std::nullopt);

    FeatureStack features(const ManifestEntry& entry) const override;
    nlohmann::json describe() const override;

private:
    std::optional<std::filesystem::path> features_dir_;
};

struct SyntheticLayerSpec {
    int block = 0;
    std::size_t dim = 64;
    std::size_t grid = 16;
};

/// Desk-scale stand-in for a frozen vision backbone.
struct SyntheticConfig {
    std::vector<SyntheticLayerSpec> layers{{12}, {15}, {18}, {21}, {24}};
    std::uint64_t seed = 20240917;
    /// Global tokens use the patch anomaly direction as their normal base and
    /// the patch normal base as their anomaly direction.
    bool conflict = false;
    double anomaly_strength = 1.5;
    double global_strength = 1.5;
    double content_scale = 2.0;
    /// Pixel intensities outside [band_low, band_high] count as anomaly evidence.
    double band_low = 0.2;
    double band_high = 0.8;

    void validate() const;
    nlohmann::json to_json() const;
    static SyntheticConfig from_json(const nlohmann::json& j);
};

/// Deterministic toy extractor. Per layer it draws an orthonormal basis
/// {u, a, b, c, content...}. A patch token is
///     u + content_scale * tanh(P descriptor) + anomaly_strength * e * a
/// where the descriptor is a 4x4 sampling of the patch pixels and e is the
/// fraction of patch pixels outside the intensity band. The global token is
///     b + content_scale * (rotated mean content) + global_strength * max(e) * c.
/// In conflict mode b = a and c = u, so image-level and patch-level anomalies
/// move in opposite directions across the same plane.
class SyntheticProvider final : public FeatureProvider {
public:
    explicit SyntheticProvider(SyntheticConfig config);

    FeatureStack features(const ManifestEntry& entry) const override;
    bool can_extract() const override { return true; }
    FeatureStack extract(const Raster& image, const std::string& source_id) const override;
    nlohmann::json describe() const override;

    const SyntheticConfig& config() const { return config_; }
    /// Unit direction along which anomalous patch tokens of layer `index` move.
    std::span<const double> anomaly_direction(std::size_t index) const;

private:
    struct LayerGeometry {
        std::vector<double> basis;       // dim x dim, row k = basis vector k
        std::vector<double> projection;  // (dim - 4) x 16
    };

    SyntheticConfig config_;
    std::vector<LayerGeometry> geometry_;
};

/// Restricts another provider to a subset of blocks.
class LayerSubsetProvider final : public FeatureProvider {
public:
    LayerSubsetProvider(std::shared_ptr<const FeatureProvider> inner, std::vector<int> blocks);

    FeatureStack features(const ManifestEntry& entry) const override;
    bool can_extract() const override { return inner_->can_extract(); }
    FeatureStack extract(const Raster& image, const std::string& source_id) const override;
    nlohmann::json describe() const override;

private:
    std::shared_ptr<const FeatureProvider> inner_;
    std::vector<int> blocks_;
};

std::unique_ptr<FeatureProvider> synthetic_provider(const SyntheticConfig& config);

/// Keeps only the listed blocks (in ascending order). ConfigError if one is missing.
FeatureStack select_layers(const FeatureStack& stack, std::span<const int> blocks);

}  // namespace uniadet
