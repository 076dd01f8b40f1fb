#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace uniadet {

enum class Split { train, test };

Split parse_split(const std::string& s);
std::string to_string(Split s);

struct ManifestEntry {
    std::string id;
    std::string class_name;
    Split split = Split::test;
    int label = 0;
    std::optional<std::filesystem::path> image_path;    // resolved against root
    std::optional<std::filesystem::path> feature_path;  // resolved against root
    std::optional<std::filesystem::path> mask_path;     // resolved against root
};

struct DatasetManifest {
    std::filesystem::path root;
    std::vector<ManifestEntry> entries;

    /// Class names in order of first appearance.
    std::vector<std::string> class_names() const;
    std::vector<const ManifestEntry*> select(Split split) const;
    std::vector<const ManifestEntry*> select(Split split, const std::string& class_name) const;
    const ManifestEntry* find(const std::string& id) const;
};

struct ManifestOptions {
    /// Anomalous test entries must carry a mask_path (pixel-level evaluation).
    bool require_test_masks = false;
    /// Read every mask and compare it against the entry's label.
    bool check_masks = false;
    /// Label/mask inconsistencies become errors instead of warnings.
    bool strict = false;
};

/// Parses and validates a manifest:
///   {"root": str, "entries": [{"id", "class_name", "split": "train"|"test",
///     "label": 0|1, "image_path"?, "feature_path"?, "mask_path"?}]}
/// A relative root is taken relative to the manifest's directory; entry paths
/// relative to the root. Validation errors list the offending entry ids.
DatasetManifest load_manifest(const std::filesystem::path& path, const ManifestOptions& options = {});
DatasetManifest parse_manifest(const std::string& json_text, const std::filesystem::path& base_dir,
                               const ManifestOptions& options = {});

/// Writes `manifest` with entry paths relative to its root and root relative
/// to the manifest file's directory when possible.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

}  // namespace uniadet
