#include "uniadet/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "uniadet/error.hpp"
#include "uniadet/formats.hpp"

namespace uniadet {

namespace fs = std::filesystem;
using nlohmann::json;

Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    throw ValidationError("unknown split '" + s + "'");
}

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

std::vector<std::string> DatasetManifest::class_names() const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& e : entries)
        if (seen.insert(e.class_name).second) out.push_back(e.class_name);
    return out;
}

std::vector<const ManifestEntry*> DatasetManifest::select(Split split) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries)
        if (e.split == split) out.push_back(&e);
    return out;
}

std::vector<const ManifestEntry*> DatasetManifest::select(Split split, const std::string& class_name) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries)
        if (e.split == split && e.class_name == class_name) out.push_back(&e);
    return out;
}

const ManifestEntry* DatasetManifest::find(const std::string& id) const {
    for (const auto& e : entries)
        if (e.id == id) return &e;
    return nullptr;
}

namespace {

std::string join_ids(const std::vector<std::string>& ids) {
    std::ostringstream os;
    for (std::size_t i = 0; i < ids.size(); ++i) os << (i ? ", " : "") << ids[i];
    return os.str();
}

std::optional<fs::path> optional_path(const json& j, const char* key, const fs::path& root) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    fs::path p = j.at(key).get<std::string>();
    return p.is_absolute() ? p : root / p;
}

}  // namespace

DatasetManifest parse_manifest(const std::string& json_text, const fs::path& base_dir, const ManifestOptions& options) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("manifest is not valid JSON: ") + e.what(), e.byte);
    }
    if (!doc.is_object() || !doc.contains("entries") || !doc.at("entries").is_array())
        throw ValidationError("manifest must be an object with an 'entries' array");

    DatasetManifest m;
    fs::path root = doc.value("root", std::string("."));
    m.root = root.is_absolute() ? root : base_dir / root;

    std::vector<std::string> bad_schema, duplicates, missing_masks, bad_split;
    std::set<std::string> seen;
    std::size_t index = 0;
    for (const auto& je : doc.at("entries")) {
        const std::string where = "#" + std::to_string(index++);
        if (!je.is_object() || !je.contains("id") || !je.at("id").is_string()) {
            bad_schema.push_back(where);
            continue;
        }
        ManifestEntry e;
        e.id = je.at("id").get<std::string>();
        try {
            e.class_name = je.at("class_name").get<std::string>();
            const auto split = je.at("split").get<std::string>();
            if (split != "train" && split != "test") {
                bad_split.push_back(e.id);
                continue;
            }
            e.split = parse_split(split);
            e.label = je.at("label").get<int>();
            if (e.label != 0 && e.label != 1) {
                bad_schema.push_back(e.id);
                continue;
            }
            e.image_path = optional_path(je, "image_path", m.root);
            e.feature_path = optional_path(je, "feature_path", m.root);
            e.mask_path = optional_path(je, "mask_path", m.root);
        } catch (const json::exception&) {
            bad_schema.push_back(e.id);
            continue;
        }
        if (!seen.insert(e.id).second) duplicates.push_back(e.id);
        if (options.require_test_masks && e.split == Split::test && e.label == 1 && !e.mask_path)
            missing_masks.push_back(e.id);
        m.entries.push_back(std::move(e));
    }

    std::string problems;
    auto add = [&](const char* what, const std::vector<std::string>& ids) {
        if (!ids.empty()) problems += std::string(problems.empty() ? "" : "; ") + what + ": " + join_ids(ids);
    };
    add("malformed entries", bad_schema);
    add("unknown split", bad_split);
    add("duplicate ids", duplicates);
    add("anomalous test entries without mask_path", missing_masks);
    if (!problems.empty()) throw ValidationError("invalid manifest: " + problems);

    if (options.check_masks || options.strict) {
        std::vector<std::string> inconsistent;
        for (const auto& e : m.entries) {
            if (!e.mask_path) continue;
            const Mask mask = read_mask(*e.mask_path);
            if ((e.label == 1) != mask.any()) inconsistent.push_back(e.id);
        }
        if (!inconsistent.empty()) {
            const auto msg = "label/mask inconsistency: " + join_ids(inconsistent);
            spdlog::warn("{}", msg);
            if (options.strict) throw ValidationError(msg);
        }
    }
    return m;
}

DatasetManifest load_manifest(const fs::path& path, const ManifestOptions& options) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_manifest(ss.str(), path.parent_path(), options);
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
    const fs::path dir = path.parent_path().empty() ? fs::path(".") : path.parent_path();
    auto rel = [](const fs::path& p, const fs::path& base) {
        auto r = p.lexically_relative(base);
        return (r.empty() ? p : r).generic_string();
    };
    json doc;
    doc["root"] = rel(manifest.root, dir);
    doc["entries"] = json::array();
    for (const auto& e : manifest.entries) {
        json je{{"id", e.id}, {"class_name", e.class_name}, {"split", to_string(e.split)}, {"label", e.label}};
        if (e.image_path) je["image_path"] = rel(*e.image_path, manifest.root);
        if (e.feature_path) je["feature_path"] = rel(*e.feature_path, manifest.root);
        if (e.mask_path) je["mask_path"] = rel(*e.mask_path, manifest.root);
        doc["entries"].push_back(std::move(je));
    }
    if (!dir.empty()) fs::create_directories(dir);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
    out << doc.dump(2) << "\n";
}

}  // namespace uniadet
