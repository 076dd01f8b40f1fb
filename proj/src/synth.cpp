#include "uniadet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include <nlohmann/json.hpp>

#include "uniadet/error.hpp"
#include "uniadet/formats.hpp"

namespace uniadet {

void SynthOptions::validate() const {
    if (classes < 1) throw ValidationError("synth: classes must be >= 1");
    if (images_per_class < 1) throw ValidationError("synth: images_per_class must be >= 1");
    if (!(anomaly_fraction >= 0.0 && anomaly_fraction <= 1.0))
        throw ValidationError("synth: anomaly_fraction must lie in [0, 1]");
    if (image_size < 16) throw ValidationError("synth: image_size must be >= 16");
}

namespace {

void paint_blob(Raster& img, Mask& mask, Rng& rng, double value) {
    const double h = static_cast<double>(img.height);
    const double cy = uniform_real(rng, 0.2 * h, 0.8 * h);
    const double cx = uniform_real(rng, 0.2 * h, 0.8 * h);
    const double ry = uniform_real(rng, 0.06 * h, 0.15 * h);
    const double rx = uniform_real(rng, 0.06 * h, 0.15 * h);
    for (std::size_t r = 0; r < img.height; ++r)
        for (std::size_t c = 0; c < img.width; ++c) {
            const double dy = (static_cast<double>(r) - cy) / ry;
            const double dx = (static_cast<double>(c) - cx) / rx;
            if (dy * dy + dx * dx <= 1.0) {
                img.at(r, c) = value;
                mask.at(r, c) = 255;
            }
        }
}

void paint_scratch(Raster& img, Mask& mask, Rng& rng, double value) {
    const double h = static_cast<double>(img.height);
    const double y0 = uniform_real(rng, 0.15 * h, 0.85 * h);
    const double x0 = uniform_real(rng, 0.15 * h, 0.85 * h);
    const double angle = uniform_real(rng, 0.0, std::numbers::pi);
    const double length = uniform_real(rng, 0.25 * h, 0.55 * h);
    const double half_width = uniform_real(rng, 0.8, 1.6);
    const double dy = std::sin(angle), dx = std::cos(angle);
    for (std::size_t r = 0; r < img.height; ++r)
        for (std::size_t c = 0; c < img.width; ++c) {
            const double py = static_cast<double>(r) - y0, px = static_cast<double>(c) - x0;
            const double along = py * dy + px * dx;
            const double across = std::abs(-py * dx + px * dy);
            if (along >= -0.5 * length && along <= 0.5 * length && across <= half_width) {
                img.at(r, c) = value;
                mask.at(r, c) = 255;
            }
        }
}

}  // namespace

TrainSample synthesize_image(int class_index, bool anomalous, std::size_t size, Rng& rng) {
    TrainSample s;
    s.image = Raster(size, size);
    s.label = anomalous ? 1 : 0;

    // oriented sinusoid; orientation and period identify the class
    const double theta = std::numbers::pi * (0.15 + 0.37 * class_index);
    const double period = 7.0 + 3.0 * (class_index % 4);
    const double phase = uniform_real(rng, 0.0, 2.0 * std::numbers::pi);
    std::normal_distribution<double> noise(0.0, 0.02);
    for (std::size_t r = 0; r < size; ++r)
        for (std::size_t c = 0; c < size; ++c) {
            const double t = static_cast<double>(c) * std::cos(theta) + static_cast<double>(r) * std::sin(theta);
            const double v = 0.5 + 0.12 * std::sin(2.0 * std::numbers::pi * t / period + phase) + noise(rng);
            s.image.at(r, c) = std::clamp(v, 0.25, 0.75);
        }

    if (anomalous) {
        s.mask = Mask(size, size);
        const bool dark = uniform_index(rng, 2) == 0;
        const double value = dark ? uniform_real(rng, 0.02, 0.1) : uniform_real(rng, 0.9, 0.98);
        if (uniform_index(rng, 2) == 0)
            paint_blob(s.image, s.mask, rng, value);
        else
            paint_scratch(s.image, s.mask, rng, value);
    }
    return s;
}

DatasetManifest synthesize_corpus(const SynthOptions& options) {
    options.validate();
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(options.out_dir / "images", ec);
    if (!ec) fs::create_directories(options.out_dir / "masks", ec);
    if (ec) throw IoError("cannot create " + options.out_dir.string() + ": " + ec.message());

    DatasetManifest manifest;
    manifest.root = options.out_dir;
    const auto anomalies =
        static_cast<int>(std::lround(options.images_per_class * options.anomaly_fraction));

    for (int k = 0; k < options.classes; ++k) {
        const std::string cls = "class" + std::to_string(k);
        Rng pick = make_rng(options.seed, {0, static_cast<std::uint64_t>(k)});
        std::vector<int> order(static_cast<std::size_t>(options.images_per_class));
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), pick);
        std::vector<bool> is_anomaly(order.size(), false);
        for (int i = 0; i < anomalies; ++i) is_anomaly[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;

        int normal_seen = 0, anomaly_seen = 0;
        for (int i = 0; i < options.images_per_class; ++i) {
            const bool anomalous = is_anomaly[static_cast<std::size_t>(i)];
            Rng rng = make_rng(options.seed, {1, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(i)});
            TrainSample s = synthesize_image(k, anomalous, options.image_size, rng);

            ManifestEntry e;
            e.id = cls + "_" + std::to_string(i);
            e.class_name = cls;
            e.label = s.label;
            const int rank = anomalous ? anomaly_seen++ : normal_seen++;
            e.split = rank % 2 == 0 ? Split::train : Split::test;
            e.image_path = options.out_dir / "images" / (e.id + ".pgm");
            write_raster(s.image, *e.image_path);
            if (anomalous) {
                e.mask_path = options.out_dir / "masks" / (e.id + ".pgm");
                write_mask(s.mask, *e.mask_path);
            }
            manifest.entries.push_back(std::move(e));
        }
    }
    save_manifest(manifest, options.out_dir / "manifest.json");

    SyntheticConfig provider;
    provider.conflict = options.conflict;
    std::ofstream out(options.out_dir / "provider.json");
    if (!out) throw IoError("cannot write provider.json under " + options.out_dir.string());
    out << provider.to_json().dump(2) << '\n';
    if (!out) throw IoError("write failed: provider.json");
    return manifest;
}

}  // namespace uniadet
