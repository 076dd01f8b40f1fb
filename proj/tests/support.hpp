#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "uniadet/gradients.hpp"
#include "uniadet/raster.hpp"
#include "uniadet/rng.hpp"
#include "uniadet/types.hpp"

namespace testsupport {

using namespace uniadet;

inline LayerFeatures random_layer(Rng& rng, int block, std::size_t d, std::size_t gh, std::size_t gw) {
    std::normal_distribution<float> g(0.0f, 1.0f);
    LayerFeatures l;
    l.block_index = block;
    l.dim = d;
    l.grid_h = gh;
    l.grid_w = gw;
    l.global_token.resize(d);
    l.patch_tokens.resize(gh * gw * d);
    for (auto& v : l.global_token) v = g(rng);
    for (auto& v : l.patch_tokens) v = g(rng);
    return l;
}

inline FeatureStack random_stack(Rng& rng, const std::vector<int>& blocks, std::size_t d,
                                 const std::vector<std::size_t>& grids, std::size_t h, std::size_t w) {
    FeatureStack s;
    s.image_height = h;
    s.image_width = w;
    s.source_id = "rand";
    for (std::size_t i = 0; i < blocks.size(); ++i)
        s.layers.push_back(random_layer(rng, blocks[i], d, grids[i], grids[i]));
    return s;
}

inline TwoClassWeights random_head(Rng& rng, std::size_t d) {
    std::normal_distribution<double> g(0.0, 1.0);
    TwoClassWeights w(d);
    for (auto& v : w.values) v = g(rng);
    return w;
}

inline WeightBank random_weights(Rng& rng, const FeatureStack& layout) {
    WeightBank b;
    for (const auto& l : layout.layers) b.layers.push_back({l.block_index, random_head(rng, l.dim), random_head(rng, l.dim)});
    return b;
}

inline Mask random_mask(Rng& rng, std::size_t h, std::size_t w, double density) {
    Mask m(h, w);
    for (auto& v : m.data) v = uniform_real(rng) < density ? 1 : 0;
    return m;
}

inline Raster random_raster(Rng& rng, std::size_t h, std::size_t w, std::size_t c = 1) {
    Raster r(h, w, c);
    for (auto& v : r.data) v = uniform_real(rng);
    return r;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("uniadet_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace testsupport
