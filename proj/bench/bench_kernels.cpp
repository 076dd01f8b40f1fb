// Times the OpenMP kernels against their serial references on synthetic data.
#include <chrono>
#include <cstdio>
#include <random>
#include <vector>

#include <omp.h>

#include "uniadet/gradients.hpp"
#include "uniadet/memory_bank.hpp"
#include "uniadet/reference.hpp"
#include "uniadet/rng.hpp"
#include "uniadet/scoring.hpp"

using namespace uniadet;

namespace {

LayerFeatures random_layer(std::size_t d, std::size_t grid, Rng& rng) {
    std::normal_distribution<float> g(0.0f, 1.0f);
    LayerFeatures l;
    l.block_index = 24;
    l.dim = d;
    l.grid_h = l.grid_w = grid;
    l.global_token.resize(d);
    l.patch_tokens.resize(grid * grid * d);
    for (auto& v : l.global_token) v = g(rng);
    for (auto& v : l.patch_tokens) v = g(rng);
    return l;
}

TwoClassWeights random_head(std::size_t d, Rng& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    TwoClassWeights w(d);
    for (auto& v : w.values) v = g(rng);
    return w;
}

template <typename F>
double time_ms(int reps, F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) f();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const char* name, double serial, double parallel) {
    std::printf("%-18s serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx\n", name, serial, parallel,
                serial / parallel);
}

}  // namespace

int main() {
    std::printf("threads: %d\n", omp_get_max_threads());
    Rng rng = make_rng(1);

    {
        const auto layer = random_layer(1024, 37, rng);
        const auto head = random_head(1024, rng);
        report("score_patches", time_ms(20, [&] { reference::score_patches(layer, head, 0.07); }),
               time_ms(20, [&] { score_patches(layer, head, 0.07); }));
    }
    {
        std::vector<FeatureStack> refs(4);
        for (auto& r : refs) {
            r.image_height = r.image_width = 518;
            r.layers.push_back(random_layer(256, 37, rng));
        }
        const MemoryBank bank = build_bank(refs);
        const auto query = random_layer(256, 37, rng);
        report("query_layer", time_ms(2, [&] { reference::query_layer(query, bank.layers[0]); }),
               time_ms(2, [&] { query_layer(query, bank.layers[0]); }));
    }
    {
        WeightBank weights;
        std::vector<LabeledFeatures> batch(16);
        for (int b = 0; b < 5; ++b) weights.layers.push_back({12 + 3 * b, random_head(128, rng), random_head(128, rng)});
        for (std::size_t i = 0; i < batch.size(); ++i) {
            auto& s = batch[i];
            s.id = "s" + std::to_string(i);
            s.label = static_cast<int>(i % 2);
            s.features.image_height = s.features.image_width = 64;
            for (int b = 0; b < 5; ++b) {
                auto l = random_layer(128, 16, rng);
                l.block_index = 12 + 3 * b;
                s.features.layers.push_back(std::move(l));
            }
            if (s.label) {
                s.mask = Mask(64, 64);
                for (std::size_t r = 20; r < 30; ++r)
                    for (std::size_t c = 20; c < 30; ++c) s.mask.at(r, c) = 1;
            }
        }
        const TrainConfig cfg;
        report("compute_gradients", time_ms(5, [&] { reference::compute_gradients(batch, weights, cfg); }),
               time_ms(5, [&] { compute_gradients(batch, weights, cfg); }));
    }
}
