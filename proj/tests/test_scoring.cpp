#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "support.hpp"
#include "uniadet/error.hpp"
#include "uniadet/reference.hpp"
#include "uniadet/scoring.hpp"

using namespace uniadet;
using namespace testsupport;
using doctest::Approx;

TEST_CASE("cosine similarity examples") {
    const std::vector<double> a{1, 0}, b{0, 1}, c{2, 2}, d{1, 1}, e{3, 4}, f{4, 3};
    CHECK(cosine_similarity(a, b) == 0.0);
    CHECK(cosine_similarity(c, d) == Approx(1.0).epsilon(1e-15));
    CHECK(cosine_similarity(e, f) == Approx(0.96).epsilon(1e-15));
}

TEST_CASE("cosine similarity errors") {
    const std::vector<double> z{0, 0}, a{1, 2}, b{1, 2, 3};
    CHECK_THROWS_AS(cosine_similarity(z, a), DomainError);
    CHECK_THROWS_AS(cosine_similarity(a, b), ShapeError);
}

TEST_CASE("two-class softmax examples") {
    CHECK(two_class_softmax(0.3, 0.3, 0.07) == 0.5);
    CHECK(two_class_softmax(0.3, 0.3, 5.0) == 0.5);
    const double tau = 0.07;
    CHECK(two_class_softmax(0.1, 0.1 + tau * std::log(3.0), tau) == Approx(0.75).epsilon(1e-12));
    CHECK(two_class_softmax(-1, 1, 1.0) == Approx(0.880797).epsilon(1e-6));
    CHECK_THROWS_AS(two_class_softmax(0, 1, 0.0), DomainError);
    CHECK_THROWS_AS(two_class_softmax(0, 1, -1.0), DomainError);
}

TEST_CASE("softmax stays finite for extreme logits") {
    const double p = two_class_softmax(-1.0, 1.0, 1e-4);
    CHECK(std::isfinite(p));
    CHECK(p == Approx(1.0));
    CHECK(two_class_softmax(1.0, -1.0, 1e-4) >= 0.0);
}

TEST_CASE("softmax is monotone in tau") {
    const double sn = 0.1, sa = 0.4;
    double prev = 1.0;
    for (double tau : {0.01, 0.05, 0.1, 0.5, 1.0, 10.0, 100.0}) {
        const double p = two_class_softmax(sn, sa, tau);
        CHECK(p < prev);
        CHECK(p > 0.5);
        prev = p;
    }
}

TEST_CASE("score_layer examples") {
    Rng rng = make_rng(11);
    SUBCASE("equal seg columns give a constant 0.5 map") {
        auto f = random_layer(rng, 12, 4, 3, 3);
        LayerWeights w{12, random_head(rng, 4), random_head(rng, 4)};
        for (std::size_t k = 0; k < 4; ++k) w.seg.anomaly()[k] = w.seg.normal()[k];
        const auto s = score_layer(f, w, 0.07);
        for (double v : s.map.values) CHECK(v == 0.5);
    }
    SUBCASE("1x1 grid, patch = global, cls = seg") {
        auto f = random_layer(rng, 12, 5, 1, 1);
        std::copy(f.global_token.begin(), f.global_token.end(), f.patch_tokens.begin());
        const auto head = random_head(rng, 5);
        const auto s = score_layer(f, {12, head, head}, 0.07);
        CHECK(s.score == s.map.values[0]);
    }
    SUBCASE("random 2x2, d=4 matches per-cell recomputation") {
        auto f = random_layer(rng, 12, 4, 2, 2);
        LayerWeights w{12, random_head(rng, 4), random_head(rng, 4)};
        const auto s = score_layer(f, w, 0.07);
        for (std::size_t c = 0; c < 4; ++c) CHECK(s.map.values[c] == Approx(oracle::cell_prob(f, c, w.seg, 0.07)).epsilon(1e-12));
        CHECK(s.score == Approx(oracle::global_prob(f, w.cls, 0.07)).epsilon(1e-12));
    }
}

TEST_CASE("score_layer_shared equals score_layer with both heads set") {
    Rng rng = make_rng(12);
    for (int t = 0; t < 20; ++t) {
        const auto f = random_layer(rng, 3, 3, 2, 2);
        const auto w = random_head(rng, 3);
        const auto a = score_layer_shared(f, w, 0.07);
        const auto b = score_layer(f, {3, w, w}, 0.07);
        CHECK(a.map == b.map);
        CHECK(a.score == b.score);
        for (std::size_t c = 0; c < 4; ++c) CHECK(a.map.values[c] == Approx(oracle::cell_prob(f, c, w, 0.07)).epsilon(1e-12));
    }
    SUBCASE("constant tokens give a constant map") {
        auto f = random_layer(rng, 3, 3, 3, 3);
        for (std::size_t c = 1; c < 9; ++c) std::copy_n(f.patch_tokens.begin(), 3, f.patch_tokens.begin() + static_cast<long>(3 * c));
        const auto s = score_layer_shared(f, random_head(rng, 3), 0.07);
        for (double v : s.map.values) CHECK(v == s.map.values[0]);
    }
}

TEST_CASE("dimension mismatch is a shape error") {
    Rng rng = make_rng(13);
    const auto f = random_layer(rng, 3, 4, 2, 2);
    CHECK_THROWS_AS(score_patches(f, random_head(rng, 5), 0.07), ShapeError);
}

TEST_CASE("parallel score_patches matches the serial reference") {
    Rng rng = make_rng(14);
    for (int t = 0; t < 10; ++t) {
        const auto f = random_layer(rng, 3, 16, 7, 5);
        const auto w = random_head(rng, 16);
        const auto a = score_patches(f, w, 0.07);
        const auto b = reference::score_patches(f, w, 0.07);
        for (std::size_t c = 0; c < a.size(); ++c) CHECK(a.values[c] == Approx(b.values[c]).epsilon(1e-12));
    }
}

TEST_CASE("aggregate_layers examples") {
    const Grid g(3, 3, 0.7);
    const std::vector<double> one{0.4};
    auto single = aggregate_layers(std::vector<Grid>{g}, one);
    CHECK(single.map == g);
    CHECK(single.score == 0.4);

    const std::vector<Grid> two{Grid(2, 2, 0.2), Grid(4, 4, 0.4)};
    const std::vector<double> s2{0.1, 0.9};
    const auto agg = aggregate_layers(two, s2);
    CHECK(agg.map.rows == 4);
    for (double v : agg.map.values) CHECK(v == Approx(0.3).epsilon(1e-12));

    const std::vector<Grid> three{Grid(1, 1), Grid(1, 1), Grid(1, 1)};
    const std::vector<double> s3{0.1, 0.5, 0.9};
    CHECK(aggregate_layers(three, s3).score == Approx(0.5).epsilon(1e-12));
    CHECK_THROWS_AS(aggregate_layers(std::vector<Grid>{}, std::vector<double>{}), UsageError);
}

TEST_CASE("upsample_map examples") {
    CHECK(upsample_map(Grid(3, 2, 0.25), 7, 9) == Grid(7, 9, 0.25));
    CHECK(upsample_map(Grid(1, 1, 0.6), 5, 4) == Grid(5, 4, 0.6));

    Grid g(2, 2);
    g(0, 1) = 1;
    g(1, 1) = 1;
    const auto up = upsample_map(g, 2, 4);
    for (std::size_t r = 0; r < 2; ++r) {
        CHECK(up(r, 0) == Approx(0.0));
        CHECK(up(r, 1) == Approx(1.0 / 3).epsilon(1e-12));
        CHECK(up(r, 2) == Approx(2.0 / 3).epsilon(1e-12));
        CHECK(up(r, 3) == Approx(1.0));
    }
    CHECK_THROWS_AS(upsample_map(g, 0, 4), UsageError);
}

TEST_CASE("upsample_map matches the bilinear oracle and stays in range") {
    Rng rng = make_rng(15);
    for (int t = 0; t < 30; ++t) {
        Grid g(1 + uniform_index(rng, 5), 1 + uniform_index(rng, 5));
        for (auto& v : g.values) v = uniform_real(rng);
        const std::size_t h = 1 + uniform_index(rng, 20), w = 1 + uniform_index(rng, 20);
        const auto up = upsample_map(g, h, w);
        const auto ref = oracle::resample(g, h, w);
        for (std::size_t k = 0; k < up.size(); ++k) {
            CHECK(up.values[k] == Approx(ref.values[k]).epsilon(1e-12));
            CHECK(up.values[k] >= g.min());
            CHECK(up.values[k] <= g.max());
        }
    }
}

namespace {

FeatureStack three_layer_stack(Rng& rng) { return random_stack(rng, {12, 18, 24}, 6, {4, 2, 3}, 16, 12); }

}  // namespace

TEST_CASE("predict_zero_shot fusion endpoints") {
    Rng rng = make_rng(16);
    const auto f = three_layer_stack(rng);
    auto w = random_weights(rng, f);
    const auto base = predict_zero_shot(f, w);
    double mean = 0;
    for (double s : base.layer_scores) mean += s;
    mean /= 3;

    w.lambda_p = 0;
    CHECK(predict_zero_shot(f, w).score == Approx(mean).epsilon(1e-15));
    w.lambda_p = 1;
    CHECK(predict_zero_shot(f, w).score == base.map.max());
    w.lambda_p = 0.5;
    CHECK(base.score == Approx(0.5 * mean + 0.5 * base.map.max()).epsilon(1e-15));
    CHECK(fuse(0.6, 0.8, 0.5) == Approx(0.7));
}

TEST_CASE("predict_zero_shot map matches an independent recomputation") {
    Rng rng = make_rng(17);
    const auto f = three_layer_stack(rng);
    const auto w = random_weights(rng, f);
    const auto pred = predict_zero_shot(f, w);
    REQUIRE(pred.map.rows == 16);
    REQUIRE(pred.map.cols == 12);

    // per-layer grids resampled to the finest grid (4x4), averaged, then upsampled
    Grid acc(4, 4);
    for (std::size_t l = 0; l < 3; ++l) {
        const auto& lf = f.layers[l];
        Grid g(lf.grid_h, lf.grid_w);
        for (std::size_t c = 0; c < lf.cells(); ++c) g.values[c] = oracle::cell_prob(lf, c, w.layers[l].seg, w.tau);
        const auto r = oracle::resample(g, 4, 4);
        for (std::size_t k = 0; k < 16; ++k) acc.values[k] += r.values[k] / 3;
    }
    const auto full = oracle::resample(acc, 16, 12);
    for (std::size_t k = 0; k < full.size(); ++k) CHECK(pred.map.values[k] == Approx(full.values[k]).epsilon(1e-9));
}

TEST_CASE("scale invariance of maps and scores") {
    Rng rng = make_rng(18);
    for (int t = 0; t < 10; ++t) {
        auto f = three_layer_stack(rng);
        auto w = random_weights(rng, f);
        const auto base = predict_zero_shot(f, w);
        for (auto& l : w.layers) {
            for (auto& v : l.cls.normal()) v *= 3.5;
            for (auto& v : l.seg.anomaly()) v *= 0.02;
        }
        for (auto& l : f.layers) {
            for (auto& v : l.patch_tokens) v *= 7.0f;
            for (auto& v : l.global_token) v *= 0.5f;
        }
        const auto scaled = predict_zero_shot(f, w);
        CHECK(scaled.score == Approx(base.score).epsilon(1e-6));
        for (std::size_t k = 0; k < base.map.size(); ++k)
            CHECK(std::abs(scaled.map.values[k] - base.map.values[k]) <= 1e-6);
    }
}

TEST_CASE("swapping columns complements every probability") {
    Rng rng = make_rng(19);
    for (int t = 0; t < 20; ++t) {
        const auto f = random_layer(rng, 1, 5, 3, 3);
        const LayerWeights w{1, random_head(rng, 5), random_head(rng, 5)};
        const LayerWeights sw{1, w.cls.swapped(), w.seg.swapped()};
        const auto a = score_layer(f, w, 0.07), b = score_layer(f, sw, 0.07);
        CHECK(std::abs(a.score + b.score - 1.0) <= 1e-9);
        for (std::size_t k = 0; k < a.map.size(); ++k) CHECK(std::abs(a.map.values[k] + b.map.values[k] - 1.0) <= 1e-9);
    }
}

TEST_CASE("outputs stay in [0,1] and are deterministic") {
    Rng rng = make_rng(20);
    for (int t = 0; t < 10; ++t) {
        const auto f = three_layer_stack(rng);
        const auto w = random_weights(rng, f);
        const auto a = predict_zero_shot(f, w), b = predict_zero_shot(f, w);
        CHECK(a.map == b.map);
        CHECK(a.score == b.score);
        CHECK(a.score >= 0.0);
        CHECK(a.score <= 1.0);
        for (double v : a.map.values) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("layer mismatch is a configuration error") {
    Rng rng = make_rng(21);
    const auto f = three_layer_stack(rng);
    auto w = random_weights(rng, f);
    w.layers.pop_back();
    CHECK_THROWS_AS(predict_zero_shot(f, w), ConfigError);
    auto w2 = random_weights(rng, f);
    w2.layers[1].block_index = 19;
    CHECK_THROWS_AS(predict_zero_shot(f, w2), ConfigError);
}

TEST_CASE("feature validation names the bad cell") {
    Rng rng = make_rng(22);
    auto f = random_layer(rng, 1, 3, 2, 2);
    f.patch_tokens[3 * 3 + 1] = std::nanf("");
    try {
        f.validate();
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("1") != std::string::npos);
    }
}
