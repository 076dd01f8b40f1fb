#include <doctest.h>

#include <cstring>
#include <fstream>

#include "oracles.hpp"
#include "support.hpp"
#include "uniadet/error.hpp"
#include "uniadet/formats.hpp"
#include "uniadet/manifest.hpp"
#include "uniadet/memory_bank.hpp"
#include "uniadet/provider.hpp"
#include "uniadet/synth.hpp"

using namespace uniadet;
using namespace testsupport;
namespace fs = std::filesystem;

namespace {

FeatureStack random_features(Rng& rng) {
    const std::size_t layers = 1 + uniform_index(rng, 4);
    std::vector<int> blocks;
    std::vector<std::size_t> grids;
    for (std::size_t l = 0; l < layers; ++l) {
        blocks.push_back(static_cast<int>(l * 3 + uniform_index(rng, 3)));
        grids.push_back(1 + uniform_index(rng, 5));
    }
    return random_stack(rng, blocks, 1 + uniform_index(rng, 9), grids, 1 + uniform_index(rng, 40),
                        1 + uniform_index(rng, 40));
}

WeightBank float_weights(Rng& rng, const FeatureStack& layout) {
    auto w = random_weights(rng, layout);
    for (auto& l : w.layers)
        for (auto* h : {&l.cls, &l.seg})
            for (auto& v : h->values) v = static_cast<float>(v);
    w.tau = static_cast<float>(uniform_real(rng, 0.01, 2.0));
    w.lambda_p = static_cast<float>(uniform_real(rng));
    w.lambda_f = static_cast<float>(uniform_real(rng));
    w.metadata = {{"seed", uniform_index(rng, 1000)}, {"note", "round trip"}};
    return w;
}

void put_u16(std::vector<std::uint8_t>& b, std::size_t at, std::uint16_t v) {
    b[at] = static_cast<std::uint8_t>(v & 0xff);
    b[at + 1] = static_cast<std::uint8_t>(v >> 8);
}

float get_f32(const std::vector<std::uint8_t>& b, std::size_t at) {
    float f;
    std::memcpy(&f, b.data() + at, 4);
    return f;
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

}  // namespace

TEST_CASE("UFST round trip") {
    Rng rng = make_rng(21);
    for (int t = 0; t < 40; ++t) {
        auto s = random_features(rng);
        s.source_id = "x";
        const auto bytes = encode_features(s);
        CHECK(decode_features(bytes, "x") == s);
    }
    TempDir dir;
    auto s = random_features(rng);
    write_feature_file(s, dir / "img_007.ufst");
    const auto back = read_feature_file(dir / "img_007.ufst");
    CHECK(back.source_id == "img_007");
    CHECK(back.layers == s.layers);
}

TEST_CASE("UADW round trip and column order") {
    Rng rng = make_rng(22);
    for (int t = 0; t < 40; ++t) {
        const auto w = float_weights(rng, random_features(rng));
        CHECK(decode_weights(encode_weights(w)) == w);
    }
    WeightBank w;
    TwoClassWeights cls(2), seg(2);
    cls.values = {1, 2, 3, 4};  // normal = (1, 2), anomaly = (3, 4)
    seg.values = {5, 6, 7, 8};
    w.layers.push_back({9, cls, seg});
    const auto bytes = encode_weights(w);
    // 4 magic + 2 version + 12 scalars + 2 count, then u16 block and u32 dim
    const std::size_t at = 26;
    for (int k = 0; k < 8; ++k) CHECK(get_f32(bytes, at + 4 * static_cast<std::size_t>(k)) == static_cast<float>(k + 1));
}

TEST_CASE("UFSB round trip") {
    Rng rng = make_rng(23);
    for (int t = 0; t < 20; ++t) {
        const auto a = random_features(rng);
        auto b = a;
        for (auto& l : b.layers)
            for (auto& v : l.patch_tokens) v = -v;
        auto bank = build_bank(std::vector<FeatureStack>{a, b});
        for (auto& l : bank.layers)
            for (auto& v : l.tokens) v = static_cast<float>(v);
        bank.source_ids = {"first", "second"};
        CHECK(decode_bank(encode_bank(bank)) == bank);
    }
}

TEST_CASE("PGM masks and rasters") {
    TempDir dir;
    Rng rng = make_rng(24);
    for (int t = 0; t < 20; ++t) {
        auto m = random_mask(rng, 1 + uniform_index(rng, 30), 1 + uniform_index(rng, 30), 0.3);
        write_mask(m, dir / "m.pgm");
        CHECK(read_mask(dir / "m.pgm") == m);
        CHECK(decode_mask(encode_mask(m)) == m);
    }
    SUBCASE("any nonzero sample is anomalous") {
        const std::string pgm = "P5\n# comment\n2 1\n255\n";
        std::vector<std::uint8_t> bytes(pgm.begin(), pgm.end());
        bytes.push_back(0);
        bytes.push_back(7);
        const auto m = decode_mask(bytes);
        CHECK(m.width == 2);
        CHECK(m.at(0, 0) == 0);
        CHECK(m.at(0, 1) != 0);
    }
    SUBCASE("size mismatch") {
        write_mask(Mask(4, 5), dir / "m.pgm");
        CHECK_THROWS_AS(read_mask(dir / "m.pgm", std::pair<std::size_t, std::size_t>{4, 4}), ValidationError);
        CHECK_NOTHROW(read_mask(dir / "m.pgm", std::pair<std::size_t, std::size_t>{4, 5}));
    }
    SUBCASE("8-bit rasters") {
        Raster r(3, 4, 3);
        for (std::size_t k = 0; k < r.data.size(); ++k) r.data[k] = static_cast<double>(k * 17 % 256) / 255.0;
        write_raster(r, dir / "r.ppm");
        const auto back = read_raster(dir / "r.ppm");
        REQUIRE(back.data.size() == r.data.size());
        for (std::size_t k = 0; k < r.data.size(); ++k) CHECK(back.data[k] == doctest::Approx(r.data[k]).epsilon(1e-12));
    }
    SUBCASE("malformed headers") {
        const std::string bad = "P2\n2 2\n255\n0 0 0 0";
        CHECK_THROWS_AS(decode_mask(std::vector<std::uint8_t>(bad.begin(), bad.end())), FormatError);
        const std::string short_body = "P5\n4 4\n255\n";
        CHECK_THROWS_AS(decode_mask(std::vector<std::uint8_t>(short_body.begin(), short_body.end())), FormatError);
        CHECK_THROWS_AS(read_mask(dir / "missing.pgm"), IoError);
    }
}

TEST_CASE("malformed binary payloads raise typed errors") {
    Rng rng = make_rng(25);
    const auto stack = random_features(rng);
    const auto weights = float_weights(rng, stack);
    const auto bank = build_bank(std::vector<FeatureStack>{stack});
    const std::vector<std::vector<std::uint8_t>> payloads{encode_features(stack), encode_weights(weights),
                                                          encode_bank(bank)};
    auto decode = [&](std::size_t kind, const std::vector<std::uint8_t>& b) {
        if (kind == 0) decode_features(b);
        if (kind == 1) decode_weights(b);
        if (kind == 2) decode_bank(b);
    };
    for (std::size_t kind = 0; kind < payloads.size(); ++kind) {
        const auto& good = payloads[kind];
        CHECK_NOTHROW(decode(kind, good));
        for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{5}, good.size() / 2, good.size() - 1})
            CHECK_THROWS_AS(decode(kind, std::vector<std::uint8_t>(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(cut))),
                            FormatError);
        auto magic = good;
        magic[0] = 'X';
        CHECK_THROWS_AS(decode(kind, magic), FormatError);
        auto version = good;
        put_u16(version, 4, 2);
        CHECK_THROWS_AS(decode(kind, version), FormatError);
        auto trailing = good;
        trailing.push_back(0);
        CHECK_THROWS_AS(decode(kind, trailing), FormatError);
    }
    SUBCASE("non-finite values") {
        auto s = stack;
        s.layers[0].patch_tokens.back() = 0.0f;
        auto bytes = encode_features(s);
        const float nan = std::numeric_limits<float>::quiet_NaN();
        std::memcpy(bytes.data() + bytes.size() - 4, &nan, 4);
        try {
            decode_features(bytes);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
        }
        auto wb = encode_weights(weights);
        std::memcpy(wb.data() + 26, &nan, 4);
        CHECK_THROWS_AS(decode_weights(wb), FormatError);
    }
    SUBCASE("invalid fusion coefficients") {
        auto wb = encode_weights(weights);
        const float bad = 1.5f;
        std::memcpy(wb.data() + 10, &bad, 4);  // lambda_p
        CHECK_THROWS_AS(decode_weights(wb), FormatError);
    }
    SUBCASE("missing file") { CHECK_THROWS_AS(read_feature_file("/nonexistent/x.ufst"), IoError); }
}

TEST_CASE("manifest validation") {
    TempDir dir;
    auto parse = [&](const std::string& entries, const ManifestOptions& opt = {}) {
        return parse_manifest(R"({"root": ".", "entries": [)" + entries + "]}", dir.path(), opt);
    };
    const std::string a = R"({"id": "a", "class_name": "c", "split": "train", "label": 0, "image_path": "a.pgm"})";
    const std::string b = R"({"id": "b", "class_name": "c", "split": "test", "label": 1})";

    const auto m = parse(a + "," + b);
    REQUIRE(m.entries.size() == 2);
    CHECK(m.entries[0].image_path == dir.path() / "." / "a.pgm");
    CHECK(m.select(Split::test).size() == 1);
    CHECK(m.class_names() == std::vector<std::string>{"c"});

    auto message = [&](const std::string& entries, const ManifestOptions& opt = {}) {
        try {
            parse(entries, opt);
        } catch (const ValidationError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    CHECK(message(a + "," + a).find("duplicate ids: a") != std::string::npos);
    const std::string odd = R"({"id": "z", "class_name": "c", "split": "val", "label": 0})";
    CHECK(message(odd).find("unknown split: z") != std::string::npos);
    CHECK(message(b, {.require_test_masks = true}).find("without mask_path: b") != std::string::npos);
    const std::string bad_label = R"({"id": "q", "class_name": "c", "split": "test", "label": 3})";
    CHECK(message(bad_label).find("q") != std::string::npos);
    CHECK_THROWS_AS(parse_manifest("{not json", dir.path()), FormatError);
    CHECK_THROWS_AS(parse_manifest(R"({"root": "."})", dir.path()), ValidationError);
    CHECK_THROWS_AS(load_manifest(dir / "missing.json"), IoError);

    SUBCASE("strict label/mask consistency") {
        write_mask(Mask(4, 4), dir / "empty.pgm");
        const std::string e = R"({"id": "e", "class_name": "c", "split": "test", "label": 1, "mask_path": "empty.pgm"})";
        CHECK_NOTHROW(parse(e));
        CHECK_NOTHROW(parse(e, {.check_masks = true}));
        CHECK_THROWS_AS(parse(e, {.strict = true}), ValidationError);
    }
    SUBCASE("save and reload") {
        auto saved = m;
        saved.root = dir.path();
        saved.entries[0].image_path = dir / "a.pgm";
        save_manifest(saved, dir / "sub.json");
        const auto back = load_manifest(dir / "sub.json");
        CHECK(fs::equivalent(back.root, dir.path()));
        CHECK(back.entries[0].image_path->lexically_normal() == (dir / "a.pgm").lexically_normal());
        CHECK(back.entries[1].label == 1);
    }
}

TEST_CASE("synthetic provider geometry") {
    const SyntheticProvider provider{SyntheticConfig{}};
    Rng rng = make_rng(26);
    const auto normal = synthesize_image(0, false, 64, rng);
    const auto anomalous = synthesize_image(1, true, 64, rng);
    const auto fa = provider.extract(anomalous.image, "a");
    CHECK(provider.extract(anomalous.image, "a") == fa);
    CHECK(fa.block_indices() == std::vector<int>{12, 15, 18, 21, 24});

    std::size_t total = 0, low = 0;
    for (int i = 0; i < 10; ++i) {
        const auto img = synthesize_image(i % 2, false, 64, rng);
        const auto f = provider.extract(img.image, "n");
        for (std::size_t l = 0; l < f.layers.size(); ++l) {
            const auto a = oracle::to_double(provider.anomaly_direction(l));
            for (std::size_t c = 0; c < f.layers[l].cells(); ++c) {
                ++total;
                if (oracle::cosine(oracle::to_double(f.layers[l].patch(c)), a) < 0.5) ++low;
            }
        }
    }
    CHECK(static_cast<double>(low) >= 0.99 * static_cast<double>(total));

    // defect cells lean further towards the anomaly direction than clean ones
    const auto fn = provider.extract(normal.image, "n");
    const auto mask = anomalous.mask;
    for (std::size_t l = 0; l < fa.layers.size(); ++l) {
        const auto a = oracle::to_double(provider.anomaly_direction(l));
        const auto& layer = fa.layers[l];
        const auto target = pool_mask_to_grid(mask, layer.grid_h, layer.grid_w);
        double in = 0, out = 0, n_in = 0, n_out = 0;
        for (std::size_t c = 0; c < layer.cells(); ++c) {
            const double cs = oracle::cosine(oracle::to_double(layer.patch(c)), a);
            (target[c] ? in : out) += cs;
            (target[c] ? n_in : n_out) += 1;
        }
        REQUIRE(n_in > 0);
        CHECK(in / n_in > out / n_out);
    }
    CHECK(fn.layers.size() == fa.layers.size());
}

TEST_CASE("synthetic provider config and layer subsets") {
    SyntheticConfig c;
    c.layers = {{3, 16, 4}, {7, 16, 2}};
    const auto back = SyntheticConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK_THROWS_AS(SyntheticConfig::from_json({{"layers", {{{"block", 5}}, {{"block", 2}}}}}), ValidationError);
    CHECK_THROWS_AS(SyntheticConfig::from_json({{"layers", {{{"block", 5}, {"dim", 4}}}}}), ValidationError);

    auto inner = std::make_shared<SyntheticProvider>(c);
    const LayerSubsetProvider subset(inner, {7});
    const Raster img(16, 16, 1, 0.5);
    const auto f = subset.extract(img, "x");
    REQUIRE(f.layers.size() == 1);
    CHECK(f.layers[0] == inner->extract(img, "x").layers[1]);
    CHECK(subset.describe().at("blocks") == nlohmann::json::array({7}));
    CHECK_THROWS_AS(LayerSubsetProvider(inner, {8}).extract(img, "x"), ConfigError);
    CHECK_THROWS_AS(FileFeatureProvider().features(ManifestEntry{}), ConfigError);
}
