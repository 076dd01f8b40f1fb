#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "support.hpp"
#include "uniadet/commands.hpp"
#include "uniadet/error.hpp"
#include "uniadet/formats.hpp"
#include "uniadet/manifest.hpp"
#include "uniadet/provider.hpp"
#include "uniadet/synth.hpp"

using namespace uniadet;
using namespace testsupport;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(UNIADET_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json load_json(const fs::path& p) { return json::parse(slurp(p)); }

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// One small corpus and trained weights shared by the end-to-end cases.
struct Workspace {
    TempDir dir;
    fs::path corpus = dir / "corpus";
    fs::path manifest = corpus / "manifest.json";
    fs::path weights = dir / "w.uadw";
    Workspace() {
        REQUIRE(run("synth --out " + q(corpus) + " --classes 2 --images 12 --size 32 --seed 3") == 0);
        REQUIRE(run("train --manifest " + q(manifest) + " --out " + q(weights) + " --epochs 2 --seed 1") == 0);
    }
};

Workspace& workspace() {
    static Workspace ws;
    return ws;
}

}  // namespace

TEST_CASE("synth writes the requested corpus") {
    TempDir dir;
    SynthOptions opt;
    opt.out_dir = dir / "a";
    opt.classes = 2;
    opt.images_per_class = 20;
    opt.image_size = 32;
    const auto m = synthesize_corpus(opt);
    CHECK(m.entries.size() == 40);
    std::size_t masks = 0, anomalies = 0;
    for (const auto& e : m.entries) {
        masks += e.mask_path.has_value();
        anomalies += e.label == 1;
        CHECK(fs::exists(*e.image_path));
    }
    CHECK(masks == 20);
    CHECK(anomalies == 20);
    CHECK(m.select(Split::train).size() == 20);
    CHECK(load_manifest(opt.out_dir / "manifest.json", {.strict = true}).entries.size() == 40);

    opt.out_dir = dir / "b";
    synthesize_corpus(opt);
    for (const auto& e : m.entries) {
        const auto rel = fs::relative(*e.image_path, dir / "a");
        CHECK(slurp(dir / "a" / rel) == slurp(dir / "b" / rel));
    }

    opt.out_dir = dir / "c";
    opt.anomaly_fraction = 0.0;
    const auto none = synthesize_corpus(opt);
    for (const auto& e : none.entries) CHECK(e.label == 0);
    const bool no_masks = !fs::exists(dir / "c" / "masks") || fs::is_empty(dir / "c" / "masks");
    CHECK(no_masks);
}

TEST_CASE("ablation grids") {
    const std::vector<int> blocks{12, 15, 18, 21, 24};
    const auto t6 = parse_ablation_grid("components", blocks);
    REQUIRE(t6.size() == 5);
    CHECK(!t6[0].flags.decouple_cls_seg);
    CHECK(t6[1].flags.decouple_cls_seg);
    CHECK(!t6[1].flags.decouple_layers);
    CHECK(t6[3].flags.use_caa);
    CHECK(t6[4].shots == 1);
    const auto t7 = parse_ablation_grid("layers", blocks);
    REQUIRE(t7.size() == 5);
    CHECK(t7[0].layers == std::vector<int>{24});
    CHECK(t7[1].name == "blocks_21_24");
    const auto custom = parse_ablation_grid("name=a;no-dcs,layers=18+24,shots=2,name=b", blocks);
    REQUIRE(custom.size() == 2);
    CHECK(custom[1].name == "b");
    CHECK(custom[1].layers == std::vector<int>{18, 24});
    CHECK(custom[1].shots == 2);
    CHECK(!custom[1].flags.decouple_cls_seg);
    CHECK_THROWS_AS(parse_ablation_grid("bogus-token", blocks), UsageError);
}

TEST_CASE("train writes weights and a log") {
    auto& ws = workspace();
    const auto w = read_weight_file(ws.weights);
    CHECK(w.layers.size() == 5);
    CHECK(w.metadata.at("epochs") == 2);
    CHECK(fs::exists(ws.weights.string() + ".log.csv"));

    const auto shared = ws.dir / "shared.uadw";
    REQUIRE(run("train --manifest " + q(ws.manifest) + " --out " + q(shared) + " --epochs 1 --no-dcs") == 0);
    for (const auto& l : read_weight_file(shared).layers) CHECK(l.cls == l.seg);

    const auto single = ws.dir / "single.uadw";
    REQUIRE(run("train --manifest " + q(ws.manifest) + " --out " + q(single) + " --epochs 1 --layers 24") == 0);
    CHECK(read_weight_file(single).block_indices() == std::vector<int>{24});
    // evaluating picks the weights' layers out of the full stack
    CHECK(run("eval --manifest " + q(ws.manifest) + " --weights " + q(single) + " --out " + q(ws.dir / "single")) == 0);
}

TEST_CASE("eval reports") {
    auto& ws = workspace();
    const auto out = ws.dir / "zero";
    REQUIRE(run("eval --manifest " + q(ws.manifest) + " --weights " + q(ws.weights) + " --out " + q(out) +
                " --repeat 2") == 0);
    const auto report = load_json(out / "report.json");
    REQUIRE(report.at("classes").size() == 2);
    for (const auto& m : report.at("metrics")) {
        const std::string name = m.get<std::string>();
        CHECK(report.at("mean").at("stddev").at(name).get<double>() == 0.0);
        const double a = report.at("classes")[0].at("values").at(name).get<double>();
        const double b = report.at("classes")[1].at("values").at(name).get<double>();
        CHECK(report.at("mean").at("values").at(name).get<double>() == doctest::Approx((a + b) / 2).epsilon(1e-12));
    }
    const auto csv = slurp(out / "report.csv");
    CHECK(csv.rfind("category,I-AUROC,I-AUPR,I-F1max,P-AUROC,P-AUPR,P-F1max,P-AUPRO", 0) == 0);
    CHECK(csv.find("\nmean,") != std::string::npos);

    const auto few = ws.dir / "few";
    REQUIRE(run("eval --manifest " + q(ws.manifest) + " --weights " + q(ws.weights) + " --out " + q(few) +
                " --shots 1 --repeat 3 --seed 4") == 0);
    const auto refs = load_json(few / "report.json").at("references");
    REQUIRE(refs.size() == 3);
    std::set<std::string> drawn;
    for (const auto& r : refs) drawn.insert(r.at("class0")[0].get<std::string>());
    CHECK(drawn.size() > 1);

    CHECK(run("eval --manifest " + q(ws.manifest) + " --weights " + q(ws.weights) + " --shots 99") == 2);
}

TEST_CASE("predict and bank") {
    auto& ws = workspace();
    const auto m = load_manifest(ws.manifest);
    const auto* entry = m.select(Split::test, "class1").back();
    const std::string provider = " --provider " + q(ws.corpus / "provider.json");
    const auto zero = ws.dir / "zero.pgm";
    REQUIRE(run("predict " + q(*entry->image_path) + " --weights " + q(ws.weights) + " --out " + q(zero) + provider) == 0);
    const auto map = read_raster(zero);
    CHECK(map.height == 32);
    CHECK(map.width == 32);
    const auto info = load_json(zero.string() + ".json");
    const double score = info.at("score").get<double>();
    CHECK(score >= 0.0);
    CHECK(score <= 1.0);

    const auto bank = ws.dir / "class1.ufsb";
    REQUIRE(run("bank --manifest " + q(ws.manifest) + " --out " + q(bank) + " --class class1 --shots 2") == 0);
    CHECK(read_bank_file(bank).shots == 2);
    CHECK(run("bank --manifest " + q(ws.manifest) + " --out " + q(bank)) == 2);  // ambiguous class

    const auto fused = ws.dir / "fused.pgm";
    REQUIRE(run("predict " + q(*entry->image_path) + " --weights " + q(ws.weights) + " --bank " + q(bank) +
                " --lambda-f 0 --out " + q(fused) + provider) == 0);
    CHECK(slurp(fused) == slurp(zero));
    CHECK(load_json(fused.string() + ".json").at("score").get<double>() == score);
    CHECK(load_json(fused.string() + ".json").at("shots") == 2);
}

TEST_CASE("ablate writes one row per setting") {
    auto& ws = workspace();
    const auto out = ws.dir / "ablate";
    REQUIRE(run("ablate --manifest " + q(ws.manifest) + " --out " + q(out) +
                " --epochs 1 --grid 'name=full;no-dcs,no-caa,name=shared'") == 0);
    std::istringstream csv(slurp(out / "ablation.csv"));
    std::vector<std::string> lines;
    for (std::string line; std::getline(csv, line);) lines.push_back(line);
    REQUIRE(lines.size() == 3);
    CHECK(lines[1].rfind("full,", 0) == 0);
    CHECK(lines[2].rfind("shared,", 0) == 0);
    CHECK(load_json(out / "ablation.json").size() == 2);
}

TEST_CASE("exit codes") {
    auto& ws = workspace();
    CHECK(run("") != 0);
    CHECK(run("train --bogus") == 2);
    CHECK(run("eval --manifest /nonexistent/m.json --weights " + q(ws.weights)) == 4);
    CHECK(run("eval --manifest " + q(ws.manifest) + " --weights /nonexistent/w.uadw") == 4);

    TempDir dir;
    std::ofstream(dir / "bad.uadw") << "not a weight file";
    CHECK(run("eval --manifest " + q(ws.manifest) + " --weights " + q(dir / "bad.uadw")) == 2);

    std::ofstream(dir / "dup.json") << R"({"entries": [{"id": "a", "class_name": "c", "split": "test", "label": 0},
                                                       {"id": "a", "class_name": "c", "split": "test", "label": 0}]})";
    CHECK(run("eval --manifest " + q(dir / "dup.json") + " --weights " + q(ws.weights)) == 2);

    // a zero-norm patch token has no direction to score
    auto stack = SyntheticProvider(SyntheticConfig{}).extract(Raster(32, 32, 1, 0.5), "zero");
    for (auto& v : stack.layers[0].patch(0)) v = 0.0f;
    write_feature_file(stack, dir / "zero.ufst");
    CHECK(run("predict " + q(dir / "zero.ufst") + " --weights " + q(ws.weights) + " --out " + q(dir / "z.pgm")) == 3);
}
