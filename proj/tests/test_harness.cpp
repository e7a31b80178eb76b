#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "asgd/harness.hpp"

using namespace asgd;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("asgd_harness_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

KeyValues small() {
    return parse_key_values(R"(
        # tiny synthetic problem
        n = 3
        m = 600
        k = 3
        box = 4
        epsilon = 0.05
        b = 4
        iterations = 150
        workers = 3
        target-factor = 1.5
    )");
}

ExperimentConfig small_config(const fs::path& out, KeyValues extra = {}) {
    auto kv = small();
    for (const auto& [k, v] : extra) kv[k] = v;
    kv["out"] = out.string();
    return config_from(kv);
}

TracePoint point(double gt, std::uint64_t samples) {
    TracePoint p;
    p.gt_error = gt;
    p.samples = samples;
    p.time_s = static_cast<double>(samples);
    return p;
}

}  // namespace

TEST_CASE("key = value parsing") {
    const auto kv = parse_key_values("a = 1\n  # note\nb=two words # trailing\n\nc =\na = 3\n");
    CHECK(kv.size() == 3);
    CHECK(kv.at("a") == "3");
    CHECK(kv.at("b") == "two words");
    CHECK(kv.at("c").empty());
    CHECK_THROWS_WITH_AS(parse_key_values("x 1\n"), doctest::Contains("line 1"), config_error);
    CHECK_THROWS_WITH_AS(parse_key_values("ok = 1\n= 2\n"), doctest::Contains("line 2"), config_error);
    CHECK(parse_key_values(format_key_values(kv)) == kv);
    CHECK_THROWS_AS(read_config_file("/nonexistent/asgd.cfg"), config_error);
}

TEST_CASE("config errors name the field") {
    auto bad = [](const std::string& key, const std::string& value) {
        auto kv = small();
        kv[key] = value;
        return kv;
    };
    CHECK_THROWS_WITH_AS(config_from(bad("folds", "0")), doctest::Contains("folds"), config_error);
    CHECK_THROWS_WITH_AS(config_from(bad("epsilon", "fast")), doctest::Contains("epsilon"),
                         config_error);
    CHECK_THROWS_WITH_AS(config_from(bad("epsilon", "-1")), doctest::Contains("epsilon"),
                         config_error);
    CHECK_THROWS_WITH_AS(config_from(bad("b", "-3")), doctest::Contains("b:"), config_error);
    CHECK_THROWS_WITH_AS(config_from(bad("solver", "lbfgs")), doctest::Contains("solver"),
                         config_error);
    CHECK_THROWS_WITH_AS(config_from(bad("network", "carrier-pigeon")),
                         doctest::Contains("network"), config_error);
    CHECK_THROWS_WITH_AS(config_from(bad("bandwidth", "0")), doctest::Contains("bandwidth"),
                         config_error);
    CHECK_THROWS_WITH_AS(config_from(bad("data", "/nonexistent/points.bin")),
                         doctest::Contains("data"), config_error);
    CHECK_THROWS_WITH_AS(config_from(bad("colour", "blue")), doctest::Contains("colour"),
                         config_error);
    CHECK_THROWS_WITH_AS(config_from(bad("stop-at-target", "maybe")),
                         doctest::Contains("stop-at-target"), config_error);
    CHECK_THROWS_WITH_AS(config_from(bad("cluster-sigma", "0")), doctest::Contains("cluster-sigma"),
                         config_error);
    auto kv = small();
    kv["adaptive-b"] = "true";
    kv["solver"] = "spsgd";
    CHECK_THROWS_WITH_AS(config_from(kv), doctest::Contains("adaptive-b"), config_error);
    kv = small();
    kv["solver"] = "batch";
    kv["samples"] = "100";
    CHECK_THROWS_WITH_AS(config_from(kv), doctest::Contains("samples"), config_error);
    kv = small();
    kv["mode"] = "wall";
    kv["torn-writes"] = "true";
    CHECK_THROWS_WITH_AS(config_from(kv), doctest::Contains("torn-writes"), config_error);
}

TEST_CASE("resolved configuration round trips") {
    auto kv = small();
    kv["adaptive-b"] = "true";
    kv["b"] = "64";
    kv["network"] = "ethernet";
    kv["latency"] = "2e-5";
    kv["send-every"] = "never";
    kv["sigmas"] = "1,2,0.5";
    kv["samples"] = "1000";
    const auto c = config_from(kv);
    CHECK(c.net.latency == 2e-5);
    CHECK(c.net.bandwidth == 1.25e8);
    CHECK(c.send_every == kNever);
    CHECK(c.resolved_iterations() == 125);  // budget over b-min
    const auto resolved = to_key_values(c);
    CHECK(resolved.at("q-opt") == "32");
    CHECK(resolved.at("gamma") == "0.2");
    CHECK(to_key_values(config_from(resolved)) == resolved);

    kv.erase("adaptive-b");
    CHECK(config_from(kv).resolved_iterations() == 16);
}

TEST_CASE("lower median") {
    CHECK(lower_median({1, 2, 9}) == 2);
    CHECK(lower_median({4, 1, 3, 2}) == 2);
    CHECK(lower_median({7}) == 7);
    CHECK(lower_median({1, INFINITY, INFINITY}) == INFINITY);
    CHECK_THROWS(lower_median({}));
}

TEST_CASE("median trace") {
    const std::vector<std::vector<TracePoint>> traces = {
        {point(10, 0), point(1, 5)},
        {point(12, 0), point(2, 5)},
        {point(11, 0), point(9, 5)},
    };
    const auto med = median_trace(traces);
    REQUIRE(med.size() == 2);
    CHECK(med[0].gt_error == 11);
    CHECK(med[1].gt_error == 2);

    // a shorter trace is padded with its last row
    const std::vector<std::vector<TracePoint>> ragged = {
        {point(5, 0)},
        {point(6, 0), point(1, 3), point(0.5, 6)},
        {point(7, 0), point(3, 3), point(2, 6)},
    };
    const auto r = median_trace(ragged);
    REQUIRE(r.size() == 3);
    CHECK(r[2].gt_error == 2);
    CHECK(r[2].samples == 6);  // padded column (0, 6, 6)
}

TEST_CASE("one fold: the median file equals the fold file") {
    const auto dir = scratch("one");
    auto cfg = small_config(dir / "x", {{"solver", "sgd"}});
    const auto r = run_experiment(cfg);
    CHECK(r.folds.size() == 1);
    CHECK(slurp(dir / "x_fold0.csv") == slurp(dir / "x_median.csv"));
    CHECK(slurp(dir / "x_fold0.csv").rfind(std::string(kTraceHeader) + "\n", 0) == 0);
    CHECK(fs::exists(dir / "x.manifest"));
    CHECK(fs::exists(dir / "x_summary.csv"));
}

TEST_CASE("experiment outputs are well formed and reproducible") {
    const auto dir = scratch("repro");
    const auto cfg = small_config(dir / "a", {{"folds", "3"}, {"network", "ethernet"}});
    const auto r = run_experiment(cfg);
    REQUIRE(r.target.has_value());
    CHECK(r.folds.size() == 3);

    // every CSV row count matches its checkpoints
    for (std::size_t f = 0; f < 3; ++f) {
        std::ifstream in(dir / ("a_fold" + std::to_string(f) + ".csv"));
        std::string line;
        std::size_t rows = 0;
        std::getline(in, line);
        CHECK(line == kTraceHeader);
        while (std::getline(in, line)) {
            ++rows;
            CHECK(std::count(line.begin(), line.end(), ',') == 6);
        }
        CHECK(rows == r.folds[f].trace.size());
    }
    std::ifstream summary(dir / "a_summary.csv");
    std::string header;
    std::getline(summary, header);
    CHECK(header ==
          "fold,runtime_to_target,final_gt_error,msgs_sent,msgs_accepted,mean_queue_last_half,target");

    // same config again, and again from the manifest
    auto again = cfg;
    again.out = (dir / "b").string();
    run_experiment(again);
    auto kv = read_config_file((dir / "a.manifest").string());
    kv["out"] = (dir / "c").string();
    run_experiment(config_from(kv));
    for (const std::string suffix : {"_fold0.csv", "_fold1.csv", "_fold2.csv", "_median.csv",
                                     "_summary.csv"}) {
        const auto a = slurp(dir / ("a" + suffix));
        CHECK(a == slurp(dir / ("b" + suffix)));
        CHECK(a == slurp(dir / ("c" + suffix)));
    }
}

TEST_CASE("runtime to target uses the first checkpoint below the target") {
    const auto dir = scratch("target");
    auto cfg = small_config(dir / "t", {{"folds", "2"}});
    cfg.target = 1e9;
    auto r = run_experiment(cfg, false);
    CHECK(r.median_runtime_to_target == 0.0);
    cfg.target = 1e-300;
    r = run_experiment(cfg, false);
    CHECK(r.median_runtime_to_target == INFINITY);
    CHECK_FALSE(r.folds[0].runtime_to_target.has_value());

    cfg.target.reset();
    const auto [X, gt] = load_data(cfg);
    const double t = reference_target(cfg, X, *gt);
    r = run_experiment(cfg, false);
    CHECK(*r.target == t);
    for (const auto& f : r.folds) {
        if (!f.runtime_to_target) continue;
        for (const auto& p : f.trace) {
            if (p.time_s < *f.runtime_to_target) CHECK(p.gt_error >= t);
        }
    }
}

TEST_CASE("stop at target ends folds early") {
    const auto dir = scratch("stop");
    auto cfg = small_config(dir / "s", {{"stop-at-target", "true"}, {"target", "1e9"}});
    const auto r = run_experiment(cfg, false);
    CHECK(r.folds[0].trace.size() == 1);
}

TEST_CASE("solver failures carry the fold index") {
    const auto dir = scratch("fail");
    auto cfg = small_config(dir / "f", {{"workers", "601"}});
    CHECK_THROWS_WITH_AS(run_experiment(cfg, false), doctest::Contains("fold 0"), std::runtime_error);
}

TEST_CASE("datasets from files") {
    const auto dir = scratch("files");
    SyntheticSpec s;
    s.n = 2;
    s.m = 300;
    s.k = 3;
    const auto [X, gt] = generate(s);
    write_dataset(dir / "d.bin", X);
    write_ground_truth(dir / "t.bin", gt);
    auto kv = parse_key_values("k = 3\niterations = 20\nsolver = sgd\n");
    kv["data"] = (dir / "d.bin").string();
    kv["truth"] = (dir / "t.bin").string();
    kv["out"] = (dir / "r").string();
    const auto r = run_experiment(config_from(kv));
    CHECK(r.target.has_value());
    kv["k"] = "4";
    CHECK_THROWS_WITH_AS(run_experiment(config_from(kv), false), doctest::Contains("k:"),
                         config_error);
    kv["k"] = "3";
    kv.erase("truth");
    CHECK_FALSE(run_experiment(config_from(kv), false).target.has_value());
}

TEST_CASE("sweep with one value matches run_experiment") {
    const auto dir = scratch("sweep1");
    SweepConfig sc;
    sc.base = small_config(dir / "s", {{"folds", "2"}});
    sc.variable = "b";
    sc.values = {4};
    const auto rows = run_sweep(sc);
    REQUIRE(rows.size() == 1);
    const auto direct = run_experiment(sc.base, false);
    CHECK(rows[0].report.median == direct.median);
    CHECK(rows[0].report.median_final_gt_error == direct.median_final_gt_error);
    CHECK(slurp(dir / "s_b4_median.csv") == trace_csv(direct.median));
    const auto csv = slurp(dir / "s_sweep.csv");
    CHECK(csv.rfind(
              "value,median_runtime_to_target,median_final_gt_error,median_msgs_accepted\n4,", 0) ==
          0);
}

TEST_CASE("sweep rows keep their own b") {
    const auto dir = scratch("sweep2");
    SweepConfig sc;
    sc.base = small_config(dir / "s", {{"network", "ethernet"}, {"samples", "2000"}});
    sc.values = {500, 100000};
    const auto rows = run_sweep(sc, false);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].report.median.front().b_current == 500);
    CHECK(rows[1].report.median.front().b_current == 100000);

    sc.values = {};
    CHECK_THROWS_WITH_AS(run_sweep(sc, false), doctest::Contains("values"), config_error);
    sc.values = {-1};
    CHECK_THROWS_AS(run_sweep(sc, false), config_error);
    sc.values = {1};
    sc.variable = "colour";
    CHECK_THROWS_WITH_AS(run_sweep(sc, false), doctest::Contains("variable"), config_error);
}

TEST_CASE("compare identical presets gives identical results") {
    const auto dir = scratch("cmp");
    const auto cfg = small_config(dir / "c", {{"folds", "2"}});
    const auto rows = compare_presets(cfg, {"ethernet", "ethernet"});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].report.median == rows[1].report.median);
    CHECK(rows[0].report.median_runtime_to_target == rows[1].report.median_runtime_to_target);
    const auto csv = slurp(dir / "c_compare.csv");
    CHECK(csv.find("ethernet") != std::string::npos);
    CHECK_THROWS_AS(compare_presets(cfg, {"smoke-signals"}, false), config_error);
}
