#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <fairrepro/harness.hpp>

using namespace fairrepro;
using Catch::Approx;

namespace {

/// A tiny scenario over a small synthetic pair, cheap enough for unit tests.
ScenarioSpec tiny_spec(ScenarioKind kind = ScenarioKind::sdst) {
    nlohmann::json j = {
        {"scenario", to_string(kind)},
        {"seed", 3},
        {"source", {{"name", "synth-source"}, {"synth", {{"n_rows", 1200}, {"bias", 0.8}, {"seed", 1}}}}},
        {"classifier", {{"hidden", {16, 16}}, {"max_epochs", 15}}},
        {"vae", {{"hidden", {16, 16}}, {"epochs", 5}}},
        {"reprogram",
         {{"mode", "GAN"},
          {"epochs", 2},
          {"warmup_epochs", 1},
          {"discriminator_steps", 1},
          {"encoder_hidden", {16, 16}},
          {"discriminator_hidden", {16, 16}}}}};
    if (kind == ScenarioKind::ddst || kind == ScenarioKind::dddt)
        j["target"] = {{"name", "synth-target"},
                       {"synth",
                        {{"n_rows", 1200},
                         {"bias", 0.8},
                         {"seed", 2},
                         {"variant", 1},
                         {"columns", synth_target_columns()}}}};
    if (kind == ScenarioKind::sddt)
        j["target"] = {{"name", "synth-source"},
                       {"synth", {{"n_rows", 1200}, {"bias", 0.8}, {"seed", 1}}},
                       {"label", "cohort"}};
    if (kind == ScenarioKind::dddt) j["target"]["label"] = "cohort";
    return scenario_from_json(j);
}

const SourceArtifacts& tiny_artifacts() {
    static const SourceArtifacts a = [] {
        const auto spec = tiny_spec();
        return train_source_artifacts(load_source(spec.source), spec);
    }();
    return a;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

} // namespace

TEST_CASE("scenario kind invariants") {
    ScenarioSpec s;
    s.source.name = "A";
    s.target.name = "A";
    s.kind = ScenarioKind::sdst;
    CHECK(s.validation_errors("y", "y").empty());
    CHECK_FALSE(s.validation_errors("y", "z").empty());
    s.kind = ScenarioKind::sddt;
    CHECK(s.validation_errors("y", "z").empty());
    CHECK_FALSE(s.validation_errors("y", "y").empty());
    s.kind = ScenarioKind::ddst;
    CHECK_FALSE(s.validation_errors("y", "y").empty());
    s.target.name = "B";
    CHECK(s.validation_errors("y", "y").empty());
    s.kind = ScenarioKind::dddt;
    CHECK(s.validation_errors("y", "z").empty());
    CHECK(s.validation_errors("y", "y").size() == 1);
}

TEST_CASE("scenario kinds are checked before any training") {
    auto spec = tiny_spec(ScenarioKind::sdst);
    spec.kind = ScenarioKind::ddst; // same dataset: violates DDST
    const auto t0 = std::chrono::steady_clock::now();
    CHECK_THROWS_WITH(run_scenario(spec, tiny_artifacts()), Catch::Matchers::ContainsSubstring("DDST"));
    CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(5));
}

TEST_CASE("scenario config parsing collects every offending field") {
    std::vector<std::string> errs;
    scenario_from_json({{"scenario", "XYZ"},
                        {"split", {0.5, 0.5, 0.5}},
                        {"reprogram", {{"gamma", -1}, {"mode", "NOPE"}}},
                        {"vae", {{"epochs", 0}}},
                        {"classifier", {{"hidden", "wide"}}}},
                       &errs);
    std::string all;
    for (const auto& e : errs) all += e + "\n";
    for (const char* field : {"scenario", "split", "reprogram.gamma", "reprogram.mode", "vae.epochs", "classifier.hidden"})
        CHECK(all.find(field) != std::string::npos);
    CHECK_THROWS_AS(scenario_from_json({{"reprogram", {{"gamma", -1}}}}), Error);
}

TEST_CASE("scenario JSON roundtrip and default pairing") {
    const auto spec = tiny_spec(ScenarioKind::ddst);
    const auto j = scenario_to_json(spec);
    CHECK(scenario_to_json(scenario_from_json(j)).dump() == j.dump());

    const auto dddt = scenario_from_json({{"scenario", "DDDT"}});
    CHECK(dddt.target.name == "synth-target");
    CHECK(dddt.target.label == "cohort");
    const auto sdst = scenario_from_json({{"scenario", "SDST"}});
    CHECK(sdst.target.name == sdst.source.name);
}

TEST_CASE("make_synth_pair: nested columns, planted bias") {
    const auto [src, tgt] = make_synth_pair({.n_rows = 20000, .bias = 0.8, .seed = 1});
    CHECK(src.schema().size() == 15);
    CHECK(tgt.schema().size() == 10);
    const auto al = align(src.schema(), tgt.schema());
    CHECK(al.added_in_source.size() == 5);
    CHECK(al.dropped_from_target.empty());
    const auto back = align(tgt.schema(), src.schema());
    CHECK(back.dropped_from_target.size() == 5);
    CHECK(probe_fairness(tgt, 1) >= 0.7);
    CHECK(probe_fairness(src, 1) >= 0.7);

    const auto [fs, ft] = make_synth_pair({.n_rows = 10000, .bias = 0.0, .seed = 2});
    CHECK(probe_fairness(ft, 3) == Approx(0.5).margin(0.03));
}

TEST_CASE("baselines beat the majority share and are deterministic") {
    const auto pair = synth_pair_sources({.n_rows = 3000, .bias = 0.8, .seed = 4});
    auto cohort = pair.target;
    cohort.label = "cohort";
    std::vector<BaselineTask> tasks = {{"source/outcome", pair.source}, {"target/outcome", pair.target},
                                       {"target/cohort", cohort}};
    ClassifierConfig cfg;
    cfg.hidden = {16, 16};
    cfg.max_epochs = 30;
    const auto rows = make_baselines(tasks, {1, 2}, cfg);
    REQUIRE(rows.size() == 3);
    for (const auto& r : rows) {
        INFO(r.name);
        CHECK(r.accuracies.size() == 2);
        CHECK(r.mean >= r.majority_share);
        CHECK(r.classifiers.front().frozen);
    }
    const auto again = make_baselines(tasks, {1, 2}, cfg);
    CHECK(format_baselines(rows) == format_baselines(again));
    CHECK(format_baselines(rows).find("target/cohort") != std::string::npos);
}

TEST_CASE("run_scenario writes a run directory keyed by the config hash") {
    const auto spec = tiny_spec();
    const auto root = std::filesystem::temp_directory_path() / "fairrepro_harness_run";
    std::filesystem::remove_all(root);
    const auto a = run_scenario(spec, tiny_artifacts(), root / "a");
    const auto b = run_scenario(spec, tiny_artifacts(), root / "b");
    CHECK(a.run_dir.filename() == b.run_dir.filename());
    CHECK(a.run_dir.filename().string().rfind("SDST-", 0) == 0);
    for (const char* f : {"config.json", "report.json", "validation_report.json", "timing.json", "encoder.json",
                          "baseline.json", "discriminators.json", "histograms.csv", "grid.txt"})
        CHECK(std::filesystem::exists(a.run_dir / f));
    CHECK(slurp(a.run_dir / "report.json") == slurp(b.run_dir / "report.json"));
    CHECK(slurp(a.run_dir / "report.json").find("wall_clock") == std::string::npos);
    CHECK(a.report.probe_accuracy);

    auto other = spec;
    other.config.gamma = 2.0;
    CHECK(run_directory_name(other, tiny_artifacts()) != a.run_dir.filename().string());
    std::filesystem::remove_all(root);
}

TEST_CASE("run_scenario rejects mismatched artifacts") {
    auto spec = tiny_spec(ScenarioKind::ddst);
    SourceArtifacts bad = tiny_artifacts();
    bad.vae = nullptr;
    CHECK_THROWS_AS(run_scenario(spec, bad), Error);
}

TEST_CASE("a single-point sweep equals run_scenario") {
    const auto spec = tiny_spec();
    SweepSpec sweep;
    sweep.gammas = {spec.config.gamma};
    sweep.deltas = {spec.config.delta};
    sweep.etas = {spec.config.eta};
    sweep.seeds = {spec.seed};
    const auto sw = run_sweep(sweep, spec, tiny_artifacts());
    const auto one = run_scenario(spec, tiny_artifacts());
    REQUIRE(sw.reports.size() == 1);
    CHECK(report_to_json(sw.reports[0]).dump() == report_to_json(one.report).dump());
}

TEST_CASE("sweep results do not depend on grid order") {
    const auto spec = tiny_spec();
    SweepSpec a;
    a.gammas = {0.5, 4.0};
    a.seeds = {3};
    SweepSpec b = a;
    b.gammas = {4.0, 0.5, 4.0};
    const auto ra = run_sweep(a, spec, tiny_artifacts());
    const auto rb = run_sweep(b, spec, tiny_artifacts());
    REQUIRE(ra.reports.size() == 2);
    REQUIRE(rb.reports.size() == 2);
    for (std::size_t i = 0; i < 2; ++i)
        CHECK(report_to_json(ra.reports[i]).dump() == report_to_json(rb.reports[i]).dump());
    CHECK(ra.best == rb.best);
}

TEST_CASE("sweep: failed points are recorded, not fatal") {
    auto spec = tiny_spec();
    SweepSpec s;
    s.gammas = {0.5};
    s.seeds = {3};
    spec.config.batch_size = 0; // makes every run fail validation
    const auto r = run_sweep(s, spec, tiny_artifacts());
    REQUIRE(r.reports.size() == 1);
    CHECK(r.reports[0].status.rfind("error: ", 0) == 0);
    CHECK_FALSE(r.best);
    CHECK(format_grid(r.reports).find("failed") != std::string::npos);
}

TEST_CASE("sweep parsing defaults to the scenario and validates axes") {
    auto spec = tiny_spec();
    spec.config.eta = 1e-4;
    std::vector<std::string> errs;
    const auto s = sweep_from_json({{"gamma", {0.5, 100.0}}}, spec, errs);
    CHECK(errs.empty());
    CHECK(s.etas == std::vector<double>{1e-4});
    CHECK(s.seeds == std::vector<std::uint64_t>{spec.seed});
    CHECK(sweep_points(s).size() == 2);
    errs.clear();
    sweep_from_json({{"gamma", nlohmann::json::array()}, {"eta", {0.0}}}, spec, errs);
    std::string all;
    for (const auto& e : errs) all += e + "\n";
    CHECK(all.find("sweep.gamma") != std::string::npos);
    CHECK(all.find("sweep.eta") != std::string::npos);
}

TEST_CASE("pick_best follows the checkpoint rule") {
    auto rep = [](const std::string& mode, double acc, bool pass, std::optional<double> probe) {
        MetricsReport r;
        r.mode = mode;
        r.accuracy = acc;
        r.realism_pass = pass;
        r.probe_accuracy = probe;
        return r;
    };
    CHECK(pick_best({rep("GAN", 0.8, false, {}), rep("GAN", 0.75, true, {}), rep("GAN", 0.7, true, {})}, 0.15) == 1u);
    CHECK(pick_best({rep("FAIRGAN", 0.8, true, 0.7), rep("FAIRGAN", 0.7, true, 0.52), rep("FAIRGAN", 0.5, true, 0.5)},
                    0.15) == 1u);
    CHECK_FALSE(pick_best({rep("GAN", 0.8, false, {})}, 0.15));
    CHECK(pick_best({rep("CLASSIFY_ONLY", 0.8, false, {})}, 0.15) == 0u);
}

TEST_CASE("output root precedence") {
    CHECK(output_root("x") == std::filesystem::path("x"));
    setenv("FAIRREPRO_OUT", "/tmp/env-root", 1);
    CHECK(output_root("") == std::filesystem::path("/tmp/env-root"));
    unsetenv("FAIRREPRO_OUT");
    CHECK(output_root("") == std::filesystem::path("runs"));
}
