#pragma once

// Experiment orchestration: scenario definitions, source artifacts,
// single runs, sweeps, baselines, and run-directory bookkeeping.

#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "classifier.hpp"
#include "metrics.hpp"
#include "reprogram.hpp"
#include "synth.hpp"
#include "tabular.hpp"
#include "vae.hpp"

namespace fairrepro {

enum class ScenarioKind { sdst, sddt, ddst, dddt };

inline const char* to_string(ScenarioKind k) {
    switch (k) {
        case ScenarioKind::sdst: return "SDST";
        case ScenarioKind::sddt: return "SDDT";
        case ScenarioKind::ddst: return "DDST";
        case ScenarioKind::dddt: return "DDDT";
    }
    return "?";
}

inline ScenarioKind scenario_kind_from_string(const std::string& s) {
    if (s == "SDST") return ScenarioKind::sdst;
    if (s == "SDDT") return ScenarioKind::sddt;
    if (s == "DDST") return ScenarioKind::ddst;
    if (s == "DDDT") return ScenarioKind::dddt;
    throw Error("unknown scenario kind '" + s + "'");
}

// ---------------------------------------------------------------------------
// Data sources

/// A dataset named by id, read from CSV plus schema file or generated.
struct DataSource {
    std::string name;
    std::string csv;    // path, used when `synth` is empty
    std::string schema; // path to a schema JSON
    std::optional<SynthSpec> synth;
    std::string label;            // overrides the schema's label when set
    std::string protected_column; // overrides the schema's protected column when set
};

inline Dataset load_source(const DataSource& src, LoadReport* report = nullptr) {
    Dataset d = [&] {
        if (src.synth) return synth_generate(*src.synth);
        if (src.csv.empty() || src.schema.empty())
            throw Error("data source '" + src.name + "': needs either synth or both csv and schema");
        return load_csv(std::filesystem::path(src.csv), load_schema(src.schema), report);
    }();
    const std::string label = src.label.empty() ? d.schema().label_column() : src.label;
    const std::string prot = src.protected_column.empty() ? d.schema().protected_column() : src.protected_column;
    if (label != d.schema().label_column() || prot != d.schema().protected_column()) d = d.with_roles(label, prot);
    return d;
}

inline nlohmann::json synth_spec_to_json(const SynthSpec& s) {
    return {{"n_rows", s.n_rows}, {"columns", s.columns}, {"bias", s.bias},   {"seed", s.seed},
            {"variant", s.variant}, {"label", s.label},   {"protected", s.protected_column}};
}

/// Reads a field if present, recording a type error against its path.
template <class T>
void read_field(const nlohmann::json& j, const char* key, T& field, const std::string& path,
                std::vector<std::string>& errs) {
    if (!j.contains(key)) return;
    try {
        field = j.at(key).get<T>();
    } catch (const std::exception&) {
        errs.push_back(path + key + ": wrong type");
    }
}

inline SynthSpec synth_spec_from_json(const nlohmann::json& j, const std::string& path, std::vector<std::string>& errs) {
    SynthSpec s;
    read_field(j, "n_rows", s.n_rows, path, errs);
    read_field(j, "columns", s.columns, path, errs);
    read_field(j, "bias", s.bias, path, errs);
    read_field(j, "seed", s.seed, path, errs);
    read_field(j, "variant", s.variant, path, errs);
    read_field(j, "label", s.label, path, errs);
    read_field(j, "protected", s.protected_column, path, errs);
    if (!(s.bias >= 0.0 && s.bias <= 1.0)) errs.push_back(path + "bias: must lie in [0, 1]");
    if (s.n_rows == 0) errs.push_back(path + "n_rows: must be positive");
    if (s.variant != 0 && s.variant != 1) errs.push_back(path + "variant: must be 0 or 1");
    return s;
}

inline nlohmann::json data_source_to_json(const DataSource& d) {
    nlohmann::json j = {{"name", d.name}, {"label", d.label}, {"protected", d.protected_column}};
    if (d.synth) j["synth"] = synth_spec_to_json(*d.synth);
    else {
        j["csv"] = d.csv;
        j["schema"] = d.schema;
    }
    return j;
}

inline DataSource data_source_from_json(const nlohmann::json& j, const std::string& path,
                                        std::vector<std::string>& errs) {
    DataSource d;
    if (!j.is_object()) {
        errs.push_back(path.substr(0, path.size() - 1) + ": must be an object");
        return d;
    }
    read_field(j, "name", d.name, path, errs);
    read_field(j, "csv", d.csv, path, errs);
    read_field(j, "schema", d.schema, path, errs);
    read_field(j, "label", d.label, path, errs);
    read_field(j, "protected", d.protected_column, path, errs);
    if (j.contains("synth")) d.synth = synth_spec_from_json(j.at("synth"), path + "synth.", errs);
    if (d.name.empty()) errs.push_back(path + "name: required");
    if (!d.synth && (d.csv.empty() || d.schema.empty())) errs.push_back(path + "csv/schema: required without synth");
    return d;
}

/// The default synthetic pair: a 15-column source population and a shifted
/// 10-column target population sharing the bias strength.
struct SynthPairSpec {
    std::size_t n_rows = 20000;
    double bias = 0.8;
    std::uint64_t seed = 1;
};

struct SynthPair {
    DataSource source;
    DataSource target;
};

inline SynthPair synth_pair_sources(const SynthPairSpec& spec) {
    SynthSpec s;
    s.n_rows = spec.n_rows;
    s.bias = spec.bias;
    s.seed = spec.seed;
    SynthSpec t = s;
    t.variant = 1;
    t.columns = synth_target_columns();
    t.seed = Rng::derive(spec.seed, 0x7a6);
    return {{"synth-source", "", "", s, "", ""}, {"synth-target", "", "", t, "", ""}};
}

inline std::pair<Dataset, Dataset> make_synth_pair(const SynthPairSpec& spec) {
    const auto p = synth_pair_sources(spec);
    return {load_source(p.source), load_source(p.target)};
}

// ---------------------------------------------------------------------------
// Scenarios

inline constexpr std::array<double, 3> kDefaultSplit = {0.7, 0.15, 0.15};

struct ScenarioSpec {
    ScenarioKind kind = ScenarioKind::sdst;
    DataSource source;
    DataSource target;
    ReprogramConfig config;
    ClassifierConfig classifier; // source classifier and direct target baseline
    VaeConfig vae;
    std::array<double, 3> split = kDefaultSplit;
    std::uint64_t seed = 0;

    /// Scenario-kind invariants, checked on resolved label names.
    std::vector<std::string> validation_errors(const std::string& source_label, const std::string& target_label) const {
        std::vector<std::string> errs;
        const bool same_data = source.name == target.name;
        const bool same_label = source_label == target_label;
        const std::string k = to_string(kind);
        if ((kind == ScenarioKind::sdst || kind == ScenarioKind::sddt) && !same_data)
            errs.push_back("scenario: " + k + " needs the same source and target dataset");
        if ((kind == ScenarioKind::ddst || kind == ScenarioKind::dddt) && same_data)
            errs.push_back("scenario: " + k + " needs different source and target datasets");
        if ((kind == ScenarioKind::sdst || kind == ScenarioKind::ddst) && !same_label)
            errs.push_back("scenario: " + k + " needs the same label name ('" + source_label + "' vs '" + target_label + "')");
        if ((kind == ScenarioKind::sddt || kind == ScenarioKind::dddt) && same_label)
            errs.push_back("scenario: " + k + " needs different labels");
        return errs;
    }
};

inline nlohmann::json classifier_config_to_json(const ClassifierConfig& c) {
    return {{"hidden", c.hidden},         {"activation", to_string(c.hidden_activation)},
            {"include_protected", c.include_protected}, {"max_epochs", c.max_epochs},
            {"patience", c.patience},     {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate}};
}

inline Activation read_activation(const nlohmann::json& j, Activation fallback, const std::string& path,
                                  std::vector<std::string>& errs) {
    if (!j.contains("activation")) return fallback;
    try {
        return activation_from_string(j.at("activation").get<std::string>());
    } catch (const std::exception&) {
        errs.push_back(path + "activation: unknown activation");
        return fallback;
    }
}

inline ClassifierConfig classifier_config_from_json(const nlohmann::json& j, const std::string& path,
                                                    std::vector<std::string>& errs) {
    ClassifierConfig c;
    read_field(j, "hidden", c.hidden, path, errs);
    c.hidden_activation = read_activation(j, c.hidden_activation, path, errs);
    read_field(j, "include_protected", c.include_protected, path, errs);
    read_field(j, "max_epochs", c.max_epochs, path, errs);
    read_field(j, "patience", c.patience, path, errs);
    read_field(j, "batch_size", c.batch_size, path, errs);
    read_field(j, "learning_rate", c.learning_rate, path, errs);
    if (c.max_epochs == 0) errs.push_back(path + "max_epochs: must be positive");
    if (c.patience == 0) errs.push_back(path + "patience: must be positive");
    if (c.batch_size == 0) errs.push_back(path + "batch_size: must be positive");
    if (!std::isfinite(c.learning_rate) || c.learning_rate <= 0.0) errs.push_back(path + "learning_rate: must be > 0");
    for (auto h : c.hidden)
        if (h == 0) errs.push_back(path + "hidden: widths must be positive");
    return c;
}

inline nlohmann::json vae_config_to_json(const VaeConfig& c) {
    return {{"latent_dim", c.latent_dim}, {"hidden", c.hidden},         {"activation", to_string(c.hidden_activation)},
            {"epochs", c.epochs},         {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
            {"numeric_weight", c.numeric_weight}};
}

inline VaeConfig vae_config_from_json(const nlohmann::json& j, const std::string& path, std::vector<std::string>& errs) {
    VaeConfig c;
    read_field(j, "latent_dim", c.latent_dim, path, errs);
    read_field(j, "hidden", c.hidden, path, errs);
    c.hidden_activation = read_activation(j, c.hidden_activation, path, errs);
    read_field(j, "epochs", c.epochs, path, errs);
    read_field(j, "batch_size", c.batch_size, path, errs);
    read_field(j, "learning_rate", c.learning_rate, path, errs);
    read_field(j, "numeric_weight", c.numeric_weight, path, errs);
    if (c.latent_dim == 0) errs.push_back(path + "latent_dim: must be positive");
    if (c.epochs == 0) errs.push_back(path + "epochs: must be positive");
    if (c.batch_size == 0) errs.push_back(path + "batch_size: must be positive");
    if (!std::isfinite(c.learning_rate) || c.learning_rate <= 0.0) errs.push_back(path + "learning_rate: must be > 0");
    if (!std::isfinite(c.numeric_weight) || c.numeric_weight <= 0.0) errs.push_back(path + "numeric_weight: must be > 0");
    for (auto h : c.hidden)
        if (h == 0) errs.push_back(path + "hidden: widths must be positive");
    return c;
}

inline nlohmann::json scenario_to_json(const ScenarioSpec& s) {
    return {{"scenario", to_string(s.kind)},
            {"source", data_source_to_json(s.source)},
            {"target", data_source_to_json(s.target)},
            {"reprogram", reprogram_config_to_json(s.config)},
            {"classifier", classifier_config_to_json(s.classifier)},
            {"vae", vae_config_to_json(s.vae)},
            {"split", s.split},
            {"seed", s.seed}};
}

/// Parses a scenario, collecting every offending field before failing.
/// Missing source/target default to the synthetic pair.
inline ScenarioSpec scenario_from_json(const nlohmann::json& j, std::vector<std::string>* errors = nullptr) {
    std::vector<std::string> local;
    auto& errs = errors ? *errors : local;
    ScenarioSpec s;
    if (!j.is_object()) {
        errs.push_back("config: must be a JSON object");
    } else {
        if (j.contains("scenario")) {
            try {
                s.kind = scenario_kind_from_string(j.at("scenario").get<std::string>());
            } catch (const std::exception&) {
                errs.push_back("scenario: must be one of SDST, SDDT, DDST, DDDT");
            }
        }
        read_field(j, "seed", s.seed, "", errs);
        read_field(j, "split", s.split, "", errs);
        const auto pair = synth_pair_sources({});
        s.source = j.contains("source") ? data_source_from_json(j.at("source"), "source.", errs) : pair.source;
        const bool dd = s.kind == ScenarioKind::ddst || s.kind == ScenarioKind::dddt;
        s.target = j.contains("target") ? data_source_from_json(j.at("target"), "target.", errs)
                                        : (dd ? pair.target : s.source);
        if (!j.contains("target") && (s.kind == ScenarioKind::sddt || s.kind == ScenarioKind::dddt))
            s.target.label = "cohort";
        if (j.contains("reprogram")) {
            std::vector<std::string> rerrs;
            s.config = reprogram_config_from_json(j.at("reprogram"), &rerrs);
            for (auto& e : rerrs) errs.push_back("reprogram." + e);
        }
        if (j.contains("classifier")) s.classifier = classifier_config_from_json(j.at("classifier"), "classifier.", errs);
        if (j.contains("vae")) s.vae = vae_config_from_json(j.at("vae"), "vae.", errs);
        double total = 0.0;
        for (double f : s.split) {
            if (!(f > 0.0)) errs.push_back("split: fractions must be positive");
            total += f;
        }
        if (std::abs(total - 1.0) > 1e-9) errs.push_back("split: fractions must sum to 1");
    }
    if (!errors && !errs.empty()) {
        std::string msg = "invalid config:";
        for (const auto& e : errs) msg += "\n  " + e;
        throw Error(msg);
    }
    return s;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("write failed: " + path.string());
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Source artifacts

/// The frozen source components every scenario reuses.
struct SourceArtifacts {
    Classifier classifier;
    std::shared_ptr<const VaeModel> vae;
};

/// Trains both frozen source components on the source training split.
inline SourceArtifacts train_source_artifacts(const Dataset& source, const ScenarioSpec& spec) {
    const auto parts = split(source, spec.split, Rng::derive(spec.seed, 0x5e1));
    SourceArtifacts a;
    a.classifier = train_classifier(parts.train, parts.val, spec.classifier, Rng::derive(spec.seed, 0xc1a));
    a.vae = std::make_shared<const VaeModel>(train_vae(parts.train, parts.val, spec.vae, Rng::derive(spec.seed, 0x7ae)).model);
    return a;
}

inline void check_artifacts(const SourceArtifacts& a, const Schema& source_schema) {
    if (!a.vae) throw Error("artifacts: missing VAE");
    if (!(a.classifier.schema == source_schema)) throw Error("artifacts: classifier schema does not match the source dataset");
    if (!(a.vae->schema == source_schema)) throw Error("artifacts: VAE schema does not match the source dataset");
    if (!a.classifier.frozen || !a.vae->frozen) throw Error("artifacts: components must be frozen");
}

// ---------------------------------------------------------------------------
// Runs

inline std::uint64_t config_hash(const nlohmann::json& j) {
    Fnv1a h;
    h.update(std::string_view(j.dump()));
    return h.digest();
}

/// Directory name for a run: scenario kind plus a hash of everything that
/// determines its output.
inline std::string run_directory_name(const ScenarioSpec& spec, const SourceArtifacts& a) {
    nlohmann::json key = scenario_to_json(spec);
    key["artifacts"] = {{"classifier", to_hex(a.classifier.net.params.hash())},
                        {"vae_encoder", to_hex(a.vae->encoder.params.hash())},
                        {"vae_decoder", to_hex(a.vae->decoder.params.hash())}};
    return std::string(to_string(spec.kind)) + "-" + to_hex(config_hash(key));
}

struct ScenarioResult {
    MetricsReport report;            // on the target test split
    MetricsReport validation_report; // the checkpoint-selection view
    std::filesystem::path run_dir;   // empty when nothing was written
};

/// align -> build_generator -> train_reprogram -> test-split metrics. The
/// baseline is a classifier trained directly on the target task.
inline ScenarioResult run_scenario(const ScenarioSpec& spec, const SourceArtifacts& artifacts,
                                   const std::optional<std::filesystem::path>& out_root = std::nullopt) {
    const auto t0 = std::chrono::steady_clock::now();
    const Dataset target = load_source(spec.target);
    auto errs = spec.validation_errors(artifacts.classifier.label(), target.schema().label_column());
    for (auto& e : spec.config.validation_errors()) errs.push_back("reprogram." + e);
    if (!errs.empty()) {
        std::string msg = "invalid scenario:";
        for (const auto& e : errs) msg += "\n  " + e;
        throw Error(msg);
    }
    if (!artifacts.vae) throw Error("run_scenario: missing VAE");
    if (!(artifacts.classifier.schema == artifacts.vae->schema))
        throw Error("run_scenario: classifier and VAE were trained on different schemas");
    if (!artifacts.classifier.frozen || !artifacts.vae->frozen) throw Error("run_scenario: artifacts must be frozen");

    ReprogramConfig cfg = spec.config;
    cfg.seed = spec.seed;
    const auto parts = split(target, spec.split, Rng::derive(spec.seed, 0x5e1));
    const auto baseline = train_classifier(parts.train, parts.val, spec.classifier, Rng::derive(spec.seed, 0xba5e));

    const auto alignment = align(artifacts.vae->schema, target.schema());
    auto g = build_generator(artifacts.vae, target.schema(), alignment, Rng::derive(spec.seed, 0x6e4), cfg.encoder_hidden,
                             cfg.hidden_activation);
    auto trained = train_reprogram(std::move(g), artifacts.classifier, parts.train, parts.val, cfg);

    ScenarioResult res;
    res.validation_report = trained.report;
    res.validation_report.scenario = to_string(spec.kind);
    MetricsReport& rep = res.report;
    rep = trained.report;
    rep.scenario = to_string(spec.kind);
    const auto eval = evaluate_generator(trained.generator, artifacts.classifier, parts.test, cfg, true,
                                         Rng::derive(spec.seed, 0x9be));
    rep.accuracy = eval.accuracy;
    rep.set_realism(eval.realism);
    rep.probe_accuracy = eval.probe;
    rep.discriminator_accuracy.reset();
    if (cfg.d2_active())
        rep.discriminator_accuracy =
            discriminator_accuracy(trained.generator, trained.discriminators.d2, parts.test, cfg.straight_through);
    rep.baseline_accuracy = accuracy(baseline, parts.test);
    rep.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.validation_report.baseline_accuracy = rep.baseline_accuracy;

    if (out_root) {
        res.run_dir = *out_root / run_directory_name(spec, artifacts);
        std::filesystem::create_directories(res.run_dir);
        write_json_file(res.run_dir / "config.json", scenario_to_json(spec));
        write_json_file(res.run_dir / "report.json", report_to_json(rep));
        write_json_file(res.run_dir / "validation_report.json", report_to_json(res.validation_report));
        write_json_file(res.run_dir / "timing.json", timing_to_json(rep));
        write_json_file(res.run_dir / "encoder.json", mlp_to_json(trained.generator.encoder));
        write_json_file(res.run_dir / "baseline.json", classifier_to_json(baseline));
        write_json_file(res.run_dir / "discriminators.json",
                        {{"d1", mlp_to_json(trained.discriminators.d1)}, {"d2", mlp_to_json(trained.discriminators.d2)}});
        std::ostringstream hist;
        write_histogram_csv(hist, parts.test, generate_cleaned(trained.generator, artifacts.classifier, parts.test),
                            alignment.shared);
        write_text_file(res.run_dir / "histograms.csv", hist.str());
        emit_report({rep}, res.run_dir, ReportFormat::grid);
    }
    return res;
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepSpec {
    std::vector<double> gammas = {0.5};
    std::vector<double> deltas = {0.0};
    std::vector<double> etas = {1e-3};
    std::vector<std::uint64_t> seeds = {0};

    std::vector<std::string> validation_errors() const {
        std::vector<std::string> errs;
        auto check = [&](const char* name, const std::vector<double>& v, bool zero_ok) {
            if (v.empty()) errs.push_back(std::string("sweep.") + name + ": must not be empty");
            for (double x : v)
                if (!std::isfinite(x) || x < 0.0 || (!zero_ok && x == 0.0))
                    errs.push_back(std::string("sweep.") + name + ": values must be finite and " +
                                   (zero_ok ? ">= 0" : "> 0"));
        };
        check("gamma", gammas, true);
        check("delta", deltas, true);
        check("eta", etas, false);
        if (seeds.empty()) errs.push_back("sweep.seeds: must not be empty");
        return errs;
    }
};

/// Axes missing from the JSON default to the base scenario's values.
inline SweepSpec sweep_from_json(const nlohmann::json& j, const ScenarioSpec& base, std::vector<std::string>& errs) {
    SweepSpec s;
    s.gammas = {base.config.gamma};
    s.deltas = {base.config.delta};
    s.etas = {base.config.eta};
    s.seeds = {base.seed};
    read_field(j, "gamma", s.gammas, "sweep.", errs);
    read_field(j, "delta", s.deltas, "sweep.", errs);
    read_field(j, "eta", s.etas, "sweep.", errs);
    read_field(j, "seeds", s.seeds, "sweep.", errs);
    for (auto& e : s.validation_errors()) errs.push_back(std::move(e));
    return s;
}

struct SweepPoint {
    double gamma = 0.0;
    double delta = 0.0;
    double eta = 0.0;
    std::uint64_t seed = 0;
    auto key() const { return std::tuple(gamma, delta, eta, seed); }
};

struct SweepResult {
    std::vector<SweepPoint> points;              // sorted, one per run
    std::vector<MetricsReport> reports;          // test-split reports, same order
    std::vector<MetricsReport> validation;       // validation reports, same order
    std::optional<std::size_t> best;             // index into reports
};

/// Grid points in canonical order, so results do not depend on how the
/// grid was written.
inline std::vector<SweepPoint> sweep_points(const SweepSpec& s) {
    std::vector<SweepPoint> pts;
    for (double g : s.gammas)
        for (double d : s.deltas)
            for (double e : s.etas)
                for (auto seed : s.seeds) pts.push_back({g, d, e, seed});
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.key() < b.key(); });
    pts.erase(std::unique(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.key() == b.key(); }),
              pts.end());
    return pts;
}

/// Best run among successful ones, judged on validation reports with the
/// checkpoint rule: realism must pass (except CLASSIFY_ONLY) and accuracy
/// must be within the tolerance of the best; FAIRGAN then prefers the probe
/// closest to 0.5, the other modes the highest accuracy.
inline std::optional<std::size_t> pick_best(const std::vector<MetricsReport>& val, double accuracy_tolerance) {
    double best_acc = -1.0;
    for (const auto& r : val)
        if (r.status == "ok") best_acc = std::max(best_acc, r.accuracy);
    std::optional<std::size_t> pick;
    for (std::size_t i = 0; i < val.size(); ++i) {
        const auto& r = val[i];
        if (r.status != "ok" || r.accuracy < best_acc - accuracy_tolerance) continue;
        if (r.mode != "CLASSIFY_ONLY" && !r.realism_pass) continue;
        if (!pick) {
            pick = i;
            continue;
        }
        const auto& b = val[*pick];
        if (r.mode == "FAIRGAN" && r.probe_accuracy && b.probe_accuracy) {
            const double dr = std::abs(*r.probe_accuracy - 0.5), db = std::abs(*b.probe_accuracy - 0.5);
            if (dr < db || (dr == db && r.accuracy > b.accuracy)) pick = i;
        } else if (r.accuracy > b.accuracy) {
            pick = i;
        }
    }
    return pick;
}

/// One run per grid point; a failing point is recorded with its diagnostic
/// and does not stop the sweep.
inline SweepResult run_sweep(const SweepSpec& sweep, const ScenarioSpec& base, const SourceArtifacts& artifacts,
                             const std::optional<std::filesystem::path>& out_root = std::nullopt) {
    const auto errs = sweep.validation_errors();
    if (!errs.empty()) {
        std::string msg = "invalid sweep:";
        for (const auto& e : errs) msg += "\n  " + e;
        throw Error(msg);
    }
    SweepResult res;
    res.points = sweep_points(sweep);
    for (const auto& p : res.points) {
        ScenarioSpec spec = base;
        spec.config.gamma = p.gamma;
        spec.config.delta = p.delta;
        spec.config.eta = p.eta;
        spec.seed = p.seed;
        try {
            auto r = run_scenario(spec, artifacts, out_root);
            res.reports.push_back(std::move(r.report));
            res.validation.push_back(std::move(r.validation_report));
        } catch (const std::exception& e) {
            MetricsReport failed;
            failed.scenario = to_string(spec.kind);
            failed.mode = to_string(spec.config.mode);
            failed.gamma = p.gamma;
            failed.delta = spec.config.effective_delta();
            failed.eta = p.eta;
            failed.seed = p.seed;
            failed.status = std::string("error: ") + e.what();
            res.reports.push_back(failed);
            res.validation.push_back(failed);
        }
    }
    res.best = pick_best(res.validation, base.config.accuracy_tolerance);
    if (out_root) {
        emit_report(res.reports, *out_root);
        nlohmann::json summary = {{"runs", res.reports.size()}};
        summary["best"] = res.best ? nlohmann::json(report_to_json(res.reports[*res.best])) : nlohmann::json(nullptr);
        write_json_file(*out_root / "sweep_summary.json", summary);
    }
    return res;
}

// ---------------------------------------------------------------------------
// Baselines

struct BaselineTask {
    std::string name; // e.g. "COMPAS / recid"
    DataSource data;
};

struct BaselineRow {
    std::string name;
    std::vector<double> accuracies; // one per seed
    double mean = 0.0;
    double majority_share = 0.0;    // accuracy of always predicting the majority class
    std::vector<Classifier> classifiers;
};

/// Directly trained classifiers, one per task and seed, with test-split
/// accuracies.
inline std::vector<BaselineRow> make_baselines(const std::vector<BaselineTask>& tasks,
                                               const std::vector<std::uint64_t>& seeds,
                                               const ClassifierConfig& cfg = {},
                                               const std::array<double, 3>& fractions = kDefaultSplit) {
    if (seeds.empty()) throw Error("make_baselines: no seeds");
    std::vector<BaselineRow> rows;
    for (const auto& task : tasks) {
        const Dataset data = load_source(task.data);
        BaselineRow row;
        row.name = task.name;
        for (auto seed : seeds) {
            const auto parts = split(data, fractions, Rng::derive(seed, 0x5e1));
            auto c = train_classifier(parts.train, parts.val, cfg, Rng::derive(seed, 0xba5e));
            row.accuracies.push_back(accuracy(c, parts.test));
            row.classifiers.push_back(std::move(c));
        }
        for (double a : row.accuracies) row.mean += a;
        row.mean /= static_cast<double>(row.accuracies.size());
        std::size_t ones = 0;
        for (int y : data.labels()) ones += static_cast<std::size_t>(y);
        const double p1 = static_cast<double>(ones) / static_cast<double>(data.size());
        row.majority_share = std::max(p1, 1.0 - p1);
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::string format_baselines(const std::vector<BaselineRow>& rows) {
    std::size_t w = 4;
    for (const auto& r : rows) w = std::max(w, r.name.size());
    std::ostringstream out;
    out << "task" << std::string(w - 4 + 2, ' ') << "accuracy  majority\n";
    for (const auto& r : rows)
        out << r.name << std::string(w - r.name.size() + 2, ' ') << format_percent(r.mean) << "      "
            << format_percent(r.majority_share) << '\n';
    return out.str();
}

/// Global output root: the OUT flag wins, then FAIRREPRO_OUT, then ./runs.
inline std::filesystem::path output_root(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("FAIRREPRO_OUT"); env && *env) return env;
    return "runs";
}

} // namespace fairrepro
