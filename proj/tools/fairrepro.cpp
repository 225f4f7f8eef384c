// Command-line front end. Every subcommand takes --config, --seed and --out;
// failures print one diagnostic block on stderr and exit nonzero.

#include <CLI11.hpp>

#include <fairrepro/harness.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

namespace fr = fairrepro;
namespace fs = std::filesystem;

namespace {

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool config_required) {
    auto* c = cmd->add_option("--config", o.config, "JSON config file");
    if (config_required) c->required();
    cmd->add_option("--seed", o.seed, "seed overriding the config");
    cmd->add_option("--out", o.out, "output directory (default: $FAIRREPRO_OUT or ./runs)");
}

nlohmann::json config_json(const CommonOptions& o) {
    return o.config.empty() ? nlohmann::json::object() : fr::read_json_file(o.config);
}

void fail_on(const std::vector<std::string>& errs, const std::string& what) {
    if (errs.empty()) return;
    std::string msg = "invalid " + what + ":";
    for (const auto& e : errs) msg += "\n  " + e;
    throw fr::Error(msg);
}

fr::ScenarioSpec load_scenario(const CommonOptions& o, const nlohmann::json& j) {
    std::vector<std::string> errs;
    auto spec = fr::scenario_from_json(j, &errs);
    fail_on(errs, "config " + o.config);
    if (o.seed) spec.seed = *o.seed;
    return spec;
}

fr::Classifier load_classifier(const fs::path& p) { return fr::classifier_from_json(fr::read_json_file(p)); }
fr::VaeModel load_vae(const fs::path& p) { return fr::vae_from_json(fr::read_json_file(p)); }

/// Artifact paths from the config's "artifacts" object, if any.
std::optional<std::pair<std::string, std::string>> artifact_paths(const nlohmann::json& j) {
    if (!j.contains("artifacts")) return std::nullopt;
    const auto& a = j.at("artifacts");
    std::vector<std::string> errs;
    std::string c, v;
    fr::read_field(a, "classifier", c, "artifacts.", errs);
    fr::read_field(a, "vae", v, "artifacts.", errs);
    if (c.empty()) errs.push_back("artifacts.classifier: required");
    if (v.empty()) errs.push_back("artifacts.vae: required");
    fail_on(errs, "artifacts");
    return std::pair{c, v};
}

fr::SourceArtifacts load_artifacts(const std::pair<std::string, std::string>& paths) {
    fr::SourceArtifacts a;
    a.classifier = load_classifier(paths.first);
    a.vae = std::make_shared<const fr::VaeModel>(load_vae(paths.second));
    return a;
}

/// Stored artifacts when the config names them, otherwise trained and
/// cached under the output root keyed by everything that determines them.
fr::SourceArtifacts resolve_artifacts(const fr::ScenarioSpec& spec, const nlohmann::json& j, const fs::path& root) {
    if (auto paths = artifact_paths(j)) return load_artifacts(*paths);
    const nlohmann::json key = {{"source", fr::data_source_to_json(spec.source)},
                                {"classifier", fr::classifier_config_to_json(spec.classifier)},
                                {"vae", fr::vae_config_to_json(spec.vae)},
                                {"split", spec.split},
                                {"seed", spec.seed}};
    const fs::path dir = root / ("artifacts-" + fr::to_hex(fr::config_hash(key)));
    if (fs::exists(dir / "classifier.json") && fs::exists(dir / "vae.json"))
        return load_artifacts({(dir / "classifier.json").string(), (dir / "vae.json").string()});
    std::cerr << "training source artifacts into " << dir.string() << "\n";
    auto a = fr::train_source_artifacts(fr::load_source(spec.source), spec);
    fr::write_json_file(dir / "classifier.json", fr::classifier_to_json(a.classifier));
    fr::write_json_file(dir / "vae.json", fr::vae_to_json(*a.vae));
    return a;
}

void print_report(const fr::MetricsReport& r) {
    std::cout << r.scenario << " " << r.mode << " gamma=" << fr::format_number(r.gamma)
              << " delta=" << fr::format_number(r.delta) << " accuracy=" << fr::format_percent(r.accuracy)
              << " baseline=" << fr::format_percent(r.baseline_accuracy)
              << " realism=" << (r.realism_pass ? "pass" : "fail");
    if (r.probe_accuracy) std::cout << " probe=" << fr::format_percent(*r.probe_accuracy);
    std::cout << "\n";
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_ingest(const CommonOptions& o, bool strict) {
    const auto j = config_json(o);
    std::vector<std::string> errs;
    const auto src = fr::data_source_from_json(j.contains("data") ? j.at("data") : j, "data.", errs);
    fail_on(errs, "config " + o.config);
    fr::LoadReport report;
    fr::Dataset d = [&] {
        if (src.synth) return fr::load_source(src);
        fr::LoadOptions opts;
        opts.strict = strict;
        auto data = fr::load_csv(fs::path(src.csv), fr::load_schema(src.schema), &report, opts);
        const std::string label = src.label.empty() ? data.schema().label_column() : src.label;
        const std::string prot = src.protected_column.empty() ? data.schema().protected_column() : src.protected_column;
        return data.with_roles(label, prot);
    }();
    const fs::path dir = fr::output_root(o.out);
    fs::create_directories(dir);
    std::ofstream csv(dir / (src.name + ".csv"), std::ios::binary);
    fr::write_csv(csv, d);
    fr::write_json_file(dir / (src.name + ".schema.json"), fr::schema_to_json(d.schema()));
    fr::write_json_file(dir / (src.name + ".ingest.json"),
                        {{"accepted", src.synth ? d.size() : report.accepted},
                         {"rejected", report.rejected},
                         {"messages", report.messages}});
    std::cout << src.name << ": " << d.size() << " rows accepted, " << report.rejected << " rejected\n";
    for (const auto& m : report.messages) std::cout << "  " << m << "\n";
    return 0;
}

int cmd_synth(const CommonOptions& o) {
    const auto j = config_json(o);
    std::vector<std::string> errs;
    fr::SynthPairSpec pair;
    fr::read_field(j, "n_rows", pair.n_rows, "", errs);
    fr::read_field(j, "bias", pair.bias, "", errs);
    fr::read_field(j, "seed", pair.seed, "", errs);
    if (!(pair.bias >= 0.0 && pair.bias <= 1.0)) errs.push_back("bias: must lie in [0, 1]");
    if (pair.n_rows == 0) errs.push_back("n_rows: must be positive");
    fail_on(errs, "config " + o.config);
    if (o.seed) pair.seed = *o.seed;
    const auto [source, target] = fr::make_synth_pair(pair);
    const fs::path dir = fr::output_root(o.out);
    fs::create_directories(dir);
    for (const auto& [name, d] : {std::pair{"source", &source}, std::pair{"target", &target}}) {
        std::ofstream csv(dir / (std::string(name) + ".csv"), std::ios::binary);
        fr::write_csv(csv, *d);
        fr::write_json_file(dir / (std::string(name) + ".schema.json"), fr::schema_to_json(d->schema()));
    }
    std::cout << "source: " << source.size() << " rows, " << source.schema().size() << " columns; raw probe "
              << fr::format_percent(fr::probe_fairness(source, pair.seed)) << "\n";
    std::cout << "target: " << target.size() << " rows, " << target.schema().size() << " columns\n";
    return 0;
}

int cmd_train_classifier(const CommonOptions& o) {
    const auto j = config_json(o);
    const auto spec = load_scenario(o, j);
    const auto data = fr::load_source(spec.source);
    const auto parts = fr::split(data, spec.split, fr::Rng::derive(spec.seed, 0x5e1));
    const auto c = fr::train_classifier(parts.train, parts.val, spec.classifier, fr::Rng::derive(spec.seed, 0xc1a));
    const fs::path dir = fr::output_root(o.out);
    fr::write_json_file(dir / "classifier.json", fr::classifier_to_json(c));
    std::cout << spec.source.name << " / " << c.label() << "  " << fr::format_percent(fr::accuracy(c, parts.test)) << "\n";
    return 0;
}

int cmd_train_vae(const CommonOptions& o) {
    const auto j = config_json(o);
    const auto spec = load_scenario(o, j);
    const auto data = fr::load_source(spec.source);
    const auto parts = fr::split(data, spec.split, fr::Rng::derive(spec.seed, 0x5e1));
    const auto r = fr::train_vae(parts.train, parts.val, spec.vae, fr::Rng::derive(spec.seed, 0x7ae));
    const fs::path dir = fr::output_root(o.out);
    fr::write_json_file(dir / "vae.json", fr::vae_to_json(r.model));
    std::ostringstream curve;
    curve << "epoch,train_loss,val_loss\n";
    for (const auto& e : r.curve) curve << e.epoch << ',' << e.train_loss << ',' << e.val_loss << '\n';
    fr::write_text_file(dir / "elbo.csv", curve.str());
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << curve.str();
    double worst = 0.0;
    for (const auto& v : fr::reconstruction_tv(r.model, parts.test)) worst = std::max(worst, v.tv);
    std::cout << "max reconstruction TV on test split: " << fr::format_number(worst) << "\n";
    return 0;
}

int cmd_run_scenario(const CommonOptions& o, bool require_artifacts) {
    const auto j = config_json(o);
    const auto spec = load_scenario(o, j);
    const fs::path root = fr::output_root(o.out);
    if (require_artifacts && !artifact_paths(j))
        throw fr::Error("invalid config " + o.config + ":\n  artifacts: required (classifier and vae checkpoint paths)");
    const auto artifacts = resolve_artifacts(spec, j, root);
    const auto r = fr::run_scenario(spec, artifacts, root);
    print_report(r.report);
    std::cout << "run directory: " << r.run_dir.string() << "\n";
    return 0;
}

int cmd_evaluate(const CommonOptions& o, const std::string& encoder_path) {
    const auto j = config_json(o);
    const auto spec = load_scenario(o, j);
    const fs::path root = fr::output_root(o.out);
    const auto artifacts = resolve_artifacts(spec, j, root);
    const auto target = fr::load_source(spec.target);
    const auto parts = fr::split(target, spec.split, fr::Rng::derive(spec.seed, 0x5e1));
    auto g = fr::build_generator(artifacts.vae, target.schema(), fr::align(artifacts.vae->schema, target.schema()), 0,
                                 spec.config.encoder_hidden, spec.config.hidden_activation);
    const auto enc = fr::mlp_from_json(fr::read_json_file(encoder_path));
    if (!(enc.config.layer_widths == g.encoder.config.layer_widths))
        throw fr::Error("evaluate: encoder checkpoint does not fit this scenario");
    g.encoder = enc;
    const auto e = fr::evaluate_generator(g, artifacts.classifier, parts.test, spec.config, true,
                                          fr::Rng::derive(spec.seed, 0x9be));
    fr::MetricsReport r;
    r.scenario = fr::to_string(spec.kind);
    r.mode = fr::to_string(spec.config.mode);
    r.gamma = spec.config.gamma;
    r.delta = spec.config.effective_delta();
    r.eta = spec.config.eta;
    r.seed = spec.seed;
    r.accuracy = e.accuracy;
    r.set_realism(e.realism);
    r.probe_accuracy = e.probe;
    r.baseline_accuracy = fr::accuracy(
        fr::train_classifier(parts.train, parts.val, spec.classifier, fr::Rng::derive(spec.seed, 0xba5e)), parts.test);
    fr::write_json_file(root / "evaluation.json", fr::report_to_json(r));
    print_report(r);
    return 0;
}

int cmd_sweep(const CommonOptions& o) {
    const auto j = config_json(o);
    const auto spec = load_scenario(o, j);
    std::vector<std::string> errs;
    auto sweep = fr::sweep_from_json(j.contains("sweep") ? j.at("sweep") : nlohmann::json::object(), spec, errs);
    fail_on(errs, "config " + o.config);
    if (o.seed) sweep.seeds = {*o.seed};
    const fs::path root = fr::output_root(o.out);
    const auto artifacts = resolve_artifacts(spec, j, root);
    const auto res = fr::run_sweep(sweep, spec, artifacts, root);
    std::cout << fr::format_grid(res.reports);
    for (const auto& r : res.reports)
        if (r.status != "ok") std::cerr << "failed: gamma=" << r.gamma << " delta=" << r.delta << ": " << r.status << "\n";
    if (res.best) {
        std::cout << "best: ";
        print_report(res.reports[*res.best]);
    } else {
        std::cout << "best: none (no grid point passed the selection rule)\n";
    }
    return 0;
}

int cmd_report(const CommonOptions& o, const std::vector<std::string>& inputs) {
    std::vector<std::string> files = inputs;
    if (!o.config.empty()) {
        const auto j = fr::read_json_file(o.config);
        std::vector<std::string> errs;
        std::vector<std::string> listed;
        fr::read_field(j, "reports", listed, "", errs);
        fail_on(errs, "config " + o.config);
        files.insert(files.end(), listed.begin(), listed.end());
    }
    if (files.empty()) throw fr::Error("report: no report files given");
    std::vector<fr::MetricsReport> reports;
    for (const auto& f : files) {
        const auto j = fr::read_json_file(f);
        if (j.is_array())
            for (const auto& r : j) reports.push_back(fr::report_from_json(r));
        else
            reports.push_back(fr::report_from_json(j));
    }
    fr::emit_report(reports, fr::output_root(o.out));
    std::cout << fr::format_grid(reports);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"fairrepro: reprogramming a frozen FairGAN pipeline across tabular datasets and tasks"};
    app.require_subcommand(1);

    CommonOptions o;
    bool strict = false;
    std::string encoder;
    std::vector<std::string> inputs;

    auto* ingest = app.add_subcommand("ingest", "load and validate a CSV against its schema");
    add_common(ingest, o, true);
    ingest->add_flag("--strict", strict, "fail on the first bad row instead of skipping it");
    auto* synth = app.add_subcommand("synth", "write the synthetic source/target pair");
    add_common(synth, o, false);
    auto* tc = app.add_subcommand("train-classifier", "train the frozen source classifier");
    add_common(tc, o, false);
    auto* tv = app.add_subcommand("train-vae", "train the frozen source VAE");
    add_common(tv, o, false);
    auto* rp = app.add_subcommand("reprogram", "reprogram stored source artifacts for a target");
    add_common(rp, o, true);
    auto* ev = app.add_subcommand("evaluate", "evaluate a stored reprogrammed encoder");
    add_common(ev, o, true);
    ev->add_option("--encoder", encoder, "encoder checkpoint")->required();
    auto* rs = app.add_subcommand("run-scenario", "train what is missing and run one scenario");
    add_common(rs, o, false);
    auto* sw = app.add_subcommand("sweep", "run a hyperparameter grid");
    add_common(sw, o, false);
    auto* rep = app.add_subcommand("report", "merge report files into a grid");
    add_common(rep, o, false);
    rep->add_option("inputs", inputs, "report JSON files");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*ingest) return cmd_ingest(o, strict);
        if (*synth) return cmd_synth(o);
        if (*tc) return cmd_train_classifier(o);
        if (*tv) return cmd_train_vae(o);
        if (*rp) return cmd_run_scenario(o, true);
        if (*ev) return cmd_evaluate(o, encoder);
        if (*rs) return cmd_run_scenario(o, false);
        if (*sw) return cmd_sweep(o);
        if (*rep) return cmd_report(o, inputs);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
