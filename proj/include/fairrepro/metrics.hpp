#pragma once

// Evaluation: per-column histograms and total-variation distance (the
// realism check), fresh-probe fairness accuracy, and report assembly.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "classifier.hpp"
#include "tabular.hpp"

namespace fairrepro {

inline constexpr std::size_t kDefaultNumericBins = 20;
inline constexpr double kDefaultTvThreshold = 0.15;

struct ColumnHistogram {
    std::string column;
    std::vector<double> edges; // numeric: bins + 1 edges over [0, 1] (normalized scale); categorical: empty
    std::vector<double> frequencies;

    bool same_binning(const ColumnHistogram& o) const {
        return frequencies.size() == o.frequencies.size() && edges == o.edges;
    }
};

/// Histogram of one column. Numeric values are binned on the normalized
/// [0, 1] scale so that datasets with different raw ranges stay comparable;
/// the last bin is closed on the right.
inline ColumnHistogram histogram(const Dataset& data, std::string_view column, std::size_t bins = kDefaultNumericBins) {
    if (data.size() == 0) throw Error("histogram: empty data");
    const auto idx = data.schema().index_of(column);
    const auto& spec = data.schema().columns()[idx];
    ColumnHistogram h;
    h.column = spec.name;
    if (spec.is_categorical()) {
        h.frequencies.assign(spec.cardinality(), 0.0);
        for (const auto& row : data.rows()) h.frequencies[static_cast<std::size_t>(row[idx])] += 1.0;
    } else {
        if (bins == 0) throw Error("histogram: bin count must be positive");
        h.frequencies.assign(bins, 0.0);
        for (std::size_t b = 0; b <= bins; ++b) h.edges.push_back(static_cast<double>(b) / static_cast<double>(bins));
        for (const auto& row : data.rows()) {
            const double t = std::clamp(normalize(spec, row[idx]), 0.0, 1.0);
            auto b = static_cast<std::size_t>(t * static_cast<double>(bins));
            h.frequencies[std::min(b, bins - 1)] += 1.0;
        }
    }
    const double n = static_cast<double>(data.size());
    for (auto& f : h.frequencies) f /= n;
    return h;
}

inline double tv_distance(const ColumnHistogram& a, const ColumnHistogram& b) {
    if (!a.same_binning(b)) throw Error("tv_distance: histograms use different binning");
    double s = 0.0;
    for (std::size_t i = 0; i < a.frequencies.size(); ++i) s += std::abs(a.frequencies[i] - b.frequencies[i]);
    return 0.5 * s;
}

struct ColumnVerdict {
    std::string column;
    double tv = 0.0;
    bool pass = true;
};

struct RealismResult {
    std::vector<ColumnVerdict> columns;
    bool pass = true;
    double threshold = kDefaultTvThreshold;

    double max_tv() const {
        double m = 0.0;
        for (const auto& c : columns) m = std::max(m, c.tv);
        return m;
    }
};

/// Compares the named columns of two datasets; passes iff every TV is at
/// most the threshold.
inline RealismResult realism_check(const Dataset& real, const Dataset& generated, const std::vector<std::string>& columns,
                                   double threshold = kDefaultTvThreshold, std::size_t bins = kDefaultNumericBins) {
    if (columns.empty()) throw Error("realism_check: no shared columns to compare");
    RealismResult r;
    r.threshold = threshold;
    for (const auto& name : columns) {
        const double tv = tv_distance(histogram(real, name, bins), histogram(generated, name, bins));
        const bool ok = tv <= threshold;
        r.columns.push_back({name, tv, ok});
        r.pass = r.pass && ok;
    }
    return r;
}

/// Realism over the feature columns common to both schemas (per the alignment).
inline RealismResult realism_check(const Dataset& real, const Dataset& generated, const AlignmentMap& alignment,
                                   double threshold = kDefaultTvThreshold, std::size_t bins = kDefaultNumericBins) {
    std::vector<std::string> cols;
    for (const auto& s : shared_feature_slices(generated.schema(), real.schema(), alignment)) cols.push_back(s.name);
    return realism_check(real, generated, cols, threshold, bins);
}

// ---------------------------------------------------------------------------
// Fairness probe

struct ProbeOptions {
    ClassifierConfig classifier;     // defaults equal the baseline classifier's
    double train_fraction = 0.7;     // remainder is split evenly into early-stopping and held-out parts
};

/// Trains a fresh classifier to predict `protected_labels` from `features`
/// and returns its held-out accuracy. 0.5 means the attribute is not
/// recoverable from the features.
inline double probe_fairness(const Matrix& features, const std::vector<int>& protected_labels, std::uint64_t seed,
                             const ProbeOptions& options = {}) {
    if (static_cast<std::size_t>(features.rows()) != protected_labels.size())
        throw Error("probe_fairness: feature and label counts differ");
    bool seen[2] = {false, false};
    for (int s : protected_labels) {
        if (s != 0 && s != 1) throw Error("probe_fairness: protected labels must be binary");
        seen[s] = true;
    }
    if (!seen[0] || !seen[1]) throw Error("probe_fairness: protected attribute has a single class");

    const std::size_t n = protected_labels.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(Rng::derive(seed, 0x70));
    rng.shuffle(order);
    const auto n_train = static_cast<std::size_t>(static_cast<double>(n) * options.train_fraction);
    const std::size_t n_stop = (n - n_train) / 2;
    if (n_train == 0 || n_stop == 0 || n_train + n_stop >= n) throw Error("probe_fairness: too few rows");

    auto take = [&](std::size_t from, std::size_t to, Matrix& x, std::vector<int>& y) {
        x.resize(static_cast<Eigen::Index>(to - from), features.cols());
        y.resize(to - from);
        for (std::size_t i = from; i < to; ++i) {
            x.row(static_cast<Eigen::Index>(i - from)) = features.row(static_cast<Eigen::Index>(order[i]));
            y[i - from] = protected_labels[order[i]];
        }
    };
    Matrix xt, xs, xh;
    std::vector<int> yt, ys, yh;
    take(0, n_train, xt, yt);
    take(n_train, n_train + n_stop, xs, ys);
    take(n_train + n_stop, n, xh, yh);
    const auto fit = fit_binary(xt, yt, xs, ys, options.classifier, Rng::derive(seed, 0x71));
    return accuracy_from_probs(predict(fit.net, xh), yh);
}

/// Probe on the raw feature encoding of a dataset (no generator involved).
inline double probe_fairness(const Dataset& data, std::uint64_t seed, const ProbeOptions& options = {}) {
    const EncodedLayout layout(data.schema());
    return probe_fairness(encode(data).features(layout), data.protected_attrs(), seed, options);
}

/// Plug-in mutual information (nats) between two discrete columns.
inline double mutual_information(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size() || a.empty()) throw Error("mutual_information: size mismatch");
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> pa, pb;
    const double n = static_cast<double>(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        joint[{a[i], b[i]}] += 1.0 / n;
        pa[a[i]] += 1.0 / n;
        pb[b[i]] += 1.0 / n;
    }
    double mi = 0.0;
    for (const auto& [k, p] : joint) mi += p * std::log(p / (pa[k.first] * pb[k.second]));
    return mi;
}

// ---------------------------------------------------------------------------
// Reports

inline constexpr const char* kReportFormat = "fairrepro.report.v1";

struct MetricsReport {
    std::string scenario; // SDST, SDDT, DDST, DDDT, or free-form
    std::string mode;     // CLASSIFY_ONLY, GAN, FAIRGAN
    double gamma = 0.0;
    double delta = 0.0;
    double eta = 0.0;
    std::uint64_t seed = 0;
    double accuracy = 0.0;
    double baseline_accuracy = 0.0;
    std::vector<ColumnVerdict> columns;
    double tv_threshold = kDefaultTvThreshold;
    bool realism_pass = false;
    std::optional<double> probe_accuracy;          // fresh probe, the fairness metric
    std::optional<double> discriminator_accuracy;  // D2's own validation accuracy
    std::size_t epochs_run = 0;
    std::size_t selected_epoch = 0;
    std::string status = "ok"; // or an error diagnostic for failed runs
    double wall_clock_seconds = 0.0; // not serialized into the report JSON

    void set_realism(const RealismResult& r) {
        columns = r.columns;
        tv_threshold = r.threshold;
        realism_pass = r.pass;
    }
};

/// Report JSON. Keys are sorted and doubles printed round-trip, so equal
/// reports serialize to equal bytes. Wall-clock time is deliberately kept
/// out; see timing_to_json.
inline nlohmann::json report_to_json(const MetricsReport& r) {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : r.columns) cols.push_back({{"column", c.column}, {"tv", c.tv}, {"pass", c.pass}});
    nlohmann::json j = {{"format", kReportFormat},
                        {"scenario", r.scenario},
                        {"mode", r.mode},
                        {"gamma", r.gamma},
                        {"delta", r.delta},
                        {"eta", r.eta},
                        {"seed", r.seed},
                        {"accuracy", r.accuracy},
                        {"baseline_accuracy", r.baseline_accuracy},
                        {"columns", cols},
                        {"tv_threshold", r.tv_threshold},
                        {"realism_pass", r.realism_pass},
                        {"probe_accuracy", r.probe_accuracy ? nlohmann::json(*r.probe_accuracy) : nlohmann::json()},
                        {"discriminator_accuracy",
                         r.discriminator_accuracy ? nlohmann::json(*r.discriminator_accuracy) : nlohmann::json()},
                        {"epochs_run", r.epochs_run},
                        {"selected_epoch", r.selected_epoch},
                        {"status", r.status}};
    return j;
}

inline MetricsReport report_from_json(const nlohmann::json& j) {
    if (j.value("format", std::string{}) != kReportFormat)
        throw Error(std::string("report: expected format '") + kReportFormat + "'");
    MetricsReport r;
    r.scenario = j.at("scenario").get<std::string>();
    r.mode = j.at("mode").get<std::string>();
    r.gamma = j.at("gamma").get<double>();
    r.delta = j.at("delta").get<double>();
    r.eta = j.at("eta").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.accuracy = j.at("accuracy").get<double>();
    r.baseline_accuracy = j.at("baseline_accuracy").get<double>();
    for (const auto& c : j.at("columns"))
        r.columns.push_back({c.at("column").get<std::string>(), c.at("tv").get<double>(), c.at("pass").get<bool>()});
    r.tv_threshold = j.at("tv_threshold").get<double>();
    r.realism_pass = j.at("realism_pass").get<bool>();
    if (!j.at("probe_accuracy").is_null()) r.probe_accuracy = j.at("probe_accuracy").get<double>();
    if (!j.at("discriminator_accuracy").is_null()) r.discriminator_accuracy = j.at("discriminator_accuracy").get<double>();
    r.epochs_run = j.at("epochs_run").get<std::size_t>();
    r.selected_epoch = j.at("selected_epoch").get<std::size_t>();
    r.status = j.at("status").get<std::string>();
    return r;
}

inline nlohmann::json timing_to_json(const MetricsReport& r) {
    return {{"scenario", r.scenario}, {"mode", r.mode}, {"gamma", r.gamma}, {"delta", r.delta},
            {"wall_clock_seconds", r.wall_clock_seconds}};
}

inline std::string format_percent(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
    return buf;
}

inline std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

/// Plaintext grid: one row per (mode, gamma, delta), one column per
/// scenario, each cell "accuracy mark" where the mark is a check when the
/// realism check passed (no mark in CLASSIFY_ONLY mode, which has no
/// realism constraint). A final row lists baselines per scenario.
inline std::string format_grid(const std::vector<MetricsReport>& reports) {
    if (reports.empty()) throw Error("emit_report: no reports");
    std::vector<std::string> scenarios;
    for (const std::string s : {"SDST", "SDDT", "DDST", "DDDT"})
        for (const auto& r : reports)
            if (r.scenario == s) {
                scenarios.push_back(s);
                break;
            }
    for (const auto& r : reports)
        if (std::find(scenarios.begin(), scenarios.end(), r.scenario) == scenarios.end()) scenarios.push_back(r.scenario);

    using RowKey = std::tuple<std::string, double, double>;
    std::vector<RowKey> row_keys;
    for (const auto& r : reports) {
        RowKey k{r.mode, r.gamma, r.delta};
        if (std::find(row_keys.begin(), row_keys.end(), k) == row_keys.end()) row_keys.push_back(k);
    }

    auto cell = [](const MetricsReport& r) {
        if (r.status != "ok") return std::string("failed");
        std::string s = format_percent(r.accuracy);
        if (r.mode != "CLASSIFY_ONLY") s += r.realism_pass ? " ✓" : " ×";
        if (r.probe_accuracy && r.mode == "FAIRGAN") s += " p=" + format_percent(*r.probe_accuracy);
        return s;
    };
    std::vector<std::vector<std::string>> table;
    table.push_back({"mode", "gamma", "delta"});
    for (const auto& s : scenarios) table.back().push_back(s);
    for (const auto& k : row_keys) {
        std::vector<std::string> line = {std::get<0>(k), format_number(std::get<1>(k)), format_number(std::get<2>(k))};
        for (const auto& s : scenarios) {
            std::string text = "";
            for (const auto& r : reports)
                if (r.scenario == s && RowKey{r.mode, r.gamma, r.delta} == k) {
                    text = cell(r);
                    break;
                }
            line.push_back(text);
        }
        table.push_back(std::move(line));
    }
    std::vector<std::string> base = {"baseline", "", ""};
    for (const auto& s : scenarios) {
        std::string text;
        for (const auto& r : reports)
            if (r.scenario == s && r.status == "ok") {
                text = format_percent(r.baseline_accuracy);
                break;
            }
        base.push_back(text);
    }
    table.push_back(std::move(base));

    // column widths in code points (the marks are multi-byte)
    auto display_width = [](const std::string& s) {
        std::size_t w = 0;
        for (unsigned char ch : s) w += (ch & 0xC0) != 0x80;
        return w;
    };
    std::vector<std::size_t> widths(table.front().size(), 0);
    for (const auto& line : table)
        for (std::size_t c = 0; c < line.size(); ++c) widths[c] = std::max(widths[c], display_width(line[c]));
    std::ostringstream out;
    for (const auto& line : table) {
        for (std::size_t c = 0; c < line.size(); ++c) {
            out << line[c];
            if (c + 1 < line.size()) out << std::string(widths[c] - display_width(line[c]) + 2, ' ');
        }
        out << '\n';
    }
    return out.str();
}

enum class ReportFormat { json, grid, both };

/// Writes reports.json and/or grid.txt into `dir`.
inline void emit_report(const std::vector<MetricsReport>& reports, const std::filesystem::path& dir,
                        ReportFormat format = ReportFormat::both) {
    if (reports.empty()) throw Error("emit_report: no reports");
    std::filesystem::create_directories(dir);
    if (format != ReportFormat::grid) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& r : reports) arr.push_back(report_to_json(r));
        std::ofstream out(dir / "reports.json", std::ios::binary);
        if (!out) throw Error("emit_report: cannot write " + (dir / "reports.json").string());
        out << arr.dump(2) << '\n';
    }
    if (format != ReportFormat::json) {
        std::ofstream out(dir / "grid.txt", std::ios::binary);
        if (!out) throw Error("emit_report: cannot write " + (dir / "grid.txt").string());
        out << format_grid(reports);
    }
}

/// CSV dump of per-column histograms (real vs generated) for external plotting.
inline void write_histogram_csv(std::ostream& out, const Dataset& real, const Dataset& generated,
                                const std::vector<std::string>& columns, std::size_t bins = kDefaultNumericBins) {
    out << "column,bin,real,generated\n";
    for (const auto& name : columns) {
        const auto a = histogram(real, name, bins);
        const auto b = histogram(generated, name, bins);
        for (std::size_t i = 0; i < a.frequencies.size(); ++i)
            out << name << ',' << i << ',' << a.frequencies[i] << ',' << b.frequencies[i] << '\n';
    }
}

} // namespace fairrepro
