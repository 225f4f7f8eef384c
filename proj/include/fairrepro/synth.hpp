#pragma once

// Desk-scale synthetic tabular data with a planted dependence on a binary
// protected attribute. Fifteen columns are available; any subset that keeps
// the protected column and the chosen label can be requested.
//
// Three independent standard-normal factors drive every feature. The bias
// strength beta enters only through the term beta * (2s - 1), plus a
// region column whose first bit is replaced by s with probability beta, so
// beta = 0 gives data that is independent of s by construction and beta = 1
// copies s into the region column.

#include <algorithm>
#include <string>
#include <vector>

#include "tabular.hpp"

namespace fairrepro {

struct SynthSpec {
    std::size_t n_rows = 20000;
    std::vector<std::string> columns; // empty = all fifteen
    double bias = 0.0;                // beta in [0, 1]
    std::uint64_t seed = 0;
    int variant = 0; // 0 = "source" population, 1 = shifted "target" population
    std::string label = "outcome";
    std::string protected_column = "group";
};

inline Schema synth_full_schema(const std::string& label = "outcome", const std::string& protected_column = "group") {
    return Schema(
        {
            ColumnSpec::categorical("group", {"a", "b"}),
            ColumnSpec::categorical("outcome", {"no", "yes"}),
            ColumnSpec::categorical("cohort", {"x", "y"}),
            ColumnSpec::numeric("age", 18, 80),
            ColumnSpec::numeric("score", 0, 100),
            ColumnSpec::numeric("income", 0, 200),
            ColumnSpec::categorical("region", {"north", "south", "east", "west"}),
            ColumnSpec::categorical("education", {"basic", "secondary", "tertiary"}),
            ColumnSpec::numeric("experience", 0, 40),
            ColumnSpec::categorical("unit", {"ops", "sales", "tech"}),
            ColumnSpec::numeric("tenure", 0, 30),
            ColumnSpec::numeric("priors", 0, 20),
            ColumnSpec::categorical("level", {"junior", "mid", "senior"}),
            ColumnSpec::categorical("remote", {"no", "yes"}),
            ColumnSpec::numeric("hours", 10, 60),
        },
        label, protected_column);
}

/// The ten columns shared by the default synthetic pair.
inline std::vector<std::string> synth_target_columns() {
    return {"group", "outcome", "cohort", "age", "score", "income", "region", "education", "experience", "unit"};
}

inline Dataset synth_generate(const SynthSpec& spec) {
    if (!(spec.bias >= 0.0 && spec.bias <= 1.0)) throw Error("synth: bias must lie in [0, 1]");
    if (spec.n_rows == 0) throw Error("synth: n_rows must be positive");
    const Schema full = synth_full_schema(spec.label, spec.protected_column);
    Rng rng(spec.seed);
    const double beta = spec.bias;
    const bool shifted = spec.variant != 0;

    auto clip01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
    auto three_way = [](double v, double lo, double hi) { return v < lo ? 0.0 : (v < hi ? 1.0 : 2.0); };

    std::vector<Row> rows;
    rows.reserve(spec.n_rows);
    for (std::size_t i = 0; i < spec.n_rows; ++i) {
        const double s = rng.bernoulli(0.5) ? 1.0 : 0.0;
        const double f1 = rng.normal() + (shifted ? 0.3 : 0.0);
        const double f2 = rng.normal();
        const double f3 = shifted ? 1.1 * rng.normal() - 0.2 : rng.normal();
        const double b = beta * (2.0 * s - 1.0);
        // noise draws in fixed order
        double e[13];
        for (double& x : e) x = rng.normal();
        const bool take_s = rng.uniform() < beta;

        Row row(full.size());
        row[0] = s;
        const double outcome_signal = shifted ? 1.0 * f2 + 1.0 * f1 : 1.2 * f2 + 0.8 * f1;
        row[1] = (outcome_signal + 0.9 * b + 0.7 * e[0] > 0.0) ? 1.0 : 0.0;
        row[2] = (1.0 * f3 - 0.8 * f1 + 0.6 * b + 0.8 * e[1] > 0.0) ? 1.0 : 0.0;
        row[3] = 18.0 + 62.0 * clip01(0.5 + 0.16 * f1 + 0.04 * e[2]);
        row[4] = 100.0 * clip01(0.5 + 0.18 * f2 + 0.04 * e[3]);
        row[5] = 200.0 * clip01(0.45 + 0.14 * f3 + 0.12 * b + 0.04 * e[4]);
        const double high_bit = take_s ? s : (f1 > 0.0 ? 1.0 : 0.0);
        row[6] = 2.0 * high_bit + (f3 > 0.0 ? 1.0 : 0.0);
        row[7] = three_way(f2 + 0.3 * e[5], -0.5, 0.6);
        row[8] = 40.0 * clip01(0.45 + 0.18 * f1 + 0.04 * e[6]);
        row[9] = three_way(f2 - f3 + 0.3 * e[7], -0.6, 0.6);
        row[10] = 30.0 * clip01(0.4 + 0.16 * f1 + 0.04 * e[8]);
        row[11] = 20.0 * clip01(0.3 + 0.12 * f2 + 0.04 * e[9]);
        row[12] = three_way(f1 + f2 + 0.3 * e[10], -0.8, 0.8);
        row[13] = (f3 + 0.4 * e[11] > 0.0) ? 1.0 : 0.0;
        row[14] = 10.0 + 50.0 * clip01(0.5 + 0.14 * f3 + 0.04 * e[12]);
        rows.push_back(std::move(row));
    }
    Dataset all(full, std::move(rows));
    if (spec.columns.empty()) return all;
    return all.project(spec.columns);
}

} // namespace fairrepro
