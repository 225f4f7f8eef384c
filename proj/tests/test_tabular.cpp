#include <catch_amalgamated.hpp>

#include <algorithm>
#include <sstream>

#include <fairrepro/metrics.hpp>
#include <fairrepro/synth.hpp>
#include <fairrepro/tabular.hpp>

using namespace fairrepro;
using Catch::Approx;

namespace {

Schema two_column_schema() {
    return Schema({ColumnSpec::categorical("y", {"A", "B"}), ColumnSpec::categorical("s", {"m", "f"})}, "y", "s");
}

Schema mixed_schema() {
    return Schema({ColumnSpec::categorical("y", {"no", "yes"}), ColumnSpec::categorical("s", {"m", "f"}),
                   ColumnSpec::categorical("c", {"p", "q", "r"}), ColumnSpec::numeric("v", 0, 10)},
                  "y", "s");
}

Schema named_schema(const std::vector<std::string>& extra) {
    std::vector<ColumnSpec> cols = {ColumnSpec::categorical("y", {"0", "1"}), ColumnSpec::categorical("s", {"0", "1"})};
    for (const auto& n : extra) cols.push_back(ColumnSpec::numeric(n, 0, 1));
    return Schema(cols, "y", "s");
}

Dataset random_dataset(const Schema& schema, std::size_t n, Rng& rng) {
    std::vector<Row> rows;
    for (std::size_t r = 0; r < n; ++r) {
        Row row;
        for (const auto& c : schema.columns()) {
            if (c.is_categorical()) row.push_back(static_cast<double>(rng.below(c.cardinality())));
            else row.push_back(c.min + (c.max - c.min) * rng.uniform());
        }
        rows.push_back(row);
    }
    return Dataset(schema, rows);
}

} // namespace

TEST_CASE("load_csv parses a conforming file") {
    std::istringstream in("y,s\nA,m\nB,f\nA,f\n");
    const auto d = load_csv(in, two_column_schema());
    CHECK(d.size() == 3);
    CHECK(d.labels() == std::vector<int>{0, 1, 0});
}

TEST_CASE("load_csv accepts header columns in any order") {
    std::istringstream in("s,extra,y\nf,1,B\n");
    const auto d = load_csv(in, two_column_schema());
    REQUIRE(d.size() == 1);
    CHECK(d.label(0) == 1);
    CHECK(d.protected_attr(0) == 1);
}

TEST_CASE("load_csv rejects unknown categories and reports them") {
    std::istringstream in("y,s\nA,m\nZ,f\nB,m\n");
    LoadReport rep;
    const auto d = load_csv(in, two_column_schema(), &rep);
    CHECK(d.size() == 2);
    CHECK(rep.rejected == 1);
    CHECK(rep.accepted == 2);
    REQUIRE(rep.messages.size() == 1);
    CHECK(rep.messages[0].find("'Z'") != std::string::npos);

    std::istringstream strict_in("y,s\nA,m\nZ,f\n");
    CHECK_THROWS_AS(load_csv(strict_in, two_column_schema(), nullptr, {.strict = true}), Error);
}

TEST_CASE("load_csv rejects out-of-range numerics and missing columns") {
    std::istringstream in("y,s,c,v\nno,m,p,11\nyes,f,q,3\n");
    LoadReport rep;
    const auto d = load_csv(in, mixed_schema(), &rep);
    CHECK(d.size() == 1);
    CHECK(rep.rejected == 1);
    std::istringstream missing("y,s\nno,m\n");
    CHECK_THROWS_AS(load_csv(missing, mixed_schema()), Error);
}

TEST_CASE("encode produces one-hot and min-max values") {
    const Dataset d(mixed_schema(), {{1, 0, 1, 5.0}});
    const auto m = encode(d);
    const EncodedLayout layout(mixed_schema());
    REQUIRE(m.feature_dim == 6);
    CHECK(m.rows(0, 0) == 0.0);
    CHECK(m.rows(0, 1) == 1.0);
    CHECK(m.rows(0, 2) == 0.0);
    CHECK(m.rows(0, 3) == 0.5);
    CHECK(m.rows(0, static_cast<Eigen::Index>(layout.label_offset())) == 1.0);
    CHECK(m.rows(0, static_cast<Eigen::Index>(layout.protected_offset())) == 0.0);
}

TEST_CASE("decode takes argmax with ties to the lowest index and denormalizes") {
    const auto schema = mixed_schema();
    Matrix m(3, 6);
    m << 0.1, 0.7, 0.2, 0.5, 0, 0,
         0.4, 0.4, 0.2, 0.0, 1, 1,
         0.3, 0.3, 0.4, 1.0, 0, 1;
    const auto d = decode(m, schema);
    CHECK(d.rows()[0][2] == 1.0);
    CHECK(d.rows()[0][3] == 5.0);
    CHECK(d.rows()[1][2] == 0.0);
    CHECK(d.rows()[2][2] == 2.0);
    CHECK(d.rows()[2][3] == 10.0);

    const Schema bin({ColumnSpec::categorical("y", {"0", "1"}), ColumnSpec::categorical("s", {"0", "1"}),
                      ColumnSpec::categorical("b", {"u", "v"})},
                     "y", "s");
    Matrix tie(1, 4);
    tie << 0.5, 0.5, 0.5, 0.5;
    const auto t = decode(tie, bin);
    CHECK(t.rows()[0][2] == 0.0);
    CHECK(t.label(0) == 0);
    CHECK_THROWS_AS(decode(Matrix::Zero(1, 5), schema), Error);
}

TEST_CASE("encode/decode roundtrip over random schemas") {
    Rng rng(7);
    for (int trial = 0; trial < 25; ++trial) {
        std::vector<ColumnSpec> cols = {ColumnSpec::categorical("y", {"0", "1"}),
                                        ColumnSpec::categorical("s", {"0", "1"})};
        const auto extra = 1 + rng.below(6);
        for (std::size_t k = 0; k < extra; ++k) {
            const std::string name = "c" + std::to_string(k);
            if (rng.bernoulli(0.5)) {
                std::vector<std::string> cats;
                for (std::size_t j = 0; j < 2 + rng.below(4); ++j) cats.push_back("k" + std::to_string(j));
                cols.push_back(ColumnSpec::categorical(name, cats));
            } else {
                const double lo = rng.uniform(-50, 50);
                cols.push_back(ColumnSpec::numeric(name, lo, lo + rng.uniform(1, 100)));
            }
        }
        const Schema schema(cols, "y", "s");
        const auto d = random_dataset(schema, 40, rng);
        const auto back = decode(encode(d), schema);
        REQUIRE(back.size() == d.size());
        for (std::size_t r = 0; r < d.size(); ++r)
            for (std::size_t c = 0; c < schema.size(); ++c)
                CHECK(back.rows()[r][c] == Approx(d.rows()[r][c]).margin(1e-9));
    }
}

TEST_CASE("encoded invariants: one-hot groups sum to 1 and numerics lie in [0,1]") {
    Rng rng(3);
    const auto d = random_dataset(mixed_schema(), 200, rng);
    const auto m = encode(d);
    for (Eigen::Index r = 0; r < m.rows.rows(); ++r) {
        CHECK(m.rows.row(r).segment(0, 3).sum() == 1.0);
        CHECK(m.rows(r, 3) >= 0.0);
        CHECK(m.rows(r, 3) <= 1.0);
    }
}

TEST_CASE("align partitions nested column sets") {
    const auto abc = named_schema({"a", "b", "c"});
    const auto ab = named_schema({"a", "b"});
    const auto a = named_schema({"a"});

    const auto m1 = align(abc, ab);
    CHECK(m1.added_in_source == std::vector<std::string>{"c"});
    CHECK(m1.dropped_from_target.empty());
    CHECK(m1.shared == std::vector<std::string>{"y", "s", "a", "b"});

    const auto m2 = align(a, abc);
    CHECK(m2.dropped_from_target == std::vector<std::string>{"b", "c"});
    CHECK(m2.added_in_source.empty());

    const auto id = align(abc, abc);
    CHECK(id.added_in_source.empty());
    CHECK(id.dropped_from_target.empty());
    CHECK(id.shared.size() == abc.size());

    auto sorted = [](std::vector<std::string> v) {
        std::sort(v.begin(), v.end());
        return v;
    };
    CHECK(sorted(align(abc, ab).shared) == sorted(align(ab, abc).shared));
}

TEST_CASE("align rejects incomparable schemas and kind mismatches") {
    CHECK_THROWS_AS(align(named_schema({"a", "b"}), named_schema({"a", "c"})), Error);
    const Schema cat({ColumnSpec::categorical("y", {"0", "1"}), ColumnSpec::categorical("s", {"0", "1"}),
                      ColumnSpec::categorical("a", {"u", "v"})},
                     "y", "s");
    CHECK_THROWS_AS(align(cat, named_schema({"a"})), Error);
}

TEST_CASE("split sizes, determinism and partition law") {
    std::vector<Row> rows;
    for (int i = 0; i < 10; ++i) rows.push_back({static_cast<double>(i % 2), 0, static_cast<double>(i) / 10.0});
    const Dataset d(named_schema({"id"}), rows);
    const auto p = split(d, {0.8, 0.1, 0.1}, 42);
    CHECK(p.train.size() == 8);
    CHECK(p.val.size() == 1);
    CHECK(p.test.size() == 1);

    const auto q = split(d, {0.8, 0.1, 0.1}, 42);
    CHECK(p.train.rows() == q.train.rows());
    CHECK(p.val.rows() == q.val.rows());
    CHECK(p.test.rows() == q.test.rows());

    std::vector<Row> all = p.train.rows();
    all.insert(all.end(), p.val.rows().begin(), p.val.rows().end());
    all.insert(all.end(), p.test.rows().begin(), p.test.rows().end());
    std::sort(all.begin(), all.end());
    auto orig = d.rows();
    std::sort(orig.begin(), orig.end());
    CHECK(all == orig);
    CHECK(p.train.schema() == d.schema());

    CHECK_THROWS_AS(split(d, {0.9, 0.05, 0.05}, 1), Error);
    CHECK_THROWS_AS(split(d, {0.5, 0.5, 0.0}, 1), Error);
}

TEST_CASE("synthetic data: beta = 0 leaves s unpredictable") {
    SynthSpec spec;
    spec.n_rows = 10000;
    spec.bias = 0.0;
    spec.seed = 11;
    const double probe = probe_fairness(synth_generate(spec), 5);
    CHECK(probe == Approx(0.5).margin(0.03));
}

TEST_CASE("synthetic data: beta = 1 copies s into a feature") {
    SynthSpec spec;
    spec.n_rows = 4000;
    spec.bias = 1.0;
    spec.seed = 12;
    const auto d = synth_generate(spec);
    const auto region = d.column_as_int(d.schema().index_of("region"));
    const auto s = d.protected_attrs();
    for (std::size_t i = 0; i < s.size(); ++i) REQUIRE(region[i] / 2 == s[i]);
    CHECK(probe_fairness(d, 5) >= 0.98);
}

TEST_CASE("synthetic data: beta = 0.8 makes the label depend on s") {
    SynthSpec spec;
    spec.n_rows = 20000;
    spec.bias = 0.8;
    spec.seed = 13;
    const auto d = synth_generate(spec);
    CHECK(mutual_information(d.labels(), d.protected_attrs()) > 0.01);

    spec.bias = 0.0;
    const auto fair = synth_generate(spec);
    CHECK(mutual_information(fair.labels(), fair.protected_attrs()) < 1e-3);
}

TEST_CASE("synthetic data is deterministic and honours column selection") {
    SynthSpec spec;
    spec.n_rows = 50;
    spec.seed = 5;
    spec.columns = synth_target_columns();
    const auto a = synth_generate(spec);
    const auto b = synth_generate(spec);
    CHECK(a.rows() == b.rows());
    CHECK(a.schema().size() == 10);
    CHECK_THROWS_AS(synth_generate({.n_rows = 10, .bias = 1.5}), Error);
}
