#include <catch_amalgamated.hpp>

#include <fairrepro/classifier.hpp>
#include <fairrepro/synth.hpp>

using namespace fairrepro;
using Catch::Approx;

namespace {

Schema toy_schema() {
    return Schema({ColumnSpec::categorical("y", {"0", "1"}), ColumnSpec::categorical("s", {"0", "1"}),
                   ColumnSpec::numeric("a", -1, 1), ColumnSpec::numeric("b", -1, 1)},
                  "y", "s");
}

Dataset separable(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Row> rows;
    while (rows.size() < n) {
        const double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1);
        const double m = a + 0.5 * b;
        if (std::abs(m) < 0.1) continue; // margin
        rows.push_back({m > 0 ? 1.0 : 0.0, static_cast<double>(rng.below(2)), a, b});
    }
    return Dataset(toy_schema(), rows);
}

ClassifierConfig small_config() {
    ClassifierConfig c;
    c.hidden = {16, 16};
    c.max_epochs = 100;
    c.learning_rate = 1e-2;
    return c;
}

} // namespace

TEST_CASE("separable data is learned") {
    const auto c = train_classifier(separable(2000, 1), separable(400, 2), small_config(), 3);
    CHECK(accuracy(c, separable(1000, 4)) >= 0.98);
    CHECK(c.frozen);
}

TEST_CASE("constant labels give accuracy 1") {
    Rng rng(5);
    std::vector<Row> rows;
    for (int i = 0; i < 300; ++i) rows.push_back({1.0, static_cast<double>(rng.below(2)), rng.uniform(-1, 1), 0.0});
    const Dataset d(toy_schema(), rows);
    const auto c = train_classifier(d, d, small_config(), 6);
    CHECK(accuracy(c, d) == 1.0);
}

TEST_CASE("hard labels: ties go to class 0") {
    Matrix p(3, 2);
    p << 0.5, 0.5, 0.2, 0.8, 0.7, 0.3;
    CHECK(hard_labels(p) == std::vector<int>{0, 1, 0});

    Classifier c;
    c.schema = toy_schema();
    MlpParams zero;
    c.net.config = classifier_mlp_config(2, {.hidden = {}});
    zero.weights = {Matrix::Zero(2, 2)};
    zero.biases = {Vector::Zero(2)};
    c.net.params = zero;
    const Matrix out = predict(c, Matrix::Ones(1, 2));
    CHECK(out(0, 0) == 0.5);
    CHECK(hard_labels(out)[0] == 0);
    CHECK_THROWS_AS(predict(c, Matrix::Ones(1, 3)), Error);
}

TEST_CASE("coin-flip labels give accuracy near 0.5") {
    Rng rng(21);
    std::vector<Row> rows;
    for (int i = 0; i < 10000; ++i)
        rows.push_back({static_cast<double>(rng.below(2)), static_cast<double>(rng.below(2)), rng.uniform(-1, 1),
                        rng.uniform(-1, 1)});
    const Dataset test(toy_schema(), rows);
    const auto c = train_classifier(separable(1000, 22), separable(200, 23), small_config(), 24);
    CHECK(accuracy(c, test) == Approx(0.5).margin(0.02));
}

TEST_CASE("accuracy equals a recount of saved predictions") {
    SynthSpec spec;
    spec.n_rows = 3000;
    spec.bias = 0.5;
    spec.seed = 31;
    const auto d = synth_generate(spec);
    const auto parts = split(d, {0.7, 0.15, 0.15}, 32);
    ClassifierConfig cfg;
    cfg.hidden = {16, 16};
    cfg.max_epochs = 30;
    const auto c = train_classifier(parts.train, parts.val, cfg, 33);
    const Matrix probs = predict(c, encode(parts.test));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < parts.test.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const int pred = probs(r, 1) > probs(r, 0) ? 1 : 0;
        correct += pred == parts.test.label(i);
    }
    CHECK(accuracy(c, parts.test) == static_cast<double>(correct) / static_cast<double>(parts.test.size()));
    for (Eigen::Index r = 0; r < probs.rows(); ++r) CHECK(std::abs(probs.row(r).sum() - 1.0) < 1e-12);
}

TEST_CASE("training and prediction are deterministic; checkpoints roundtrip") {
    const auto a = train_classifier(separable(500, 41), separable(100, 42), small_config(), 43);
    const auto b = train_classifier(separable(500, 41), separable(100, 42), small_config(), 43);
    CHECK(a.net.params == b.net.params);
    const Matrix x = encode(separable(50, 44)).features(EncodedLayout(toy_schema()));
    CHECK(predict(a, x) == predict(a, x));

    const auto back = classifier_from_json(nlohmann::json::parse(classifier_to_json(a).dump()));
    CHECK(back.net.params == a.net.params);
    CHECK(back.schema == a.schema);
    CHECK(back.schema_fingerprint() == a.schema_fingerprint());
    CHECK(back.label() == "y");
}

TEST_CASE("protected column is excluded from the input by default") {
    const auto d = separable(200, 51);
    const auto c = train_classifier(d, d, small_config(), 52);
    CHECK(c.input_width() == 2);
    auto cfg = small_config();
    cfg.include_protected = true;
    CHECK(train_classifier(d, d, cfg, 52).input_width() == 3);
}

TEST_CASE("non-binary labels and empty sets are rejected") {
    CHECK_THROWS_AS(fit_binary(Matrix::Zero(2, 1), {0, 2}, Matrix::Zero(1, 1), {0}, {}, 1), Error);
    CHECK_THROWS_AS(accuracy_from_probs(Matrix::Zero(0, 2), {}), Error);
}
