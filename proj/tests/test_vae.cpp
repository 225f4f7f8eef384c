#include <catch_amalgamated.hpp>

#include <fairrepro/synth.hpp>
#include <fairrepro/vae.hpp>

using namespace fairrepro;
using Catch::Approx;

namespace {

Dataset eight_columns(std::size_t n, std::uint64_t seed) {
    SynthSpec spec;
    spec.n_rows = n;
    spec.bias = 0.5;
    spec.seed = seed;
    spec.columns = {"group", "outcome", "age", "score", "income", "region", "education", "unit"};
    return synth_generate(spec);
}

VaeModel small_vae(const Schema& schema, std::uint64_t seed, Activation act = Activation::tanh) {
    VaeConfig cfg;
    cfg.hidden = {8, 8};
    cfg.latent_dim = 3;
    cfg.hidden_activation = act;
    Rng rng(seed);
    return make_vae(schema, cfg, rng);
}

} // namespace

TEST_CASE("reparameterize") {
    Matrix mu(1, 2), lv(1, 2), n(1, 2);
    mu << 1.5, -2.0;
    lv << 0.3, -0.7;
    n.setZero();
    CHECK(reparameterize(mu, lv, n) == mu);
    lv.setZero();
    n << 0.25, 1.0;
    CHECK(reparameterize(mu, lv, n) == mu + n);
    Matrix m0 = Matrix::Zero(1, 1), l(1, 1), one = Matrix::Ones(1, 1);
    l << 2.0 * std::log(2.0);
    CHECK(reparameterize(m0, l, one)(0, 0) == Approx(2.0));
    CHECK_THROWS_AS(reparameterize(mu, lv, Matrix::Zero(2, 2)), Error);
}

TEST_CASE("KL term") {
    CHECK(kl_divergence(Matrix::Zero(3, 2), Matrix::Zero(3, 2)) == 0.0);
    CHECK(kl_divergence(Matrix::Ones(1, 1), Matrix::Zero(1, 1)) == Approx(0.5));
    Rng rng(1);
    for (int i = 0; i < 20; ++i) {
        Matrix mu = standard_normal(2, 3, rng), lv = standard_normal(2, 3, rng);
        CHECK(kl_divergence(mu, lv) > 0.0);
    }
}

TEST_CASE("perfect reconstruction has zero reconstruction loss") {
    const auto d = eight_columns(20, 2);
    const EncodedLayout layout(d.schema());
    Matrix x = encode(d).features_with_protected(layout);
    // the protected bit term is BCE; a 0/1 target at a 0/1 output is clamped to ~1e-12
    CHECK(reconstruction_loss(d.schema(), x, x, 200.0).loss < 1e-10);
}

TEST_CASE("ELBO gradients pass the finite-difference check") {
    const auto d = eight_columns(12, 3);
    const EncodedLayout layout(d.schema());
    const Matrix x = encode(d).features_with_protected(layout);
    for (int draw = 0; draw < 10; ++draw) {
        auto m = small_vae(d.schema(), 100 + static_cast<std::uint64_t>(draw));
        Rng rng(200 + static_cast<std::uint64_t>(draw));
        const Matrix noise = standard_normal(x.rows(), 3, rng);
        auto enc_loss = [&](const ParamSet& p, Gradients* g) {
            VaeModel mm = m;
            static_cast<ParamSet&>(mm.encoder.params) = p;
            auto r = elbo_loss(x, mm, noise, 5.0, g != nullptr);
            if (g) *g = r.encoder_grads;
            return r.loss;
        };
        auto dec_loss = [&](const ParamSet& p, Gradients* g) {
            VaeModel mm = m;
            static_cast<ParamSet&>(mm.decoder.params) = p;
            auto r = elbo_loss(x, mm, noise, 5.0, g != nullptr);
            if (g) *g = r.decoder_grads;
            return r.loss;
        };
        REQUIRE(grad_check(m.encoder.config, m.encoder.params, enc_loss, 1e-4).passed);
        REQUIRE(grad_check(m.decoder.config, m.decoder.params, dec_loss, 1e-4).passed);
    }
}

TEST_CASE("decode_frozen: latent gradient matches finite differences, decoder untouched") {
    const auto d = eight_columns(10, 4);
    auto m = small_vae(d.schema(), 5);
    CHECK_THROWS_AS(decode_frozen(m, Matrix::Zero(1, 3)), Error);
    m.frozen = true;
    const MlpParams before = m.decoder.params;
    Rng rng(6);
    const Matrix z = standard_normal(4, 3, rng);
    const Matrix w = standard_normal(4, static_cast<Eigen::Index>(m.data_width()), rng);
    // scalar loss sum(w .* output)
    const auto pass = decode_frozen(m, z);
    const Matrix analytic = decode_frozen_input_grad(m, pass, w);
    auto f = [&](const Vector& flat) {
        const Matrix zi = Eigen::Map<const Matrix>(flat.data(), z.rows(), z.cols());
        return (decode_frozen(m, zi).output.array() * w.array()).sum();
    };
    const Vector numeric = central_difference(f, Eigen::Map<const Vector>(z.data(), z.size()));
    CHECK(max_relative_error(Eigen::Map<const Vector>(analytic.data(), analytic.size()), numeric) < 1e-4);
    CHECK(m.decoder.params == before);
    CHECK(decode_frozen(m, z).output == pass.output);
}

TEST_CASE("decoder categorical groups sum to 1") {
    const auto d = eight_columns(10, 7);
    auto m = small_vae(d.schema(), 8);
    m.frozen = true;
    Rng rng(9);
    const Matrix out = decode_frozen(m, standard_normal(50, 3, rng)).output;
    for (const auto& g : EncodedLayout(d.schema()).feature_groups()) {
        if (g.kind != ColumnKind::categorical) continue;
        for (Eigen::Index r = 0; r < out.rows(); ++r)
            CHECK(std::abs(out.row(r).segment(static_cast<Eigen::Index>(g.offset), static_cast<Eigen::Index>(g.width)).sum() - 1.0) < 1e-9);
    }
}

TEST_CASE("untrained reconstruction is a valid dataset and deterministic") {
    const auto d = eight_columns(100, 10);
    auto m = small_vae(d.schema(), 11, Activation::relu);
    const auto a = reconstruct(m, d);
    const auto b = reconstruct(m, d);
    CHECK(a.size() == d.size());
    CHECK(a.schema() == d.schema());
    CHECK(a.rows() == b.rows());
    CHECK(a.labels() == d.labels());
    const auto other = synth_generate({.n_rows = 10, .seed = 1});
    CHECK_THROWS_AS(reconstruct(m, other), Error);
}

TEST_CASE("training is deterministic and reaches the reconstruction threshold") {
    const auto train = eight_columns(4000, 12);
    const auto val = eight_columns(1000, 13);
    VaeConfig cfg;
    cfg.hidden = {32, 32};
    cfg.epochs = 15;
    const auto a = train_vae(train, val, cfg, 14);
    const auto b = train_vae(train, val, cfg, 14);
    CHECK(a.val_elbo == b.val_elbo);
    CHECK(a.model.frozen);
    CHECK(a.curve.size() == 15);
    for (const auto& c : a.reconstruction) {
        INFO(c.column << " tv=" << c.tv);
        CHECK(c.tv <= 0.15);
    }
    const auto back = vae_from_json(nlohmann::json::parse(vae_to_json(a.model).dump()));
    CHECK(back.decoder.params == a.model.decoder.params);
    CHECK(back.latent_dim == a.model.latent_dim);
}

TEST_CASE("latent dimension not below the encoded width warns") {
    const auto d = eight_columns(200, 15);
    VaeConfig cfg;
    cfg.hidden = {8};
    cfg.epochs = 1;
    cfg.latent_dim = 40;
    const auto r = train_vae(d, d, cfg, 1);
    CHECK_FALSE(r.warnings.empty());
    cfg.latent_dim = 0;
    Rng rng(1);
    CHECK_THROWS_AS(make_vae(d.schema(), cfg, rng), Error);
}
