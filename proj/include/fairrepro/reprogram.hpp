#pragma once

// Reprogramming of a frozen classifier + frozen VAE decoder to a new
// dataset/task. A fresh encoder maps target rows (features + protected bit)
// into the VAE latent space; the frozen decoder turns that into base-schema
// rows, which are scored by the frozen classifier, a realism discriminator
// on the shared feature columns, and a fairness discriminator that tries to
// recover the target protected attribute from the generated features.

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "classifier.hpp"
#include "diffnet.hpp"
#include "metrics.hpp"
#include "tabular.hpp"
#include "vae.hpp"

namespace fairrepro {

enum class ReprogramMode { classify_only, gan, fairgan };

inline const char* to_string(ReprogramMode m) {
    switch (m) {
    case ReprogramMode::classify_only: return "CLASSIFY_ONLY";
    case ReprogramMode::gan: return "GAN";
    case ReprogramMode::fairgan: return "FAIRGAN";
    }
    return "?";
}

inline ReprogramMode mode_from_string(const std::string& s) {
    for (auto m : {ReprogramMode::classify_only, ReprogramMode::gan, ReprogramMode::fairgan})
        if (s == to_string(m)) return m;
    throw Error("unknown reprogramming mode '" + s + "'");
}

/// What the l2 penalty is applied to.
enum class PenaltyTarget { encoder_weights, data_perturbation };

inline const char* to_string(PenaltyTarget t) {
    return t == PenaltyTarget::encoder_weights ? "encoder_weights" : "data_perturbation";
}

struct ReprogramConfig {
    ReprogramMode mode = ReprogramMode::gan;
    double gamma = 0.5;   // weight of the classification term
    double delta = 1.0;   // weight of the fairness term; 0 deactivates D2
    double eta = 1e-3;    // learning rate for the encoder and both discriminators
    double lambda = 1e-4; // l2 coefficient
    double adam_beta1 = 0.5; // first-moment decay for the adversarial phase
    PenaltyTarget penalty = PenaltyTarget::encoder_weights;
    std::size_t epochs = 60;
    std::size_t batch_size = 128;
    std::size_t discriminator_steps = 5; // per generator step
    std::uint64_t seed = 0;

    std::vector<std::size_t> encoder_hidden = {64, 64};
    Activation hidden_activation = Activation::relu; // encoder and both discriminators
    std::vector<std::size_t> discriminator_hidden = {64, 64};
    std::size_t patience = 10;           // CLASSIFY_ONLY early stopping, in epochs
    std::size_t checkpoint_every = 2;    // GAN/FAIRGAN candidate checkpoints, in epochs
    double accuracy_tolerance = 0.15;    // selection floor below the best checkpoint accuracy
    double tv_threshold = kDefaultTvThreshold;
    /// Discriminators see categorical groups as one-hot argmax vectors in
    /// the forward pass (gradients pass straight through to the softmax
    /// outputs), matching what real rows and the realism check look like.
    bool straight_through = true;
    /// Standard deviation of Gaussian noise added to the categorical inputs,
    /// real and generated, when the realism discriminator is trained.
    double instance_noise = 0.2;
    /// Epochs of shared-column reconstruction before the main objective, so
    /// the adversarial game starts from realistic generated rows.
    std::size_t warmup_epochs = 10;
    double warmup_learning_rate = 1e-3;
    double warmup_numeric_weight = 200.0;
    ProbeOptions probe;

    bool d1_active() const { return mode != ReprogramMode::classify_only; }
    bool d2_active() const { return mode == ReprogramMode::fairgan && delta > 0.0; }
    double effective_delta() const { return d2_active() ? delta : 0.0; }

    /// Every offending field, one message each. Empty when valid.
    std::vector<std::string> validation_errors() const {
        std::vector<std::string> errs;
        auto finite_nonneg = [&](double v, const char* name) {
            if (!std::isfinite(v) || v < 0.0) errs.push_back(std::string(name) + ": must be a finite value >= 0");
        };
        finite_nonneg(gamma, "gamma");
        finite_nonneg(delta, "delta");
        finite_nonneg(lambda, "lambda");
        if (!std::isfinite(eta) || eta <= 0.0) errs.push_back("eta: must be a finite value > 0");
        if (epochs == 0) errs.push_back("epochs: must be positive");
        if (batch_size == 0) errs.push_back("batch_size: must be positive");
        if (discriminator_steps == 0) errs.push_back("discriminator_steps: must be positive");
        if (checkpoint_every == 0) errs.push_back("checkpoint_every: must be positive");
        if (!(tv_threshold >= 0.0 && tv_threshold <= 1.0)) errs.push_back("tv_threshold: must lie in [0, 1]");
        if (!(accuracy_tolerance >= 0.0 && accuracy_tolerance <= 1.0))
            errs.push_back("accuracy_tolerance: must lie in [0, 1]");
        if (!std::isfinite(instance_noise) || instance_noise < 0.0)
            errs.push_back("instance_noise: must be a finite value >= 0");
        if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) errs.push_back("adam_beta1: must lie in [0, 1)");
        if (!std::isfinite(warmup_learning_rate) || warmup_learning_rate <= 0.0)
            errs.push_back("warmup_learning_rate: must be a finite value > 0");
        if (!std::isfinite(warmup_numeric_weight) || warmup_numeric_weight < 0.0)
            errs.push_back("warmup_numeric_weight: must be a finite value >= 0");
        return errs;
    }

    void validate() const {
        const auto errs = validation_errors();
        if (errs.empty()) return;
        std::string msg = "invalid reprogramming config:";
        for (const auto& e : errs) msg += "\n  " + e;
        throw Error(msg);
    }
};

inline nlohmann::json reprogram_config_to_json(const ReprogramConfig& c) {
    return {{"mode", to_string(c.mode)},
            {"gamma", c.gamma},
            {"delta", c.delta},
            {"eta", c.eta},
            {"lambda", c.lambda},
            {"adam_beta1", c.adam_beta1},
            {"penalty", to_string(c.penalty)},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"discriminator_steps", c.discriminator_steps},
            {"seed", c.seed},
            {"encoder_hidden", c.encoder_hidden},
            {"hidden_activation", to_string(c.hidden_activation)},
            {"discriminator_hidden", c.discriminator_hidden},
            {"patience", c.patience},
            {"checkpoint_every", c.checkpoint_every},
            {"accuracy_tolerance", c.accuracy_tolerance},
            {"tv_threshold", c.tv_threshold},
            {"straight_through", c.straight_through},
            {"instance_noise", c.instance_noise},
            {"warmup_epochs", c.warmup_epochs},
            {"warmup_learning_rate", c.warmup_learning_rate},
            {"warmup_numeric_weight", c.warmup_numeric_weight}};
}

/// Reads known fields over the defaults. Numeric fields are range-checked
/// by validation_errors(); type errors are collected per field.
inline ReprogramConfig reprogram_config_from_json(const nlohmann::json& j, std::vector<std::string>* errors = nullptr) {
    ReprogramConfig c;
    std::vector<std::string> local;
    auto& errs = errors ? *errors : local;
    auto read = [&](const char* key, auto& field) {
        if (!j.contains(key)) return;
        try {
            field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
        } catch (const std::exception&) {
            errs.push_back(std::string(key) + ": wrong type");
        }
    };
    if (j.contains("mode")) {
        try {
            c.mode = mode_from_string(j.at("mode").get<std::string>());
        } catch (const std::exception&) {
            errs.push_back("mode: must be one of CLASSIFY_ONLY, GAN, FAIRGAN");
        }
    }
    if (j.contains("penalty")) {
        const auto p = j.at("penalty").is_string() ? j.at("penalty").get<std::string>() : std::string{};
        if (p == "encoder_weights") c.penalty = PenaltyTarget::encoder_weights;
        else if (p == "data_perturbation") c.penalty = PenaltyTarget::data_perturbation;
        else errs.push_back("penalty: must be encoder_weights or data_perturbation");
    }
    read("gamma", c.gamma);
    read("delta", c.delta);
    read("eta", c.eta);
    read("lambda", c.lambda);
    read("adam_beta1", c.adam_beta1);
    read("epochs", c.epochs);
    read("batch_size", c.batch_size);
    read("discriminator_steps", c.discriminator_steps);
    read("seed", c.seed);
    read("encoder_hidden", c.encoder_hidden);
    if (j.contains("hidden_activation")) {
        try {
            c.hidden_activation = activation_from_string(j.at("hidden_activation").get<std::string>());
            if (c.hidden_activation != Activation::relu && c.hidden_activation != Activation::tanh) throw Error("");
        } catch (const std::exception&) {
            errs.push_back("hidden_activation: must be relu or tanh");
        }
    }
    read("discriminator_hidden", c.discriminator_hidden);
    read("patience", c.patience);
    read("checkpoint_every", c.checkpoint_every);
    read("accuracy_tolerance", c.accuracy_tolerance);
    read("tv_threshold", c.tv_threshold);
    read("straight_through", c.straight_through);
    read("instance_noise", c.instance_noise);
    read("warmup_epochs", c.warmup_epochs);
    read("warmup_learning_rate", c.warmup_learning_rate);
    read("warmup_numeric_weight", c.warmup_numeric_weight);
    for (auto& e : c.validation_errors()) errs.push_back(std::move(e));
    if (!errors && !errs.empty()) {
        std::string msg = "invalid reprogramming config:";
        for (const auto& e : errs) msg += "\n  " + e;
        throw Error(msg);
    }
    return c;
}

// ---------------------------------------------------------------------------
// Generator

struct Generator {
    Mlp encoder; // target features + protected bit -> [mu, logvar] (mu path used)
    std::shared_ptr<const VaeModel> vae;
    Schema target_schema;
    AlignmentMap alignment;
    std::vector<SharedSlice> shared; // features present in both schemas
    std::vector<std::pair<std::size_t, std::size_t>> base_categorical;   // (offset, width) in base features
    std::vector<std::pair<std::size_t, std::size_t>> shared_categorical; // (offset, width) in gathered shared columns

    const Schema& base_schema() const { return vae->schema; }
    std::size_t input_width() const { return encoder.config.input_width(); }
    std::size_t output_width() const { return vae->data_width(); }
    std::size_t base_feature_width() const { return output_width() - 1; }
    std::size_t shared_width() const {
        std::size_t w = 0;
        for (const auto& s : shared) w += s.width;
        return w;
    }
};

inline Generator build_generator(std::shared_ptr<const VaeModel> vae, const Schema& target_schema,
                                 const AlignmentMap& alignment, std::uint64_t seed,
                                 const std::vector<std::size_t>& hidden = {64, 64},
                                 Activation hidden_activation = Activation::relu) {
    if (!vae) throw Error("build_generator: no VAE");
    if (!vae->frozen) throw Error("build_generator: VAE must be frozen");
    const auto expected = align(vae->schema, target_schema);
    if (expected.shared != alignment.shared || expected.added_in_source != alignment.added_in_source ||
        expected.dropped_from_target != alignment.dropped_from_target)
        throw Error("build_generator: alignment does not match the base and target schemas");
    Generator g;
    g.vae = std::move(vae);
    g.target_schema = target_schema;
    g.alignment = alignment;
    g.shared = shared_feature_slices(g.vae->schema, target_schema, alignment);
    if (g.shared.empty()) throw Error("build_generator: no feature columns shared between base and target");
    for (const auto& grp : EncodedLayout(g.vae->schema).feature_groups())
        if (grp.kind == ColumnKind::categorical) g.base_categorical.emplace_back(grp.offset, grp.width);
    std::size_t at = 0;
    for (const auto& sl : g.shared) {
        if (sl.categorical) g.shared_categorical.emplace_back(at, sl.width);
        at += sl.width;
    }
    const EncodedLayout target_layout(target_schema);
    Rng rng(Rng::derive(seed, 0xe1c));
    g.encoder = Mlp::create(MlpConfig::make(target_layout.feature_width() + 1, hidden, 2 * g.vae->latent_dim,
                                            Activation::identity, hidden_activation),
                            rng);
    return g;
}

struct GeneratorPass {
    ForwardPass encoder;
    ForwardPass decoder;
    const Matrix& output() const { return decoder.output; } // base features + protected bit
};

/// Deterministic forward pass: posterior mean of the new encoder, then the
/// frozen decoder.
inline GeneratorPass generator_forward(const Generator& g, const Matrix& batch) {
    if (static_cast<std::size_t>(batch.cols()) != g.input_width())
        throw Error("generator_forward: batch width " + std::to_string(batch.cols()) + " != " +
                    std::to_string(g.input_width()));
    GeneratorPass p;
    p.encoder = forward(g.encoder.config, g.encoder.params, batch);
    const Matrix mu = p.encoder.output.leftCols(static_cast<Eigen::Index>(g.vae->latent_dim));
    p.decoder = decode_frozen(*g.vae, mu);
    return p;
}

/// Encoder gradients for an upstream gradient on the generator output.
inline Gradients generator_backward(const Generator& g, const GeneratorPass& pass, const Matrix& upstream) {
    const Matrix dz = decode_frozen_input_grad(*g.vae, pass.decoder, upstream);
    const auto L = static_cast<Eigen::Index>(g.vae->latent_dim);
    Matrix enc_up = Matrix::Zero(dz.rows(), 2 * L);
    enc_up.leftCols(L) = dz;
    return backward(g.encoder.config, g.encoder.params, pass.encoder, enc_up).grads;
}

/// Columns of `m` at the shared slices, using base or target offsets.
inline Matrix gather_shared(const Matrix& m, const std::vector<SharedSlice>& slices, bool base_offsets) {
    std::size_t w = 0;
    for (const auto& s : slices) w += s.width;
    Matrix out(m.rows(), static_cast<Eigen::Index>(w));
    Eigen::Index at = 0;
    for (const auto& s : slices) {
        const auto off = static_cast<Eigen::Index>(base_offsets ? s.base_offset : s.target_offset);
        out.middleCols(at, static_cast<Eigen::Index>(s.width)) = m.middleCols(off, static_cast<Eigen::Index>(s.width));
        at += static_cast<Eigen::Index>(s.width);
    }
    return out;
}

/// Adds a gradient on the gathered shared columns back into a base-width gradient.
inline void scatter_shared_add(Matrix& into, const Matrix& grad, const std::vector<SharedSlice>& slices) {
    Eigen::Index at = 0;
    for (const auto& s : slices) {
        const auto w = static_cast<Eigen::Index>(s.width);
        into.middleCols(static_cast<Eigen::Index>(s.base_offset), w) += grad.middleCols(at, w);
        at += w;
    }
}

/// Replaces each categorical group by the one-hot vector of its argmax
/// (ties to the lowest index).
inline Matrix harden(const Matrix& m, const std::vector<std::pair<std::size_t, std::size_t>>& groups) {
    Matrix out = m;
    for (const auto& [off, width] : groups) {
        const auto o = static_cast<Eigen::Index>(off), w = static_cast<Eigen::Index>(width);
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            const auto k = static_cast<Eigen::Index>(argmax_lowest(m.row(r).segment(o, w)));
            out.row(r).segment(o, w).setZero();
            out(r, o + k) = 1.0;
        }
    }
    return out;
}

/// Generated base features (G_s excluded) as the fairness discriminator and
/// the probe see them.
inline Matrix generated_features(const Generator& g, const Matrix& output, bool hardened) {
    const Matrix x = output.leftCols(static_cast<Eigen::Index>(g.base_feature_width()));
    return hardened ? harden(x, g.base_categorical) : x;
}

/// Generated shared columns as the realism discriminator sees them.
inline Matrix generated_shared(const Generator& g, const Matrix& output, bool hardened) {
    const Matrix x = gather_shared(output, g.shared, true);
    return hardened ? harden(x, g.shared_categorical) : x;
}

// ---------------------------------------------------------------------------
// Discriminators

struct Discriminators {
    Mlp d1; // realism: shared feature columns -> P(real)
    Mlp d2; // fairness: generated base features (no protected bit) -> P(s' = 1)
};

inline Discriminators make_discriminators(const Generator& g, const ReprogramConfig& cfg) {
    Rng rng(Rng::derive(cfg.seed, 0xd15c));
    Discriminators d;
    d.d1 = Mlp::create(
        MlpConfig::make(g.shared_width(), cfg.discriminator_hidden, 1, Activation::sigmoid, cfg.hidden_activation), rng);
    d.d2 = Mlp::create(
        MlpConfig::make(g.base_feature_width(), cfg.discriminator_hidden, 1, Activation::sigmoid, cfg.hidden_activation),
        rng);
    return d;
}

/// Target rows in generator-input form plus their labels.
struct ReprogramBatch {
    Matrix x;              // target features + protected bit
    std::vector<int> y;    // target labels
    std::vector<int> s;    // target protected attribute

    static ReprogramBatch from(const Dataset& data) {
        const EncodedLayout layout(data.schema());
        return {encode(data).features_with_protected(layout), data.labels(), data.protected_attrs()};
    }

    ReprogramBatch rows(const std::vector<std::size_t>& idx) const {
        ReprogramBatch b;
        b.x.resize(static_cast<Eigen::Index>(idx.size()), x.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            b.x.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(idx[i]));
            b.y.push_back(y[idx[i]]);
            b.s.push_back(s[idx[i]]);
        }
        return b;
    }
};

/// Classifier input built from a generator output (G_x, plus G_s when the
/// classifier was trained with the protected column).
inline Matrix classifier_input_from_generated(const Classifier& clf, const Matrix& generated) {
    const Eigen::Index wf = generated.cols() - 1;
    if (clf.include_protected) return generated;
    return generated.leftCols(wf);
}

struct LossBreakdown {
    double total = 0.0;
    double realism = 0.0;        // non-saturating fooling term against D1
    double l2 = 0.0;             // already multiplied by lambda
    double classification = 0.0; // cross-entropy of the frozen classifier on G_x vs y'
    double fairness = 0.0;       // BCE of D2's score toward 0.5
    double gamma = 0.0;
    double delta = 0.0;
};

struct CombinedLoss {
    LossBreakdown terms;
    Gradients encoder_grads;
};

/// loss = realism + l2 + gamma * classification + delta * fairness, with the
/// terms of inactive discriminators exactly zero.
inline CombinedLoss combined_loss(const Generator& g, const Discriminators& d, const Classifier& clf,
                                  const ReprogramBatch& batch, const ReprogramConfig& cfg, bool want_grads = true) {
    const auto pass = generator_forward(g, batch.x);
    const Matrix& out = pass.output();
    const Eigen::Index n = out.rows();
    const Eigen::Index wf = static_cast<Eigen::Index>(g.base_feature_width());
    Matrix upstream = Matrix::Zero(n, out.cols());
    CombinedLoss res;
    auto& t = res.terms;
    t.gamma = cfg.gamma;
    t.delta = cfg.effective_delta();

    // classification through the frozen classifier
    {
        const Matrix cin = classifier_input_from_generated(clf, out);
        const auto cpass = forward(clf.net.config, clf.net.params, cin);
        const auto ce = cross_entropy(cpass.output, batch.y);
        t.classification = ce.loss;
        if (want_grads && cfg.gamma != 0.0) {
            const Matrix dcin = backward(clf.net.config, clf.net.params, cpass, ce.grad).input_grad;
            upstream.leftCols(dcin.cols()) += cfg.gamma * dcin;
        }
    }

    if (cfg.d1_active()) {
        const auto dpass = forward(d.d1.config, d.d1.params, generated_shared(g, out, cfg.straight_through));
        const auto fool = bce(dpass.output, constant_targets(n, 1.0));
        t.realism = fool.loss;
        if (want_grads) {
            const Matrix dshared = backward(d.d1.config, d.d1.params, dpass, fool.grad).input_grad;
            scatter_shared_add(upstream, dshared, g.shared);
        }
    }

    if (cfg.d2_active()) {
        const auto dpass = forward(d.d2.config, d.d2.params, generated_features(g, out, cfg.straight_through));
        const auto confuse = bce(dpass.output, constant_targets(n, 0.5));
        t.fairness = confuse.loss;
        if (want_grads) {
            const Matrix dx = backward(d.d2.config, d.d2.params, dpass, confuse.grad).input_grad;
            upstream.leftCols(wf) += t.delta * dx;
        }
    }

    Gradients l2_grads;
    if (cfg.penalty == PenaltyTarget::encoder_weights) {
        auto [loss, grads] = l2_penalty(g.encoder.params, cfg.lambda);
        t.l2 = loss;
        l2_grads = std::move(grads);
    } else {
        const Matrix gen = gather_shared(out, g.shared, true);
        const Matrix real = gather_shared(batch.x, g.shared, false);
        const Matrix diff = gen - real;
        t.l2 = cfg.lambda * diff.squaredNorm() / static_cast<double>(n);
        if (want_grads) scatter_shared_add(upstream, 2.0 * cfg.lambda / static_cast<double>(n) * diff, g.shared);
    }

    t.total = t.realism + t.l2 + t.gamma * t.classification + t.delta * t.fairness;
    if (!want_grads) return res;
    res.encoder_grads = generator_backward(g, pass, upstream);
    if (cfg.penalty == PenaltyTarget::encoder_weights) res.encoder_grads += l2_grads;
    return res;
}

/// Warm-up objective: reconstruct the target's shared columns through the
/// frozen decoder (cross-entropy per categorical group, weighted squared
/// error per numeric column, mean over rows).
inline CombinedLoss shared_reconstruction_loss(const Generator& g, const ReprogramBatch& batch, double numeric_weight,
                                               bool want_grads = true) {
    const auto pass = generator_forward(g, batch.x);
    const Matrix gen = gather_shared(pass.output(), g.shared, true);
    const Matrix real = gather_shared(batch.x, g.shared, false);
    const double inv_n = 1.0 / static_cast<double>(gen.rows());
    Matrix grad = Matrix::Zero(gen.rows(), gen.cols());
    CombinedLoss res;
    Eigen::Index at = 0;
    for (const auto& sl : g.shared) {
        const auto w = static_cast<Eigen::Index>(sl.width);
        for (Eigen::Index r = 0; r < gen.rows(); ++r) {
            if (sl.categorical) {
                for (Eigen::Index k = at; k < at + w; ++k) {
                    if (real(r, k) == 0.0) continue;
                    const double p = std::max(gen(r, k), kProbClamp);
                    res.terms.total -= real(r, k) * std::log(p) * inv_n;
                    grad(r, k) = -real(r, k) / p * inv_n;
                }
            } else {
                const double d = gen(r, at) - real(r, at);
                res.terms.total += numeric_weight * d * d * inv_n;
                grad(r, at) = 2.0 * numeric_weight * d * inv_n;
            }
        }
        at += w;
    }
    if (!want_grads) return res;
    Matrix upstream = Matrix::Zero(pass.output().rows(), pass.output().cols());
    scatter_shared_add(upstream, grad, g.shared);
    res.encoder_grads = generator_backward(g, pass, upstream);
    return res;
}

/// One D1 step: real target shared columns -> 1, generated shared columns -> 0.
/// Adds Gaussian noise to the categorical groups of `m`.
inline void add_noise(Matrix& m, const std::vector<std::pair<std::size_t, std::size_t>>& groups, double sigma,
                      Rng* rng) {
    if (sigma <= 0.0 || !rng) return;
    for (const auto& [off, width] : groups)
        for (auto c = static_cast<Eigen::Index>(off); c < static_cast<Eigen::Index>(off + width); ++c)
            for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) += sigma * rng->normal();
}

struct DiscriminatorLoss {
    double loss = 0.0;
    Gradients grads;
};

/// D1 objective: real target shared columns -> 1, generated -> 0.
inline DiscriminatorLoss realism_discriminator_loss(const Generator& g, const MlpConfig& config, const ParamSet& params,
                                                    const ReprogramBatch& batch, const Matrix& generated, bool hardened,
                                                    double noise = 0.0, Rng* rng = nullptr, bool want_grads = true) {
    Matrix real = gather_shared(batch.x, g.shared, false);
    Matrix fake = generated_shared(g, generated, hardened);
    add_noise(real, g.shared_categorical, noise, rng);
    add_noise(fake, g.shared_categorical, noise, rng);
    const auto rp = forward(config, params, real);
    const auto fp = forward(config, params, fake);
    const auto lr = bce(rp.output, constant_targets(real.rows(), 1.0));
    const auto lf = bce(fp.output, constant_targets(fake.rows(), 0.0));
    DiscriminatorLoss res{lr.loss + lf.loss, {}};
    if (!want_grads) return res;
    res.grads = backward(config, params, rp, lr.grad).grads;
    res.grads += backward(config, params, fp, lf.grad).grads;
    return res;
}

/// D2 objective: generated features -> target protected attribute.
inline DiscriminatorLoss fairness_discriminator_loss(const Generator& g, const MlpConfig& config, const ParamSet& params,
                                                     const ReprogramBatch& batch, const Matrix& generated, bool hardened,
                                                     bool want_grads = true) {
    const auto p = forward(config, params, generated_features(g, generated, hardened));
    const auto l = bce(p.output, to_targets(batch.s));
    DiscriminatorLoss res{l.loss, {}};
    if (want_grads) res.grads = backward(config, params, p, l.grad).grads;
    return res;
}

/// One D1 step.
inline double discriminator_realism_step(const Generator& g, Mlp& d1, OptimizerState& opt, const ReprogramBatch& batch,
                                         const Matrix& generated, bool hardened, double noise = 0.0,
                                         Rng* rng = nullptr) {
    auto l = realism_discriminator_loss(g, d1.config, d1.params, batch, generated, hardened, noise, rng);
    adam_step(d1.params, l.grads, opt);
    return l.loss;
}

/// One D2 step.
inline double discriminator_fairness_step(const Generator& g, Mlp& d2, OptimizerState& opt, const ReprogramBatch& batch,
                                          const Matrix& generated, bool hardened) {
    auto l = fairness_discriminator_loss(g, d2.config, d2.params, batch, generated, hardened);
    adam_step(d2.params, l.grads, opt);
    return l.loss;
}

// ---------------------------------------------------------------------------
// Evaluation

/// Generated rows decoded to the base schema: G_x features, the frozen
/// classifier's hard label, and the decoded G_s bit.
inline Dataset generate_cleaned(const Generator& g, const Classifier& clf, const Dataset& target_data) {
    const auto batch = ReprogramBatch::from(target_data);
    const Matrix out = generator_forward(g, batch.x).output();
    const EncodedLayout layout(g.base_schema());
    const auto labels = hard_labels(predict(clf, classifier_input_from_generated(clf, out)));
    Matrix full(out.rows(), static_cast<Eigen::Index>(layout.width()));
    full.leftCols(static_cast<Eigen::Index>(layout.feature_width())) =
        out.leftCols(static_cast<Eigen::Index>(layout.feature_width()));
    for (Eigen::Index r = 0; r < out.rows(); ++r) full(r, static_cast<Eigen::Index>(layout.label_offset())) = labels[static_cast<std::size_t>(r)];
    full.col(static_cast<Eigen::Index>(layout.protected_offset())) = out.col(out.cols() - 1);
    return decode(full, g.base_schema());
}

/// Accuracy of the frozen classifier on generated rows against target labels.
inline double reprogrammed_accuracy(const Generator& g, const Classifier& clf, const ReprogramBatch& batch) {
    const Matrix out = generator_forward(g, batch.x).output();
    return accuracy_from_probs(predict(clf, classifier_input_from_generated(clf, out)), batch.y);
}

/// Fresh probe predicting the target protected attribute from the generated
/// base features as released (categoricals one-hot, G_s excluded).
/// 0.5 means fair.
inline double evaluate_fairness(const Generator& g, const Dataset& target_val, std::uint64_t seed,
                                const ProbeOptions& options = {}) {
    const auto batch = ReprogramBatch::from(target_val);
    const Matrix out = generator_forward(g, batch.x).output();
    return probe_fairness(generated_features(g, out, true), batch.s, seed, options);
}

/// D2's own accuracy on a dataset (threshold 0.5, ties to class 0).
inline double discriminator_accuracy(const Generator& g, const Mlp& d2, const Dataset& target_val, bool hardened) {
    const auto batch = ReprogramBatch::from(target_val);
    const Matrix out = generator_forward(g, batch.x).output();
    const Matrix p = predict(d2, generated_features(g, out, hardened));
    std::size_t correct = 0;
    for (Eigen::Index r = 0; r < p.rows(); ++r) correct += (p(r, 0) > 0.5 ? 1 : 0) == batch.s[static_cast<std::size_t>(r)];
    return static_cast<double>(correct) / static_cast<double>(p.rows());
}

struct GeneratorEvaluation {
    double accuracy = 0.0;
    RealismResult realism;
    std::optional<double> probe;
};

inline GeneratorEvaluation evaluate_generator(const Generator& g, const Classifier& clf, const Dataset& target_data,
                                              const ReprogramConfig& cfg, bool with_probe, std::uint64_t probe_seed) {
    GeneratorEvaluation e;
    e.accuracy = reprogrammed_accuracy(g, clf, ReprogramBatch::from(target_data));
    e.realism = realism_check(target_data, generate_cleaned(g, clf, target_data), g.alignment, cfg.tv_threshold);
    if (with_probe) e.probe = evaluate_fairness(g, target_data, probe_seed, cfg.probe);
    return e;
}

// ---------------------------------------------------------------------------
// Training

struct Checkpoint {
    std::size_t epoch = 0;
    MlpParams encoder;
    Discriminators discriminators;
    GeneratorEvaluation eval;
};

struct CheckpointSummary {
    std::size_t epoch = 0;
    double accuracy = 0.0;
    double max_tv = 0.0;
    bool realism_pass = false;
    std::optional<double> probe;
    std::vector<ColumnVerdict> columns;
};

struct ReprogramResult {
    Generator generator;
    Discriminators discriminators;
    MetricsReport report; // on the validation set
    std::vector<LossBreakdown> history; // mean terms per epoch
    std::vector<CheckpointSummary> checkpoints;
    std::size_t epochs_run = 0;
    std::size_t selected_epoch = 0;
};

namespace detail {

/// Picks the checkpoint to keep. Eligible: realism passes and accuracy is
/// within the tolerance of the best checkpoint accuracy. GAN keeps the most
/// accurate eligible one, FAIRGAN the one whose probe is closest to 0.5.
/// Without eligible checkpoints, the one with the smallest worst-column TV.
inline std::size_t select_checkpoint(const std::vector<Checkpoint>& cps, const ReprogramConfig& cfg) {
    double best_acc = 0.0;
    for (const auto& c : cps) best_acc = std::max(best_acc, c.eval.accuracy);
    std::optional<std::size_t> pick;
    for (std::size_t i = 0; i < cps.size(); ++i) {
        const auto& e = cps[i].eval;
        if (!e.realism.pass || e.accuracy < best_acc - cfg.accuracy_tolerance) continue;
        if (!pick) {
            pick = i;
            continue;
        }
        const auto& b = cps[*pick].eval;
        if (cfg.d2_active() && e.probe && b.probe) {
            const double de = std::abs(*e.probe - 0.5), db = std::abs(*b.probe - 0.5);
            if (de < db || (de == db && e.accuracy > b.accuracy)) pick = i;
        } else if (e.accuracy > b.accuracy) {
            pick = i;
        }
    }
    if (pick) return *pick;
    std::size_t fallback = 0;
    for (std::size_t i = 1; i < cps.size(); ++i)
        if (cps[i].eval.realism.max_tv() < cps[fallback].eval.realism.max_tv()) fallback = i;
    return fallback;
}

inline void check_finite(const LossBreakdown& t, std::size_t epoch) {
    if (std::isfinite(t.total)) return;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "train_reprogram: loss diverged at epoch %zu (realism=%g l2=%g classification=%g fairness=%g)", epoch,
                  t.realism, t.l2, t.classification, t.fairness);
    throw Error(buf);
}

} // namespace detail

/// Alternating training: per batch, discriminator steps on D1 (and D2 in
/// FAIRGAN mode) followed by one encoder step on the combined loss.
/// CLASSIFY_ONLY early-stops on validation accuracy; GAN/FAIRGAN train for
/// the full budget and keep the checkpoint picked by select_checkpoint.
inline ReprogramResult train_reprogram(Generator g, const Classifier& clf, const Dataset& train, const Dataset& val,
                                       const ReprogramConfig& cfg) {
    cfg.validate();
    if (!clf.frozen || !g.vae->frozen) throw Error("train_reprogram: classifier and VAE must be frozen");
    if (EncodedLayout(clf.schema).feature_width() != g.base_feature_width())
        throw Error("train_reprogram: classifier input does not match the VAE's base schema");
    if (!(train.schema() == g.target_schema) || !(val.schema() == g.target_schema))
        throw Error("train_reprogram: data schema differs from the generator's target schema");

    Rng rng(Rng::derive(cfg.seed, 0x7e9));
    auto disc = make_discriminators(g, cfg);
    auto enc_opt = OptimizerState::for_params(g.encoder.params, {cfg.eta, cfg.adam_beta1});
    auto d1_opt = OptimizerState::for_params(disc.d1.params, {cfg.eta, cfg.adam_beta1});
    auto d2_opt = OptimizerState::for_params(disc.d2.params, {cfg.eta, cfg.adam_beta1});
    const auto data = ReprogramBatch::from(train);
    const auto val_batch = ReprogramBatch::from(val);

    ReprogramResult res;
    std::vector<Checkpoint> checkpoints;
    double best_val = -1.0;
    std::size_t since_best = 0;
    MlpParams best_encoder = g.encoder.params;
    std::size_t best_epoch = 0;

    const auto n = static_cast<std::size_t>(data.x.rows());
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    auto batch_at = [&](std::size_t start) {
        const std::size_t end = std::min(n, start + cfg.batch_size);
        return data.rows(std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                  order.begin() + static_cast<std::ptrdiff_t>(end)));
    };
    if (cfg.warmup_epochs > 0) {
        auto warm_opt = OptimizerState::for_params(g.encoder.params, {cfg.warmup_learning_rate});
        for (std::size_t epoch = 1; epoch <= cfg.warmup_epochs; ++epoch) {
            rng.shuffle(order);
            for (std::size_t start = 0; start < n; start += cfg.batch_size) {
                const auto loss = shared_reconstruction_loss(g, batch_at(start), cfg.warmup_numeric_weight);
                if (!std::isfinite(loss.terms.total)) throw Error("train_reprogram: warm-up loss diverged");
                adam_step(g.encoder.params, loss.encoder_grads, warm_opt);
            }
        }
    }
    auto add_checkpoint = [&](std::size_t epoch) {
        Checkpoint cp;
        cp.epoch = epoch;
        cp.encoder = g.encoder.params;
        cp.discriminators = disc;
        cp.eval = evaluate_generator(g, clf, val, cfg, cfg.d2_active(), Rng::derive(cfg.seed, 0x9b0 + epoch));
        checkpoints.push_back(std::move(cp));
    };
    // the warmed-up generator is itself a candidate
    if (cfg.d1_active() && cfg.warmup_epochs > 0) add_checkpoint(0);
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        LossBreakdown mean;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const auto batch = batch_at(start);
            if (cfg.d1_active() || cfg.d2_active()) {
                for (std::size_t k = 0; k < cfg.discriminator_steps; ++k) {
                    const Matrix generated = generator_forward(g, batch.x).output();
                    if (cfg.d1_active()) discriminator_realism_step(g, disc.d1, d1_opt, batch, generated, cfg.straight_through,
                                                                     cfg.instance_noise, &rng);
                    if (cfg.d2_active()) discriminator_fairness_step(g, disc.d2, d2_opt, batch, generated, cfg.straight_through);
                }
            }
            const auto loss = combined_loss(g, disc, clf, batch, cfg);
            detail::check_finite(loss.terms, epoch);
            adam_step(g.encoder.params, loss.encoder_grads, enc_opt);
            mean.total += loss.terms.total;
            mean.realism += loss.terms.realism;
            mean.l2 += loss.terms.l2;
            mean.classification += loss.terms.classification;
            mean.fairness += loss.terms.fairness;
            ++batches;
        }
        const double inv = 1.0 / static_cast<double>(batches);
        mean.total *= inv;
        mean.realism *= inv;
        mean.l2 *= inv;
        mean.classification *= inv;
        mean.fairness *= inv;
        mean.gamma = cfg.gamma;
        mean.delta = cfg.effective_delta();
        res.history.push_back(mean);
        res.epochs_run = epoch;

        if (!cfg.d1_active()) {
            const double acc = reprogrammed_accuracy(g, clf, val_batch);
            if (acc > best_val) {
                best_val = acc;
                best_encoder = g.encoder.params;
                best_epoch = epoch;
                since_best = 0;
            } else if (++since_best >= cfg.patience) {
                break;
            }
        } else if (epoch % cfg.checkpoint_every == 0 || epoch == cfg.epochs) {
            add_checkpoint(epoch);
        }
    }

    MetricsReport& rep = res.report;
    if (!cfg.d1_active()) {
        g.encoder.params = best_encoder;
        res.selected_epoch = best_epoch;
        const auto eval = evaluate_generator(g, clf, val, cfg, false, 0);
        rep.accuracy = eval.accuracy;
        rep.set_realism(eval.realism);
    } else {
        for (const auto& c : checkpoints)
            res.checkpoints.push_back({c.epoch, c.eval.accuracy, c.eval.realism.max_tv(), c.eval.realism.pass, c.eval.probe, c.eval.realism.columns});
        const auto& cp = checkpoints[detail::select_checkpoint(checkpoints, cfg)];
        g.encoder.params = cp.encoder;
        disc = cp.discriminators;
        res.selected_epoch = cp.epoch;
        rep.accuracy = cp.eval.accuracy;
        rep.set_realism(cp.eval.realism);
        rep.probe_accuracy = cp.eval.probe;
        if (cfg.d2_active()) rep.discriminator_accuracy = discriminator_accuracy(g, disc.d2, val, cfg.straight_through);
    }
    rep.mode = to_string(cfg.mode);
    rep.gamma = cfg.gamma;
    rep.delta = cfg.effective_delta();
    rep.eta = cfg.eta;
    rep.seed = cfg.seed;
    rep.epochs_run = res.epochs_run;
    rep.selected_epoch = res.selected_epoch;
    res.generator = std::move(g);
    res.discriminators = std::move(disc);
    return res;
}

} // namespace fairrepro
