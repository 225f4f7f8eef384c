#pragma once

// Variational auto-encoder over the features and protected bit of the base
// schema. After training it is frozen; its decoder becomes the output stage
// of the reprogramming generator.

#include <string>
#include <vector>

#include <json.hpp>

#include "diffnet.hpp"
#include "metrics.hpp"
#include "tabular.hpp"

namespace fairrepro {

struct VaeConfig {
    std::size_t latent_dim = 10;
    std::vector<std::size_t> hidden = {64, 64};
    Activation hidden_activation = Activation::relu;
    std::size_t epochs = 100;
    std::size_t batch_size = 128;
    double learning_rate = 1e-3;
    /// Scale on the squared error of numeric columns, i.e. the precision of
    /// a fixed-variance Gaussian likelihood (1 / (2 sigma^2)).
    double numeric_weight = 200.0;
};

struct VaeModel {
    Schema schema; // base schema; the input is its features plus the protected bit
    std::size_t latent_dim = 0;
    Mlp encoder; // -> [mu, logvar]
    Mlp decoder; // -> features (softmax per categorical, sigmoid per numeric) + sigmoid protected bit
    bool frozen = false;

    std::size_t data_width() const { return encoder.config.input_width(); }
};

struct LatentBatch {
    Matrix mu;
    Matrix logvar;
    Matrix z;
    Matrix noise;
};

/// Output segments of the decoder for a base schema.
inline std::vector<OutputSegment> decoder_segments(const Schema& schema) {
    const EncodedLayout layout(schema);
    std::vector<OutputSegment> segs;
    for (const auto& g : layout.feature_groups())
        segs.push_back({g.offset, g.width, g.kind == ColumnKind::categorical ? Activation::softmax : Activation::sigmoid});
    segs.push_back({layout.feature_width(), 1, Activation::sigmoid});
    return segs;
}

inline VaeModel make_vae(const Schema& schema, const VaeConfig& cfg, Rng& rng) {
    if (cfg.latent_dim == 0) throw Error("vae: latent dimension must be positive");
    const EncodedLayout layout(schema);
    const std::size_t width = layout.feature_width() + 1;
    VaeModel m;
    m.schema = schema;
    m.latent_dim = cfg.latent_dim;
    m.encoder = Mlp::create(MlpConfig::make(width, cfg.hidden, 2 * cfg.latent_dim, Activation::identity,
                                            cfg.hidden_activation),
                            rng);
    MlpConfig dec = MlpConfig::make(cfg.latent_dim, cfg.hidden, width, Activation::identity, cfg.hidden_activation);
    dec.output = decoder_segments(schema);
    dec.validate();
    m.decoder = Mlp::create(std::move(dec), rng);
    return m;
}

inline Matrix reparameterize(const Matrix& mu, const Matrix& logvar, const Matrix& noise) {
    if (mu.rows() != logvar.rows() || mu.cols() != logvar.cols() || mu.rows() != noise.rows() || mu.cols() != noise.cols())
        throw Error("reparameterize: shape mismatch");
    return mu + ((0.5 * logvar.array()).exp() * noise.array()).matrix();
}

inline Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal();
    return m;
}

/// Mean over the batch of 0.5 * sum(mu^2 + exp(logvar) - 1 - logvar).
inline double kl_divergence(const Matrix& mu, const Matrix& logvar) {
    return 0.5 * (mu.array().square() + logvar.array().exp() - 1.0 - logvar.array()).sum() /
           static_cast<double>(mu.rows());
}

struct ReconstructionTerm {
    double loss = 0.0;
    Matrix grad; // with respect to the decoder output
};

/// Per-row reconstruction loss averaged over the batch: cross-entropy for
/// categorical groups and the protected bit, weighted squared error for
/// numeric columns.
inline ReconstructionTerm reconstruction_loss(const Schema& schema, const Matrix& target, const Matrix& output,
                                              double numeric_weight) {
    const EncodedLayout layout(schema);
    const double inv_n = 1.0 / static_cast<double>(target.rows());
    ReconstructionTerm res;
    res.grad = Matrix::Zero(output.rows(), output.cols());
    for (Eigen::Index r = 0; r < target.rows(); ++r) {
        for (const auto& g : layout.feature_groups()) {
            const auto off = static_cast<Eigen::Index>(g.offset);
            if (g.kind == ColumnKind::categorical) {
                for (Eigen::Index k = off; k < off + static_cast<Eigen::Index>(g.width); ++k) {
                    const double x = target(r, k);
                    if (x == 0.0) continue;
                    const double p = std::max(output(r, k), kProbClamp);
                    res.loss -= x * std::log(p) * inv_n;
                    res.grad(r, k) = -x / p * inv_n;
                }
            } else {
                const double d = output(r, off) - target(r, off);
                res.loss += numeric_weight * d * d * inv_n;
                res.grad(r, off) = 2.0 * numeric_weight * d * inv_n;
            }
        }
        const auto sb = static_cast<Eigen::Index>(layout.feature_width());
        const double x = target(r, sb);
        const double p = std::clamp(output(r, sb), kProbClamp, 1.0 - kProbClamp);
        res.loss -= (x * std::log(p) + (1.0 - x) * std::log(1.0 - p)) * inv_n;
        res.grad(r, sb) = -(x / p - (1.0 - x) / (1.0 - p)) * inv_n;
    }
    return res;
}

struct ElboResult {
    double loss = 0.0;
    double reconstruction = 0.0;
    double kl = 0.0;
    Gradients encoder_grads;
    Gradients decoder_grads;
};

/// Negative ELBO of a batch (features + protected bit) for the given noise.
inline ElboResult elbo_loss(const Matrix& batch, const VaeModel& model, const Matrix& noise, double numeric_weight,
                            bool want_grads = true) {
    if (static_cast<std::size_t>(batch.cols()) != model.data_width()) throw Error("elbo_loss: batch width mismatch");
    const auto L = static_cast<Eigen::Index>(model.latent_dim);
    const auto enc = forward(model.encoder.config, model.encoder.params, batch);
    const Matrix mu = enc.output.leftCols(L);
    const Matrix logvar = enc.output.rightCols(L);
    const Matrix z = reparameterize(mu, logvar, noise);
    const auto dec = forward(model.decoder.config, model.decoder.params, z);
    const auto rec = reconstruction_loss(model.schema, batch, dec.output, numeric_weight);

    ElboResult res;
    res.reconstruction = rec.loss;
    res.kl = kl_divergence(mu, logvar);
    res.loss = res.reconstruction + res.kl;
    if (!want_grads) return res;

    const auto dec_bw = backward(model.decoder.config, model.decoder.params, dec, rec.grad);
    res.decoder_grads = dec_bw.grads;
    const double inv_n = 1.0 / static_cast<double>(batch.rows());
    const Matrix half_sigma = (0.5 * logvar.array()).exp().matrix();
    Matrix upstream(batch.rows(), 2 * L);
    upstream.leftCols(L) = dec_bw.input_grad + mu * inv_n;
    upstream.rightCols(L) = (dec_bw.input_grad.array() * noise.array() * 0.5 * half_sigma.array()).matrix() +
                            (0.5 * (logvar.array().exp() - 1.0) * inv_n).matrix();
    res.encoder_grads = backward(model.encoder.config, model.encoder.params, enc, upstream).grads;
    return res;
}

inline LatentBatch encode_latent(const VaeModel& model, const Matrix& batch, const Matrix* noise = nullptr) {
    const auto L = static_cast<Eigen::Index>(model.latent_dim);
    const Matrix h = predict(model.encoder, batch);
    LatentBatch lb;
    lb.mu = h.leftCols(L);
    lb.logvar = h.rightCols(L);
    lb.noise = noise ? *noise : Matrix::Zero(batch.rows(), L);
    lb.z = reparameterize(lb.mu, lb.logvar, lb.noise);
    return lb;
}

/// Decoder forward pass on latent codes. Requires a frozen model.
inline ForwardPass decode_frozen(const VaeModel& model, const Matrix& z) {
    if (!model.frozen) throw Error("decode_frozen: VAE is not frozen");
    if (static_cast<std::size_t>(z.cols()) != model.latent_dim) throw Error("decode_frozen: latent width mismatch");
    return forward(model.decoder.config, model.decoder.params, z);
}

inline ForwardPass decode_frozen(const VaeModel& model, const LatentBatch& latent) { return decode_frozen(model, latent.z); }

/// Gradient with respect to the latent codes only; decoder weights receive
/// nothing.
inline Matrix decode_frozen_input_grad(const VaeModel& model, const ForwardPass& pass, const Matrix& upstream) {
    if (!model.frozen) throw Error("decode_frozen: VAE is not frozen");
    return backward(model.decoder.config, model.decoder.params, pass, upstream).input_grad;
}

/// Deterministic reconstruction through the posterior means. The label is
/// carried over unchanged (the VAE does not model it).
inline Dataset reconstruct(const VaeModel& model, const Dataset& data) {
    if (!(data.schema() == model.schema)) throw Error("reconstruct: dataset schema differs from the VAE's schema");
    const EncodedLayout layout(model.schema);
    const auto enc = encode(data);
    const Matrix x = enc.features_with_protected(layout);
    const auto latent = encode_latent(model, x);
    const Matrix out = predict(model.decoder, latent.mu);
    Matrix full = enc.rows;
    full.leftCols(static_cast<Eigen::Index>(layout.feature_width())) =
        out.leftCols(static_cast<Eigen::Index>(layout.feature_width()));
    full.col(static_cast<Eigen::Index>(layout.protected_offset())) = out.col(out.cols() - 1);
    return decode(full, model.schema);
}

/// TV distance between data and its reconstruction for every column.
inline std::vector<ColumnVerdict> reconstruction_tv(const VaeModel& model, const Dataset& data,
                                                    double threshold = kDefaultTvThreshold) {
    const Dataset rec = reconstruct(model, data);
    std::vector<std::string> names;
    for (const auto& c : data.schema().columns()) names.push_back(c.name);
    return realism_check(data, rec, names, threshold).columns;
}

struct VaeEpoch {
    std::size_t epoch;
    double train_loss;
    double val_loss;
};

struct VaeTrainResult {
    VaeModel model;
    double val_elbo = 0.0; // negative ELBO on the validation set
    std::vector<VaeEpoch> curve;
    std::vector<ColumnVerdict> reconstruction;
    std::vector<std::string> warnings;
};

/// Validation loss with noise drawn from a fixed stream, so it is a pure
/// function of the parameters.
inline double evaluate_elbo(const VaeModel& model, const Matrix& x, double numeric_weight, std::uint64_t seed) {
    Rng rng(seed);
    const Matrix noise = standard_normal(x.rows(), static_cast<Eigen::Index>(model.latent_dim), rng);
    return elbo_loss(x, model, noise, numeric_weight, false).loss;
}

inline VaeTrainResult train_vae(const Dataset& train, const Dataset& val, const VaeConfig& cfg, std::uint64_t seed) {
    if (!(train.schema() == val.schema())) throw Error("train_vae: train and validation schemas differ");
    if (cfg.batch_size == 0) throw Error("train_vae: batch size must be positive");
    Rng rng(seed);
    VaeTrainResult result;
    result.model = make_vae(train.schema(), cfg, rng);
    auto& model = result.model;
    const EncodedLayout layout(train.schema());
    if (cfg.latent_dim >= layout.feature_width() + 1)
        result.warnings.push_back("latent dimension " + std::to_string(cfg.latent_dim) +
                                  " is not smaller than the encoded width " +
                                  std::to_string(layout.feature_width() + 1));

    const Matrix x_train = encode(train).features_with_protected(layout);
    const Matrix x_val = encode(val).features_with_protected(layout);
    auto enc_opt = OptimizerState::for_params(model.encoder.params, {cfg.learning_rate});
    auto dec_opt = OptimizerState::for_params(model.decoder.params, {cfg.learning_rate});
    const auto L = static_cast<Eigen::Index>(cfg.latent_dim);
    const std::uint64_t val_seed = Rng::derive(seed, 0x7a1);

    const auto n = static_cast<std::size_t>(x_train.rows());
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double total = 0.0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t end = std::min(n, start + cfg.batch_size);
            Matrix xb(static_cast<Eigen::Index>(end - start), x_train.cols());
            for (std::size_t i = start; i < end; ++i)
                xb.row(static_cast<Eigen::Index>(i - start)) = x_train.row(static_cast<Eigen::Index>(order[i]));
            const Matrix noise = standard_normal(xb.rows(), L, rng);
            const auto res = elbo_loss(xb, model, noise, cfg.numeric_weight);
            if (!std::isfinite(res.loss)) throw Error("train_vae: loss diverged at epoch " + std::to_string(epoch));
            total += res.loss * static_cast<double>(end - start);
            adam_step(model.encoder.params, res.encoder_grads, enc_opt);
            adam_step(model.decoder.params, res.decoder_grads, dec_opt);
        }
        result.curve.push_back({epoch, total / static_cast<double>(n),
                                evaluate_elbo(model, x_val, cfg.numeric_weight, val_seed)});
    }
    model.frozen = true;
    result.val_elbo = evaluate_elbo(model, x_val, cfg.numeric_weight, val_seed);
    result.reconstruction = reconstruction_tv(model, val);
    return result;
}

inline constexpr const char* kVaeFormat = "fairrepro.vae.v1";

inline nlohmann::json vae_to_json(const VaeModel& m) {
    return {{"format", kVaeFormat},
            {"schema", schema_to_json(m.schema)},
            {"latent_dim", m.latent_dim},
            {"frozen", m.frozen},
            {"encoder", mlp_to_json(m.encoder)},
            {"decoder", mlp_to_json(m.decoder)}};
}

inline VaeModel vae_from_json(const nlohmann::json& j) {
    if (j.value("format", std::string{}) != kVaeFormat)
        throw Error(std::string("checkpoint: expected format '") + kVaeFormat + "'");
    VaeModel m;
    m.schema = schema_from_json(j.at("schema"));
    m.latent_dim = j.at("latent_dim").get<std::size_t>();
    m.frozen = j.at("frozen").get<bool>();
    m.encoder = mlp_from_json(j.at("encoder"));
    m.decoder = mlp_from_json(j.at("decoder"));
    if (m.decoder.config.input_width() != m.latent_dim || m.encoder.config.output_width() != 2 * m.latent_dim ||
        m.decoder.config.output_width() != m.encoder.config.input_width())
        throw Error("checkpoint: VAE encoder/decoder shapes are inconsistent");
    return m;
}

} // namespace fairrepro
