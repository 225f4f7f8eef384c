#pragma once

// Dense multilayer perceptrons with explicit forward and backward passes,
// the loss functions used by every model, an Adam optimizer, and a
// finite-difference gradient checker. Everything is double precision.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "common.hpp"

namespace fairrepro {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { identity, relu, tanh, sigmoid, softmax };

inline const char* to_string(Activation a) {
    switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::softmax: return "softmax";
    }
    return "?";
}

inline Activation activation_from_string(const std::string& s) {
    for (auto a : {Activation::identity, Activation::relu, Activation::tanh, Activation::sigmoid, Activation::softmax})
        if (s == to_string(a)) return a;
    throw Error("unknown activation '" + s + "'");
}

/// A block of output units sharing one output activation. Softmax is
/// normalized within its own block only.
struct OutputSegment {
    std::size_t start = 0;
    std::size_t width = 0;
    Activation activation = Activation::identity;
    bool operator==(const OutputSegment&) const = default;
};

struct MlpConfig {
    std::vector<std::size_t> layer_widths; // input, hidden..., output
    Activation hidden_activation = Activation::relu;
    std::vector<OutputSegment> output; // must tile the output width

    std::size_t input_width() const { return layer_widths.front(); }
    std::size_t output_width() const { return layer_widths.back(); }
    std::size_t layer_count() const { return layer_widths.size() - 1; }

    /// input -> hidden... -> output with one activation over the whole output.
    static MlpConfig make(std::size_t input, std::vector<std::size_t> hidden, std::size_t output,
                          Activation out_act = Activation::identity, Activation hidden_act = Activation::relu) {
        MlpConfig c;
        c.layer_widths.push_back(input);
        c.layer_widths.insert(c.layer_widths.end(), hidden.begin(), hidden.end());
        c.layer_widths.push_back(output);
        c.hidden_activation = hidden_act;
        c.output = {{0, output, out_act}};
        c.validate();
        return c;
    }

    void validate() const {
        if (layer_widths.size() < 2) throw Error("mlp config: need at least input and output widths");
        for (auto w : layer_widths)
            if (w == 0) throw Error("mlp config: layer widths must be positive");
        if (hidden_activation != Activation::relu && hidden_activation != Activation::tanh)
            throw Error("mlp config: hidden activation must be relu or tanh");
        std::size_t next = 0;
        for (const auto& seg : output) {
            if (seg.start != next || seg.width == 0) throw Error("mlp config: output segments must tile the output");
            if (seg.activation == Activation::relu || seg.activation == Activation::tanh)
                throw Error("mlp config: output activation must be identity, sigmoid or softmax");
            if (seg.activation == Activation::softmax && seg.width < 2)
                throw Error("mlp config: softmax segment needs width >= 2");
            next += seg.width;
        }
        if (next != output_width()) throw Error("mlp config: output segments must tile the output");
    }

    bool operator==(const MlpConfig&) const = default;
};

/// Weights are stored out x in; a batch is rows x features.
struct ParamSet {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;

    std::size_t count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l < weights.size(); ++l)
            n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
        return n;
    }

    /// Row-major weights then bias, layer by layer.
    Vector flatten() const {
        Vector out(static_cast<Eigen::Index>(count()));
        Eigen::Index k = 0;
        for (std::size_t l = 0; l < weights.size(); ++l) {
            for (Eigen::Index i = 0; i < weights[l].rows(); ++i)
                for (Eigen::Index j = 0; j < weights[l].cols(); ++j) out(k++) = weights[l](i, j);
            for (Eigen::Index i = 0; i < biases[l].size(); ++i) out(k++) = biases[l](i);
        }
        return out;
    }

    void assign(const Vector& flat) {
        if (static_cast<std::size_t>(flat.size()) != count()) throw Error("parameter vector has wrong length");
        Eigen::Index k = 0;
        for (std::size_t l = 0; l < weights.size(); ++l) {
            for (Eigen::Index i = 0; i < weights[l].rows(); ++i)
                for (Eigen::Index j = 0; j < weights[l].cols(); ++j) weights[l](i, j) = flat(k++);
            for (Eigen::Index i = 0; i < biases[l].size(); ++i) biases[l](i) = flat(k++);
        }
    }

    void set_zero() {
        for (auto& w : weights) w.setZero();
        for (auto& b : biases) b.setZero();
    }

    bool same_shape(const ParamSet& o) const {
        if (weights.size() != o.weights.size()) return false;
        for (std::size_t l = 0; l < weights.size(); ++l)
            if (weights[l].rows() != o.weights[l].rows() || weights[l].cols() != o.weights[l].cols() ||
                biases[l].size() != o.biases[l].size())
                return false;
        return true;
    }

    std::uint64_t hash() const {
        Fnv1a h;
        const Vector flat = flatten();
        h.update(std::span<const double>(flat.data(), static_cast<std::size_t>(flat.size())));
        return h.digest();
    }

    bool operator==(const ParamSet& o) const {
        return same_shape(o) && flatten() == o.flatten();
    }
};

struct MlpParams : ParamSet {};

struct Gradients : ParamSet {
    static Gradients zeros_like(const ParamSet& p) {
        Gradients g;
        for (const auto& w : p.weights) g.weights.push_back(Matrix::Zero(w.rows(), w.cols()));
        for (const auto& b : p.biases) g.biases.push_back(Vector::Zero(b.size()));
        return g;
    }
    Gradients& operator+=(const ParamSet& o) {
        for (std::size_t l = 0; l < weights.size(); ++l) {
            weights[l] += o.weights[l];
            biases[l] += o.biases[l];
        }
        return *this;
    }
    Gradients& operator*=(double k) {
        for (auto& w : weights) w *= k;
        for (auto& b : biases) b *= k;
        return *this;
    }
};

inline void check_shapes(const MlpConfig& config, const ParamSet& params) {
    if (params.weights.size() != config.layer_count() || params.biases.size() != config.layer_count())
        throw Error("mlp: parameter layer count does not match config");
    for (std::size_t l = 0; l < config.layer_count(); ++l) {
        const auto in = static_cast<Eigen::Index>(config.layer_widths[l]);
        const auto out = static_cast<Eigen::Index>(config.layer_widths[l + 1]);
        if (params.weights[l].rows() != out || params.weights[l].cols() != in || params.biases[l].size() != out)
            throw Error("mlp: parameter shapes do not match config at layer " + std::to_string(l));
    }
}

/// Uniform Glorot initialization; biases start at zero.
inline MlpParams init_params(const MlpConfig& config, Rng& rng) {
    config.validate();
    MlpParams p;
    for (std::size_t l = 0; l < config.layer_count(); ++l) {
        const auto in = config.layer_widths[l];
        const auto out = config.layer_widths[l + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        Matrix w(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-limit, limit);
        p.weights.push_back(std::move(w));
        p.biases.push_back(Vector::Zero(static_cast<Eigen::Index>(out)));
    }
    return p;
}

/// A network bundled with its configuration.
struct Mlp {
    MlpConfig config;
    MlpParams params;

    static Mlp create(MlpConfig config, Rng& rng) {
        auto params = init_params(config, rng);
        return {std::move(config), std::move(params)};
    }
};

// ---------------------------------------------------------------------------
// Forward / backward

/// Every intermediate needed by backward: layer inputs and pre-activations.
struct ForwardPass {
    std::vector<Matrix> inputs; // inputs[l] feeds layer l; inputs[0] is the batch
    std::vector<Matrix> pre;    // pre[l] = inputs[l] * W_l^T + b_l
    Matrix output;
};

namespace detail {

inline void apply_hidden(Activation a, const Matrix& z, Matrix& out) {
    if (a == Activation::relu) out = z.cwiseMax(0.0);
    else out = z.array().tanh().matrix();
}

inline void apply_output(const std::vector<OutputSegment>& segments, const Matrix& z, Matrix& out) {
    out.resize(z.rows(), z.cols());
    for (const auto& seg : segments) {
        const auto s = static_cast<Eigen::Index>(seg.start);
        const auto w = static_cast<Eigen::Index>(seg.width);
        auto zin = z.middleCols(s, w);
        auto o = out.middleCols(s, w);
        switch (seg.activation) {
        case Activation::identity: o = zin; break;
        case Activation::sigmoid: o = (1.0 / (1.0 + (-zin.array()).exp())).matrix(); break;
        case Activation::softmax:
            for (Eigen::Index r = 0; r < z.rows(); ++r) {
                const double m = zin.row(r).maxCoeff();
                Eigen::RowVectorXd e = (zin.row(r).array() - m).exp().matrix();
                o.row(r) = e / e.sum();
            }
            break;
        default: throw Error("invalid output activation");
        }
    }
}

} // namespace detail

inline ForwardPass forward(const MlpConfig& config, const ParamSet& params, const Matrix& batch) {
    check_shapes(config, params);
    if (static_cast<std::size_t>(batch.cols()) != config.input_width())
        throw Error("forward: batch width " + std::to_string(batch.cols()) + " != input width " +
                    std::to_string(config.input_width()));
    ForwardPass pass;
    pass.inputs.reserve(config.layer_count());
    pass.pre.reserve(config.layer_count());
    Matrix a = batch;
    for (std::size_t l = 0; l < config.layer_count(); ++l) {
        Matrix z = a * params.weights[l].transpose();
        z.rowwise() += params.biases[l].transpose();
        pass.inputs.push_back(std::move(a));
        Matrix next;
        if (l + 1 < config.layer_count()) detail::apply_hidden(config.hidden_activation, z, next);
        else detail::apply_output(config.output, z, next);
        pass.pre.push_back(std::move(z));
        a = std::move(next);
    }
    pass.output = std::move(a);
    return pass;
}

inline Matrix predict(const Mlp& net, const Matrix& batch) { return forward(net.config, net.params, batch).output; }

struct BackwardResult {
    Gradients grads;
    Matrix input_grad;
};

/// Reverse-mode pass for a scalar loss whose gradient with respect to the
/// network output is `upstream`.
inline BackwardResult backward(const MlpConfig& config, const ParamSet& params, const ForwardPass& pass,
                               const Matrix& upstream) {
    check_shapes(config, params);
    if (upstream.rows() != pass.output.rows() || upstream.cols() != pass.output.cols())
        throw Error("backward: upstream gradient shape does not match network output");
    BackwardResult res;
    res.grads = Gradients::zeros_like(params);

    // output activation Jacobian
    Matrix delta(upstream.rows(), upstream.cols());
    for (const auto& seg : config.output) {
        const auto s = static_cast<Eigen::Index>(seg.start);
        const auto w = static_cast<Eigen::Index>(seg.width);
        auto g = upstream.middleCols(s, w);
        auto y = pass.output.middleCols(s, w);
        auto d = delta.middleCols(s, w);
        switch (seg.activation) {
        case Activation::identity: d = g; break;
        case Activation::sigmoid: d = (g.array() * y.array() * (1.0 - y.array())).matrix(); break;
        case Activation::softmax: {
            const Vector dot = (g.array() * y.array()).rowwise().sum().matrix();
            d = (y.array() * (g.colwise() - dot).array()).matrix();
            break;
        }
        default: throw Error("invalid output activation");
        }
    }

    for (std::size_t l = config.layer_count(); l-- > 0;) {
        res.grads.weights[l] = delta.transpose() * pass.inputs[l];
        res.grads.biases[l] = delta.colwise().sum().transpose();
        Matrix down = delta * params.weights[l];
        if (l > 0) {
            const Matrix& z = pass.pre[l - 1];
            if (config.hidden_activation == Activation::relu)
                down = (down.array() * (z.array() > 0.0).cast<double>()).matrix();
            else
                down = (down.array() * (1.0 - pass.inputs[l].array().square())).matrix();
        }
        delta = std::move(down);
    }
    res.input_grad = std::move(delta);
    return res;
}

// ---------------------------------------------------------------------------
// Losses. Each returns the mean loss over the batch and its gradient with
// respect to the network output that produced it.

inline constexpr double kProbClamp = 1e-12;

struct LossResult {
    double loss = 0.0;
    Matrix grad;
    bool clamped = false;
};

enum class GradientWrt { probabilities, logits };

/// Mean of -ln p[target]. With GradientWrt::logits the returned gradient is
/// the softmax-fused (p - onehot) / n, valid only when p came from a softmax.
inline LossResult cross_entropy(const Matrix& probs, const std::vector<int>& targets,
                                GradientWrt wrt = GradientWrt::probabilities) {
    if (static_cast<std::size_t>(probs.rows()) != targets.size())
        throw Error("cross_entropy: row count does not match target count");
    if (targets.empty()) throw Error("cross_entropy: empty batch");
    LossResult res;
    res.grad = Matrix::Zero(probs.rows(), probs.cols());
    const double inv_n = 1.0 / static_cast<double>(targets.size());
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        if (std::abs(probs.row(r).sum() - 1.0) > 1e-6)
            throw Error("cross_entropy: probability row " + std::to_string(r) + " does not sum to 1");
        const int t = targets[static_cast<std::size_t>(r)];
        if (t < 0 || t >= probs.cols()) throw Error("cross_entropy: target index out of range");
        double p = probs(r, t);
        if (p < kProbClamp) {
            p = kProbClamp;
            res.clamped = true;
        }
        res.loss -= std::log(p) * inv_n;
        if (wrt == GradientWrt::probabilities) {
            res.grad(r, t) = -inv_n / p;
        } else {
            res.grad.row(r) = probs.row(r) * inv_n;
            res.grad(r, t) -= inv_n;
        }
    }
    return res;
}

/// Mean binary cross-entropy of sigmoid scores (n x 1) against targets in
/// [0, 1]. Targets are normally 0/1; the fairness fooling term uses 0.5.
inline LossResult bce(const Matrix& scores, const Vector& targets) {
    if (scores.cols() != 1 || scores.rows() != targets.size()) throw Error("bce: shape mismatch");
    if (scores.rows() == 0) throw Error("bce: empty batch");
    LossResult res;
    res.grad = Matrix::Zero(scores.rows(), 1);
    const double inv_n = 1.0 / static_cast<double>(scores.rows());
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
        double s = scores(r, 0);
        const double y = targets(r);
        if (s < kProbClamp) {
            s = kProbClamp;
            res.clamped = true;
        } else if (s > 1.0 - kProbClamp) {
            s = 1.0 - kProbClamp;
            res.clamped = true;
        }
        double term = 0.0;
        if (y > 0.0) term -= y * std::log(s);
        if (y < 1.0) term -= (1.0 - y) * std::log(1.0 - s);
        res.loss += term * inv_n;
        res.grad(r, 0) = -(y / s - (1.0 - y) / (1.0 - s)) * inv_n;
    }
    return res;
}

inline Vector constant_targets(Eigen::Index n, double value) { return Vector::Constant(n, value); }

inline Vector to_targets(const std::vector<int>& labels) {
    Vector v(static_cast<Eigen::Index>(labels.size()));
    for (std::size_t i = 0; i < labels.size(); ++i) v(static_cast<Eigen::Index>(i)) = labels[i];
    return v;
}

/// lambda * sum of squared weights. Biases are not penalized.
inline std::pair<double, Gradients> l2_penalty(const ParamSet& params, double lambda) {
    if (lambda < 0.0) throw Error("l2_penalty: coefficient must be nonnegative");
    auto grads = Gradients::zeros_like(params);
    double loss = 0.0;
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        loss += lambda * params.weights[l].squaredNorm();
        grads.weights[l] = 2.0 * lambda * params.weights[l];
    }
    return {loss, std::move(grads)};
}

// ---------------------------------------------------------------------------
// Adam

struct AdamHyper {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct OptimizerState {
    Gradients m;
    Gradients v;
    long step = 0;
    AdamHyper hyper;

    static OptimizerState for_params(const ParamSet& p, AdamHyper hyper = {}) {
        return {Gradients::zeros_like(p), Gradients::zeros_like(p), 0, hyper};
    }
};

inline void adam_step(ParamSet& params, const ParamSet& grads, OptimizerState& state) {
    if (!params.same_shape(grads) || !params.same_shape(state.m))
        throw Error("adam_step: parameter, gradient and state shapes differ");
    ++state.step;
    const auto& h = state.hyper;
    const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
    auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
        m = h.beta1 * m + (1.0 - h.beta1) * g;
        v = (h.beta2 * v.array() + (1.0 - h.beta2) * g.array().square()).matrix();
        p.array() -= h.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + h.epsilon);
    };
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        update(params.weights[l], grads.weights[l], state.m.weights[l], state.v.weights[l]);
        update(params.biases[l], grads.biases[l], state.m.biases[l], state.v.biases[l]);
    }
}

// ---------------------------------------------------------------------------
// Finite-difference checking

inline constexpr double kFdStep = 1e-5;

/// |a - b| / max(|a|, |b|, floor). The floor keeps near-zero entries from
/// dominating on truncation noise.
inline double relative_error(double a, double b, double floor = 1e-6) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline Vector central_difference(const std::function<double(const Vector&)>& f, Vector x, double step = kFdStep) {
    Vector g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double orig = x(i);
        x(i) = orig + step;
        const double up = f(x);
        x(i) = orig - step;
        const double down = f(x);
        x(i) = orig;
        g(i) = (up - down) / (2.0 * step);
    }
    return g;
}

inline double max_relative_error(const Vector& analytic, const Vector& numeric, double floor = 1e-6) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < analytic.size(); ++i)
        worst = std::max(worst, relative_error(analytic(i), numeric(i), floor));
    return worst;
}

/// Loss as a function of parameters. Fills `grads` with the analytic
/// gradient when it is non-null.
using ParamLossFn = std::function<double(const ParamSet& params, Gradients* grads)>;

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    bool passed = false;
};

inline GradCheckReport grad_check(const MlpConfig& config, const ParamSet& params, const ParamLossFn& loss_fn,
                                  double tolerance, double step = kFdStep) {
    check_shapes(config, params);
    Gradients analytic;
    loss_fn(params, &analytic);
    if (!analytic.same_shape(params)) throw Error("grad_check: loss function returned misshapen gradients");
    ParamSet probe = params;
    auto f = [&](const Vector& flat) {
        probe.assign(flat);
        return loss_fn(probe, nullptr);
    };
    const Vector numeric = central_difference(f, params.flatten(), step);
    GradCheckReport rep;
    rep.checked = static_cast<std::size_t>(numeric.size());
    rep.max_relative_error = max_relative_error(analytic.flatten(), numeric);
    rep.passed = rep.max_relative_error < tolerance;
    return rep;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr const char* kMlpFormat = "fairrepro.mlp.v1";

inline nlohmann::json config_to_json(const MlpConfig& c) {
    nlohmann::json segs = nlohmann::json::array();
    for (const auto& s : c.output)
        segs.push_back({{"start", s.start}, {"width", s.width}, {"activation", to_string(s.activation)}});
    return {{"layer_widths", c.layer_widths}, {"hidden_activation", to_string(c.hidden_activation)}, {"output", segs}};
}

inline MlpConfig config_from_json(const nlohmann::json& j) {
    MlpConfig c;
    c.layer_widths = j.at("layer_widths").get<std::vector<std::size_t>>();
    c.hidden_activation = activation_from_string(j.at("hidden_activation").get<std::string>());
    for (const auto& s : j.at("output"))
        c.output.push_back({s.at("start").get<std::size_t>(), s.at("width").get<std::size_t>(),
                            activation_from_string(s.at("activation").get<std::string>())});
    c.validate();
    return c;
}

/// {"format", "config", "layers": [{"rows", "cols", "weights" (row-major), "bias"}]}
inline nlohmann::json mlp_to_json(const Mlp& net) {
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t l = 0; l < net.params.weights.size(); ++l) {
        const auto& w = net.params.weights[l];
        std::vector<double> flat;
        flat.reserve(static_cast<std::size_t>(w.size()));
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j) flat.push_back(w(i, j));
        const auto& b = net.params.biases[l];
        layers.push_back({{"rows", w.rows()},
                          {"cols", w.cols()},
                          {"weights", flat},
                          {"bias", std::vector<double>(b.data(), b.data() + b.size())}});
    }
    return {{"format", kMlpFormat}, {"config", config_to_json(net.config)}, {"layers", layers}};
}

inline Mlp mlp_from_json(const nlohmann::json& j) {
    if (j.value("format", std::string{}) != kMlpFormat)
        throw Error(std::string("checkpoint: expected format '") + kMlpFormat + "'");
    Mlp net;
    net.config = config_from_json(j.at("config"));
    for (const auto& layer : j.at("layers")) {
        const auto rows = layer.at("rows").get<Eigen::Index>();
        const auto cols = layer.at("cols").get<Eigen::Index>();
        const auto flat = layer.at("weights").get<std::vector<double>>();
        const auto bias = layer.at("bias").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(flat.size()) != rows * cols || static_cast<Eigen::Index>(bias.size()) != rows)
            throw Error("checkpoint: layer value count does not match its shape");
        Matrix w(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index k = 0; k < cols; ++k) w(i, k) = flat[static_cast<std::size_t>(i * cols + k)];
        net.params.weights.push_back(std::move(w));
        net.params.biases.push_back(Eigen::Map<const Vector>(bias.data(), rows));
    }
    check_shapes(net.config, net.params);
    return net;
}

} // namespace fairrepro
