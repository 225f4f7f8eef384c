#pragma once

// Binary classifiers: the frozen baseline classifier and the fresh probes
// used for fairness evaluation share the same trainer.

#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffnet.hpp"
#include "tabular.hpp"

namespace fairrepro {

struct ClassifierConfig {
    std::vector<std::size_t> hidden = {64, 64};
    Activation hidden_activation = Activation::relu;
    bool include_protected = false;
    std::size_t max_epochs = 200;
    std::size_t patience = 10;
    std::size_t batch_size = 128;
    double learning_rate = 1e-3;
};

inline MlpConfig classifier_mlp_config(std::size_t input_width, const ClassifierConfig& cfg) {
    MlpConfig c = MlpConfig::make(input_width, cfg.hidden, 2, Activation::softmax, cfg.hidden_activation);
    return c;
}

/// Hard labels from class probabilities; a tie goes to class 0.
inline std::vector<int> hard_labels(const Matrix& probs) {
    std::vector<int> out(static_cast<std::size_t>(probs.rows()));
    for (Eigen::Index r = 0; r < probs.rows(); ++r) out[static_cast<std::size_t>(r)] = static_cast<int>(argmax_lowest(probs.row(r)));
    return out;
}

inline double accuracy_from_probs(const Matrix& probs, const std::vector<int>& labels) {
    if (labels.empty()) throw Error("accuracy: empty dataset");
    const auto pred = hard_labels(probs);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) correct += pred[i] == labels[i];
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

struct FitResult {
    Mlp net;
    double val_accuracy = 0.0;
    std::size_t epochs_run = 0;
};

/// Minibatch Adam on cross-entropy with early stopping on validation
/// accuracy. The parameters with the best validation accuracy are kept.
inline FitResult fit_binary(const Matrix& x_train, const std::vector<int>& y_train, const Matrix& x_val,
                            const std::vector<int>& y_val, const ClassifierConfig& cfg, std::uint64_t seed) {
    if (static_cast<std::size_t>(x_train.rows()) != y_train.size() || static_cast<std::size_t>(x_val.rows()) != y_val.size())
        throw Error("fit_binary: feature and label counts differ");
    if (y_train.empty() || y_val.empty()) throw Error("fit_binary: empty training or validation set");
    for (const auto* ys : {&y_train, &y_val})
        for (int y : *ys)
            if (y != 0 && y != 1) throw Error("fit_binary: labels must be binary");
    if (cfg.batch_size == 0 || cfg.max_epochs == 0) throw Error("fit_binary: batch size and epochs must be positive");

    Rng rng(seed);
    FitResult best;
    best.net = Mlp::create(classifier_mlp_config(static_cast<std::size_t>(x_train.cols()), cfg), rng);
    Mlp net = best.net;
    auto opt = OptimizerState::for_params(net.params, {cfg.learning_rate});
    best.val_accuracy = accuracy_from_probs(predict(net, x_val), y_val);

    const auto n = static_cast<std::size_t>(x_train.rows());
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::size_t since_best = 0;
    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t end = std::min(n, start + cfg.batch_size);
            Matrix xb(static_cast<Eigen::Index>(end - start), x_train.cols());
            std::vector<int> yb(end - start);
            for (std::size_t i = start; i < end; ++i) {
                xb.row(static_cast<Eigen::Index>(i - start)) = x_train.row(static_cast<Eigen::Index>(order[i]));
                yb[i - start] = y_train[order[i]];
            }
            const auto pass = forward(net.config, net.params, xb);
            const auto ce = cross_entropy(pass.output, yb, GradientWrt::probabilities);
            const auto bw = backward(net.config, net.params, pass, ce.grad);
            adam_step(net.params, bw.grads, opt);
        }
        best.epochs_run = epoch + 1;
        const double acc = accuracy_from_probs(predict(net, x_val), y_val);
        if (acc > best.val_accuracy) {
            best.val_accuracy = acc;
            best.net = net;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    return best;
}

/// The frozen baseline classifier. Its parameters are never updated after
/// training; reprogramming only reads them.
struct Classifier {
    Mlp net;
    Schema schema; // schema it was trained on; the label column is the target
    bool include_protected = false;
    double val_accuracy = 0.0;
    bool frozen = true;

    std::uint64_t schema_fingerprint() const { return schema.fingerprint(); }
    const std::string& label() const { return schema.label_column(); }
    std::size_t input_width() const { return net.config.input_width(); }

    /// Classifier input built from an encoded matrix of the training schema.
    Matrix inputs(const EncodedMatrix& m) const {
        const EncodedLayout layout(schema);
        if (m.feature_dim != layout.width()) throw Error("classifier: encoded width does not match its schema");
        return include_protected ? m.features_with_protected(layout) : m.features(layout);
    }
};

inline Classifier train_classifier(const Dataset& train, const Dataset& val, const ClassifierConfig& cfg,
                                   std::uint64_t seed) {
    if (!(train.schema() == val.schema())) throw Error("train_classifier: train and validation schemas differ");
    Classifier c;
    c.schema = train.schema();
    c.include_protected = cfg.include_protected;
    const auto etrain = encode(train);
    const auto eval = encode(val);
    auto fit = fit_binary(c.inputs(etrain), train.labels(), c.inputs(eval), val.labels(), cfg, seed);
    c.net = std::move(fit.net);
    c.val_accuracy = fit.val_accuracy;
    c.frozen = true;
    return c;
}

/// Class probabilities (n x 2) for a batch of classifier inputs.
inline Matrix predict(const Classifier& c, const Matrix& inputs) {
    if (static_cast<std::size_t>(inputs.cols()) != c.input_width())
        throw Error("predict: input width " + std::to_string(inputs.cols()) + " != classifier width " +
                    std::to_string(c.input_width()));
    return predict(c.net, inputs);
}

inline Matrix predict(const Classifier& c, const EncodedMatrix& batch) { return predict(c, c.inputs(batch)); }

/// Fraction of rows whose hard prediction equals the dataset's label.
inline double accuracy(const Classifier& c, const Dataset& data) {
    if (!(data.schema() == c.schema)) throw Error("accuracy: dataset schema is not the classifier's schema");
    return accuracy_from_probs(predict(c, encode(data)), data.labels());
}

inline constexpr const char* kClassifierFormat = "fairrepro.classifier.v1";

inline nlohmann::json classifier_to_json(const Classifier& c) {
    return {{"format", kClassifierFormat},
            {"schema", schema_to_json(c.schema)},
            {"schema_fingerprint", to_hex(c.schema_fingerprint())},
            {"include_protected", c.include_protected},
            {"val_accuracy", c.val_accuracy},
            {"network", mlp_to_json(c.net)}};
}

inline Classifier classifier_from_json(const nlohmann::json& j) {
    if (j.value("format", std::string{}) != kClassifierFormat)
        throw Error(std::string("checkpoint: expected format '") + kClassifierFormat + "'");
    Classifier c;
    c.schema = schema_from_json(j.at("schema"));
    c.include_protected = j.at("include_protected").get<bool>();
    c.val_accuracy = j.at("val_accuracy").get<double>();
    c.net = mlp_from_json(j.at("network"));
    c.frozen = true;
    return c;
}

} // namespace fairrepro
