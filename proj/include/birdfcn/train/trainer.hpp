#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "birdfcn/model/fcn.hpp"
#include "birdfcn/nn/adam.hpp"
#include "birdfcn/train/dataset.hpp"
#include "birdfcn/train/metrics.hpp"

namespace birdfcn::train {

struct TrainConfig {
    std::size_t epochs_max = 500;
    std::size_t batch_size = 80;
    std::size_t patience = 20;
    /// Smallest validation-loss drop that counts as an improvement.
    double min_delta = 1e-4;
    nn::AdamConfig adam{};
    /// Share of each fold's training split carved off for early stopping.
    double validation_fraction = 0.1;
    /// Monitor the fold's test split instead of a carved validation set (leaks; off by default).
    bool validate_on_test = false;

    /// ConfigError on batch_size, patience or epochs_max of 0, or a bad fraction.
    void validate() const;
    nlohmann::json to_json() const;
};

struct EpochStats {
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

struct History {
    std::vector<EpochStats> epochs;
    /// Epochs actually run (1-based count).
    std::size_t stopped_epoch = 0;
    /// 1-based epoch whose weights were restored.
    std::size_t best_epoch = 0;
    double best_val_loss = 0.0;
    std::uint64_t optimizer_steps = 0;

    nlohmann::json to_json() const;
};

/// Network inputs prepared once per fold.
struct Batch {
    std::vector<nn::Tensor<float>> inputs;
    std::vector<std::size_t> labels;
};

/// Pads every matrix to the longest frame count with the kind's silence value, then standardizes.
Batch prepare_padded(const std::vector<const Sample*>& samples, const dsp::Standardizer& standardizer);

/// Standardized, unpadded inputs.
Batch prepare_unpadded(const std::vector<const Sample*>& samples, const dsp::Standardizer& standardizer);

/// Minibatch Adam with early stopping on `val` and best-weight restoration. Gradients of each
/// minibatch are averaged. DivergenceError (with epoch and batch) on a non-finite loss.
/// An empty `val` disables early stopping.
History train_one(model::Network<float>& net, const Batch& train, const Batch& val, const TrainConfig& tc,
                  std::uint64_t seed);

/// Mean cross-entropy and accuracy in eval mode.
std::pair<double, double> evaluate_loss(const model::Network<float>& net, const Batch& batch);

/// Argmax predictions in eval mode.
std::vector<std::size_t> predict_classes(const model::Network<float>& net, const Batch& batch);

/// Eval-mode metrics over unpadded samples. ParameterError when `samples` is empty.
Metrics evaluate(const model::FcnModel& model, const std::vector<const Sample*>& samples);

}  // namespace birdfcn::train
