#include "birdfcn/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "birdfcn/error.hpp"

namespace birdfcn::train {

void TrainConfig::validate() const {
    if (epochs_max == 0) throw ConfigError("epochs_max must be at least 1");
    if (batch_size == 0) throw ConfigError("batch size must be at least 1");
    if (patience == 0) throw ConfigError("patience must be at least 1");
    if (!(min_delta >= 0.0)) throw ConfigError("min_delta must be nonnegative");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
        throw ConfigError("validation fraction must lie in [0, 1)");
    }
    if (!(adam.alpha > 0.0)) throw ConfigError("learning rate must be positive");
}

nlohmann::json TrainConfig::to_json() const {
    return {{"epochs_max", epochs_max},
            {"batch_size", batch_size},
            {"patience", patience},
            {"min_delta", min_delta},
            {"learning_rate", adam.alpha},
            {"beta1", adam.beta1},
            {"beta2", adam.beta2},
            {"epsilon", adam.epsilon},
            {"validation_fraction", validation_fraction},
            {"validate_on_test", validate_on_test}};
}

nlohmann::json History::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& e : epochs) {
        rows.push_back({{"train_loss", e.train_loss},
                        {"train_accuracy", e.train_accuracy},
                        {"val_loss", e.val_loss},
                        {"val_accuracy", e.val_accuracy}});
    }
    return {{"stopped_epoch", stopped_epoch},
            {"best_epoch", best_epoch},
            {"best_val_loss", best_val_loss},
            {"optimizer_steps", optimizer_steps},
            {"epochs", rows}};
}

namespace {

nn::Tensor<float> to_tensor(const dsp::FeatureMatrix& fm) {
    return nn::Tensor<float>({fm.bands, fm.frames}, std::vector<float>(fm.values.begin(), fm.values.end()));
}

std::size_t argmax(const std::vector<float>& p) {
    return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

}  // namespace

Batch prepare_padded(const std::vector<const Sample*>& samples, const dsp::Standardizer& standardizer) {
    std::size_t longest = 0;
    for (const auto* s : samples) longest = std::max(longest, s->features.frames);
    Batch b;
    for (const auto* s : samples) {
        auto fm = s->features.padded_to(longest, dsp::silence_value(s->features.kind));
        if (standardizer.fitted()) standardizer.apply(fm);
        b.inputs.push_back(to_tensor(fm));
        b.labels.push_back(s->label);
    }
    return b;
}

Batch prepare_unpadded(const std::vector<const Sample*>& samples, const dsp::Standardizer& standardizer) {
    Batch b;
    for (const auto* s : samples) {
        auto fm = s->features;
        if (standardizer.fitted()) standardizer.apply(fm);
        b.inputs.push_back(to_tensor(fm));
        b.labels.push_back(s->label);
    }
    return b;
}

std::pair<double, double> evaluate_loss(const model::Network<float>& net, const Batch& batch) {
    if (batch.inputs.empty()) return {0.0, 0.0};
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < batch.inputs.size(); ++i) {
        const auto probs = net.forward(batch.inputs[i], false, nullptr);
        loss += static_cast<double>(nn::ops::cross_entropy(probs, batch.labels[i])->value[0]);
        correct += argmax(probs->value.values()) == batch.labels[i];
    }
    const double n = static_cast<double>(batch.inputs.size());
    return {loss / n, static_cast<double>(correct) / n};
}

std::vector<std::size_t> predict_classes(const model::Network<float>& net, const Batch& batch) {
    std::vector<std::size_t> out;
    out.reserve(batch.inputs.size());
    for (const auto& x : batch.inputs) out.push_back(argmax(net.forward(x, false, nullptr)->value.values()));
    return out;
}

History train_one(model::Network<float>& net, const Batch& train, const Batch& val, const TrainConfig& tc,
                  std::uint64_t seed) {
    tc.validate();
    if (train.inputs.empty()) throw ParameterError("training set is empty");
    std::mt19937_64 rng(seed);
    nn::AdamState<float> adam(tc.adam);
    const auto& params = net.parameters();

    History h;
    h.best_val_loss = std::numeric_limits<double>::infinity();
    std::vector<std::vector<float>> best_weights;
    auto snapshot = [&] {
        best_weights.clear();
        for (const auto& p : params) best_weights.push_back(p->value.values());
    };
    snapshot();

    std::vector<std::size_t> order(train.inputs.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<float> probs;
    std::size_t since_improvement = 0;
    for (std::size_t epoch = 1; epoch <= tc.epochs_max; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0, batch_no = 1; start < order.size(); start += tc.batch_size, ++batch_no) {
            const std::size_t end = std::min(order.size(), start + tc.batch_size);
            net.zero_grad();
            for (std::size_t j = start; j < end; ++j) {
                const std::size_t i = order[j];
                const std::string where = "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_no);
                nn::Var<float> loss;
                try {
                    loss = net.loss(train.inputs[i], train.labels[i], true, &rng, &probs);
                } catch (const NumericError& e) {
                    throw DivergenceError("training diverged at " + where + ": " + e.what());
                }
                const double value = loss->value[0];
                if (!std::isfinite(value)) throw DivergenceError("non-finite training loss at " + where);
                loss_sum += value;
                correct += argmax(probs) == train.labels[i];
                nn::backward(loss);
            }
            const float inv = 1.0f / static_cast<float>(end - start);
            for (const auto& p : params) {
                for (auto& g : p->value.grad()) g *= inv;
            }
            nn::adam_step(params, adam);
            ++h.optimizer_steps;
        }
        EpochStats stats;
        const double n = static_cast<double>(order.size());
        stats.train_loss = loss_sum / n;
        stats.train_accuracy = static_cast<double>(correct) / n;
        h.stopped_epoch = epoch;

        if (val.inputs.empty()) {
            h.epochs.push_back(stats);
            h.best_epoch = epoch;
            h.best_val_loss = stats.train_loss;
            continue;
        }
        try {
            std::tie(stats.val_loss, stats.val_accuracy) = evaluate_loss(net, val);
        } catch (const NumericError& e) {
            throw DivergenceError("validation diverged at epoch " + std::to_string(epoch) + ": " + e.what());
        }
        h.epochs.push_back(stats);
        if (!std::isfinite(stats.val_loss)) {
            throw DivergenceError("non-finite validation loss at epoch " + std::to_string(epoch));
        }
        if (stats.val_loss < h.best_val_loss - tc.min_delta) {
            h.best_val_loss = stats.val_loss;
            h.best_epoch = epoch;
            since_improvement = 0;
            snapshot();
        } else if (++since_improvement >= tc.patience) {
            break;
        }
    }
    if (!val.inputs.empty()) {
        for (std::size_t i = 0; i < params.size(); ++i) params[i]->value.values() = best_weights[i];
    }
    return h;
}

Metrics evaluate(const model::FcnModel& model, const std::vector<const Sample*>& samples) {
    if (samples.empty()) throw ParameterError("test set is empty");
    const auto batch = prepare_unpadded(samples, model.standardizer.value_or(dsp::Standardizer{}));
    return compute_metrics(batch.labels, predict_classes(model.net, batch), model.config().n_classes);
}

}  // namespace birdfcn::train
