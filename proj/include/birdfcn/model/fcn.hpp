#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "birdfcn/dsp/features.hpp"
#include "birdfcn/nn/ops.hpp"

namespace birdfcn::model {

enum class Head { kGap, kDense };

std::string to_string(Head head);
Head head_from_string(const std::string& text);

inline constexpr std::size_t kDefaultClasses = 17;

struct FcnConfig {
    /// Conv layers including the final 1x1 projection.
    std::size_t depth = 4;
    /// One entry per conv layer; the last must equal n_classes.
    std::vector<std::size_t> widths{100, 400, 100, kDefaultClasses};
    nn::Activation activation = nn::Activation::kAdaptive;
    nn::AdaptiveBase adaptive_base = nn::AdaptiveBase::kTanh;
    double adaptive_scale = 10.0;
    std::size_t n_classes = kDefaultClasses;
    double dropout_rate = 0.4;
    Head head = Head::kGap;
    /// Dense head only: the single frame count the classifier accepts.
    std::size_t fixed_frames = 0;
    /// Feature bands the model was built for; 0 accepts any band count (gap head only).
    std::size_t input_bands = 0;
    /// Weight of the optional slope-recovery term; 0 disables it.
    double slope_recovery = 0.0;

    /// ConfigError on structural problems (depth outside {3,4,6}, width count, projection width...).
    void validate() const;
    std::size_t pool_layers() const { return depth - 1; }
    /// 2^(depth-1): the shortest input that survives every pooling halving.
    std::size_t min_frames() const { return std::size_t{1} << pool_layers(); }
    /// True when the widest layer is one of the grid-search widths.
    bool widest_in_grid() const;

    std::string describe() const;
    static FcnConfig parse(const std::string& description);

    bool operator==(const FcnConfig&) const = default;
};

/// Grid-search family scaled from the canonical (100, 400, 100) shape around its widest layer:
/// depth 4 -> (w/4, w, w/4, C), depth 3 -> (w, w, C), depth 6 -> (w/4, w/4, w, w/4, w/4, C),
/// with w = widest / width_divisor and w/4 rounded (at least 1).
FcnConfig grid_config(std::size_t depth, std::size_t widest, nn::Activation activation,
                      std::size_t n_classes = kDefaultClasses, double width_divisor = 1.0);

/// The architecture the grid search selected: depth 4, widest 400, adaptive activation.
FcnConfig canonical_config(std::size_t n_classes = kDefaultClasses);

namespace detail {
/// Positions of one conv layer's tensors in the parameter list.
struct LayerIndex {
    std::size_t kernel = 0, bias = 0;
    std::optional<std::size_t> slope;
};
}  // namespace detail

/// Parameters plus the forward computation, in float (training) or double (gradient checks).
template <typename T>
class Network {
public:
    Network() = default;
    Network(const FcnConfig& config, std::uint64_t seed);

    const FcnConfig& config() const { return config_; }
    const std::vector<nn::Var<T>>& parameters() const { return params_; }
    std::size_t param_count() const;

    /// input: (bands, frames) values row-major. Returns the softmax output node.
    nn::Var<T> forward(const nn::Tensor<T>& input, bool train, std::mt19937_64* rng) const;

    /// forward() plus cross-entropy (and the slope-recovery term when enabled).
    /// `probabilities`, when given, receives the softmax output of the same pass.
    nn::Var<T> loss(const nn::Tensor<T>& input, std::size_t target, bool train, std::mt19937_64* rng,
                    std::vector<T>* probabilities = nullptr) const;

    template <typename U>
    Network<U> cast() const {
        Network<U> out;
        out.config_ = config_;
        for (const auto& p : params_) out.params_.push_back(nn::parameter(p->value.template cast<U>(), p->name));
        out.index_ = index_;
        out.dense_weights_ = dense_weights_;
        out.dense_bias_ = dense_bias_;
        return out;
    }

    void zero_grad();

private:
    template <typename U>
    friend class Network;

    void check_input(const nn::Tensor<T>& input) const;

    FcnConfig config_;
    std::vector<nn::Var<T>> params_;
    std::vector<detail::LayerIndex> index_;
    std::optional<std::size_t> dense_weights_, dense_bias_;
};

extern template class Network<float>;
extern template class Network<double>;

/// A trained or trainable classifier with everything needed to reproduce its inputs.
struct FcnModel {
    Network<float> net;
    std::vector<std::string> label_set;
    std::optional<dsp::FeatureConfig> features;
    std::optional<dsp::Standardizer> standardizer;

    const FcnConfig& config() const { return net.config(); }
    std::size_t min_frames() const { return config().min_frames(); }
    std::size_t param_count() const { return net.param_count(); }
};

/// ConfigError if label_set does not match n_classes.
FcnModel build_model(const FcnConfig& config, std::vector<std::string> label_set, std::uint64_t seed);

/// Dense-head comparison model over the same conv stack, fixed to `fixed_frames` x `input_bands`.
FcnModel build_cnn_dense(FcnConfig config, std::size_t fixed_frames, std::size_t input_bands,
                         std::vector<std::string> label_set, std::uint64_t seed);

/// Tensor the network consumes for a feature matrix, with the model's standardizer applied.
nn::Tensor<float> model_input(const FcnModel& model, const dsp::FeatureMatrix& features);

/// Evaluation-mode class probabilities.
std::vector<double> predict(const FcnModel& model, const dsp::FeatureMatrix& features);

/// "FCNW", version 1, u32 header length, text header, label block, little-endian float32 parameters.
void save_weights(const FcnModel& model, const std::filesystem::path& path);
FcnModel load_weights(const std::filesystem::path& path);

}  // namespace birdfcn::model
