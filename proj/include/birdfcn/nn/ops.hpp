#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "birdfcn/nn/graph.hpp"

namespace birdfcn::nn {

enum class Activation { kRelu, kTanh, kAdaptive };

/// Nonlinearity wrapped by the adaptive activation: base(n * a * x).
enum class AdaptiveBase { kTanh, kRelu };

std::string_view to_string(Activation kind);
Activation activation_from_string(std::string_view text);
std::string_view to_string(AdaptiveBase base);
AdaptiveBase adaptive_base_from_string(std::string_view text);

/// Floor applied to the target probability inside cross-entropy.
inline constexpr double kProbabilityFloor = 1e-12;

namespace ops {

/// Same-padded 2-D cross-correlation. input (Cin,H,W), kernels (Cout,Cin,k,k) with
/// odd k, bias (Cout) -> (Cout,H,W).
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& kernels, const Var<T>& bias);

/// Non-overlapping 2x2 max pooling over (C,H,W); odd trailing row/column dropped.
/// Ties resolve to the first cell in row-major order.
template <typename T>
Var<T> maxpool2(const Var<T>& input);

/// Per-channel mean of a (C,H,W) map -> (C).
template <typename T>
Var<T> global_avg_pool(const Var<T>& input);

template <typename T>
Var<T> relu(const Var<T>& input);

template <typename T>
Var<T> tanh(const Var<T>& input);

/// base(scale * slope * x) with a trainable scalar slope of shape (1).
template <typename T>
Var<T> adaptive(const Var<T>& input, const Var<T>& slope, T scale, AdaptiveBase base);

/// Max-subtracted softmax over a rank-1 tensor. Non-finite logits raise NumericError.
template <typename T>
Var<T> softmax(const Var<T>& logits);

/// -ln(max(p[target], 1e-12)) as a shape-(1) tensor.
template <typename T>
Var<T> cross_entropy(const Var<T>& probabilities, std::size_t target);

/// Inverted dropout: in training each element is zeroed with probability `rate` and
/// survivors are scaled by 1/(1-rate). Evaluation mode returns the input node itself.
template <typename T>
Var<T> dropout(const Var<T>& input, double rate, bool train, std::mt19937_64& rng);

template <typename T>
Var<T> sum(const Var<T>& input);

/// Reshape to rank 1 (row-major order preserved).
template <typename T>
Var<T> flatten(const Var<T>& input);

/// Fully connected: input (I), weights (O,I), bias (O) -> (O).
template <typename T>
Var<T> dense(const Var<T>& input, const Var<T>& weights, const Var<T>& bias);

}  // namespace ops

namespace detail {

/// Records the discrete branch taken at every relu/maxpool decision while active, so a
/// finite-difference probe can detect that it stepped across a non-differentiable point.
struct BranchTrace {
    std::vector<std::uint32_t> codes;
};

BranchTrace*& active_branch_trace();

/// Multiplier applied to conv kernel gradients. 1 in normal operation; gradient-check
/// fault injection sets it to something else.
double& conv_kernel_grad_fault();

class ScopedConvGradFault {
public:
    explicit ScopedConvGradFault(double factor) : saved_(conv_kernel_grad_fault()) {
        conv_kernel_grad_fault() = factor;
    }
    ~ScopedConvGradFault() { conv_kernel_grad_fault() = saved_; }
    ScopedConvGradFault(const ScopedConvGradFault&) = delete;
    ScopedConvGradFault& operator=(const ScopedConvGradFault&) = delete;

private:
    double saved_;
};

}  // namespace detail

}  // namespace birdfcn::nn
