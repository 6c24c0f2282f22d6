#include "birdfcn/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace birdfcn::nn {

std::string_view to_string(Activation kind) {
    switch (kind) {
        case Activation::kRelu: return "relu";
        case Activation::kTanh: return "tanh";
        case Activation::kAdaptive: return "adaptive";
    }
    return "unknown";
}

Activation activation_from_string(std::string_view text) {
    if (text == "relu") return Activation::kRelu;
    if (text == "tanh") return Activation::kTanh;
    if (text == "adaptive") return Activation::kAdaptive;
    throw ConfigError("unknown activation '" + std::string(text) + "'");
}

std::string_view to_string(AdaptiveBase base) {
    return base == AdaptiveBase::kTanh ? "tanh" : "relu";
}

AdaptiveBase adaptive_base_from_string(std::string_view text) {
    if (text == "tanh") return AdaptiveBase::kTanh;
    if (text == "relu") return AdaptiveBase::kRelu;
    throw ConfigError("unknown adaptive base '" + std::string(text) + "'");
}

namespace detail {

BranchTrace*& active_branch_trace() {
    thread_local BranchTrace* trace = nullptr;
    return trace;
}

double& conv_kernel_grad_fault() {
    thread_local double factor = 1.0;
    return factor;
}

}  // namespace detail

namespace ops {

namespace {

template <typename T>
void require_rank(const Var<T>& v, std::size_t rank, const char* op) {
    if (!v) {
        throw GraphError(std::string(op) + ": missing input node");
    }
    if (v->value.rank() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         " input, got " + shape_string(v->value.shape()));
    }
}

void trace_branch(std::uint32_t code) {
    if (auto* trace = detail::active_branch_trace()) {
        trace->codes.push_back(code);
    }
}

template <typename T>
[[gnu::always_inline]] inline void conv_forward_body(const T* x, const T* kw, const T* b, T* y, std::size_t cin,
                                                     std::size_t cout, std::size_t h, std::size_t w, std::size_t k) {
    // A block of output channels over one strip of one output row at a time, so the accumulators
    // stay in L1 while each input row segment is reused across the block. Per-element summation
    // order is bias, then (c, ky, kx).
    constexpr std::size_t kOut = 8, kCols = 256;
    const auto pad = static_cast<std::ptrdiff_t>(k / 2);
    const auto K = static_cast<std::ptrdiff_t>(k);
    const auto H = static_cast<std::ptrdiff_t>(h);
    const auto W = static_cast<std::ptrdiff_t>(w);
    const std::size_t plane = h * w;
    T acc[kOut][kCols];
    for (std::size_t o0 = 0; o0 < cout; o0 += kOut) {
        const std::size_t nb = std::min(kOut, cout - o0);
        for (std::ptrdiff_t r = 0; r < H; ++r) {
            for (std::ptrdiff_t c0 = 0; c0 < W; c0 += static_cast<std::ptrdiff_t>(kCols)) {
                const std::ptrdiff_t c1 = std::min(W, c0 + static_cast<std::ptrdiff_t>(kCols));
                for (std::size_t j = 0; j < nb; ++j) std::fill_n(acc[j], c1 - c0, b[o0 + j]);
                for (std::size_t c = 0; c < cin; ++c) {
                    for (std::ptrdiff_t ky = 0; ky < K; ++ky) {
                        const std::ptrdiff_t rr = r + ky - pad;
                        if (rr < 0 || rr >= H) continue;
                        const T* src = x + c * plane + rr * W;
                        for (std::ptrdiff_t kx = 0; kx < K; ++kx) {
                            const std::ptrdiff_t dx = kx - pad;
                            const std::ptrdiff_t x0 = std::max(c0, -dx);
                            const std::ptrdiff_t x1 = std::min(c1, W - dx);
                            for (std::size_t j = 0; j < nb; ++j) {
                                const T wv = kw[((o0 + j) * cin + c) * k * k + static_cast<std::size_t>(ky * K + kx)];
                                T* __restrict dst = acc[j] - c0;
                                const T* __restrict s = src + dx;
                                for (std::ptrdiff_t col = x0; col < x1; ++col) dst[col] += wv * s[col];
                            }
                        }
                    }
                }
                for (std::size_t j = 0; j < nb; ++j) {
                    std::copy_n(acc[j], c1 - c0, y + (o0 + j) * plane + static_cast<std::size_t>(r * W + c0));
                }
            }
        }
    }
}

// Runtime-dispatched AVX2 clone. No FMA, so both clones round identically.
__attribute__((target_clones("avx2", "default"))) void conv_forward(const float* x, const float* kw, const float* b,
                                                                     float* y, std::size_t cin, std::size_t cout,
                                                                     std::size_t h, std::size_t w, std::size_t k) {
    conv_forward_body(x, kw, b, y, cin, cout, h, w, k);
}

__attribute__((target_clones("avx2", "default"))) void conv_forward(const double* x, const double* kw, const double* b,
                                                                     double* y, std::size_t cin, std::size_t cout,
                                                                     std::size_t h, std::size_t w, std::size_t k) {
    conv_forward_body(x, kw, b, y, cin, cout, h, w, k);
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& kernels, const Var<T>& bias) {
    require_rank(input, 3, "conv2d");
    require_rank(kernels, 4, "conv2d");
    require_rank(bias, 1, "conv2d");
    const std::size_t cin = input->value.dim(0);
    const std::size_t h = input->value.dim(1);
    const std::size_t w = input->value.dim(2);
    const std::size_t cout = kernels->value.dim(0);
    const std::size_t k = kernels->value.dim(2);
    if (kernels->value.dim(1) != cin) {
        throw ShapeError("conv2d: kernels expect " + std::to_string(kernels->value.dim(1)) +
                         " input channels, input has " + std::to_string(cin));
    }
    if (kernels->value.dim(3) != k || k % 2 == 0) {
        throw ShapeError("conv2d: kernels must be square with odd size, got " +
                         shape_string(kernels->value.shape()));
    }
    if (bias->value.dim(0) != cout) {
        throw ShapeError("conv2d: bias length does not match output channels");
    }
    const auto pad = static_cast<std::ptrdiff_t>(k / 2);
    const auto H = static_cast<std::ptrdiff_t>(h);
    const auto W = static_cast<std::ptrdiff_t>(w);
    const std::size_t plane = h * w;

    Tensor<T> out({cout, h, w});
    const T* x = input->value.data().data();
    const T* kw = kernels->value.data().data();
    const T* b = bias->value.data().data();
    T* y = out.data().data();

    conv_forward(x, kw, b, y, cin, cout, h, w, k);

    return make_result<T>(std::move(out), {input, kernels, bias}, [=](Node<T>& node) {
        const T* g = node.value.grad().data();
        Node<T>& in = *node.parents[0];
        Node<T>& ker = *node.parents[1];
        Node<T>& bi = *node.parents[2];
        const T* xs = in.value.data().data();
        const T* ks = ker.value.data().data();
        if (bi.requires_grad) {
            T* gb = bi.value.grad().data();
            for (std::size_t o = 0; o < cout; ++o) {
                T acc{0};
                const T* go = g + o * plane;
                for (std::size_t i = 0; i < plane; ++i) acc += go[i];
                gb[o] += acc;
            }
        }
        if (ker.requires_grad) {
            T* gk = ker.value.grad().data();
            const T fault = static_cast<T>(detail::conv_kernel_grad_fault());
            std::vector<T> row_acc(w);
            for (std::size_t o = 0; o < cout; ++o) {
                const T* go = g + o * plane;
                for (std::size_t c = 0; c < cin; ++c) {
                    const T* xc = xs + c * plane;
                    T* gkc = gk + (o * cin + c) * k * k;
                    for (std::ptrdiff_t ky = 0; ky < static_cast<std::ptrdiff_t>(k); ++ky) {
                        const std::ptrdiff_t dy = ky - pad;
                        const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy);
                        const std::ptrdiff_t y1 = std::min(H, H - dy);
                        for (std::ptrdiff_t kx = 0; kx < static_cast<std::ptrdiff_t>(k); ++kx) {
                            const std::ptrdiff_t dx = kx - pad;
                            const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
                            const std::ptrdiff_t x1 = std::min(W, W - dx);
                            std::fill(row_acc.begin(), row_acc.end(), T{0});
                            T* __restrict acc = row_acc.data();
                            for (std::ptrdiff_t r = y0; r < y1; ++r) {
                                const T* __restrict gr = go + r * W;
                                const T* __restrict src = xc + (r + dy) * W;
                                for (std::ptrdiff_t col = x0; col < x1; ++col) {
                                    acc[col] += gr[col] * src[col + dx];
                                }
                            }
                            T total{0};
                            for (std::ptrdiff_t col = x0; col < x1; ++col) total += acc[col];
                            gkc[ky * static_cast<std::ptrdiff_t>(k) + kx] += total * fault;
                        }
                    }
                }
            }
        }
        if (in.requires_grad) {
            T* gx = in.value.grad().data();
            for (std::size_t o = 0; o < cout; ++o) {
                const T* go = g + o * plane;
                for (std::size_t c = 0; c < cin; ++c) {
                    T* gxc = gx + c * plane;
                    const T* kc = ks + (o * cin + c) * k * k;
                    for (std::ptrdiff_t ky = 0; ky < static_cast<std::ptrdiff_t>(k); ++ky) {
                        const std::ptrdiff_t dy = ky - pad;
                        const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy);
                        const std::ptrdiff_t y1 = std::min(H, H - dy);
                        for (std::ptrdiff_t kx = 0; kx < static_cast<std::ptrdiff_t>(k); ++kx) {
                            const std::ptrdiff_t dx = kx - pad;
                            const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
                            const std::ptrdiff_t x1 = std::min(W, W - dx);
                            const T wv = kc[ky * static_cast<std::ptrdiff_t>(k) + kx];
                            for (std::ptrdiff_t r = y0; r < y1; ++r) {
                                const T* __restrict gr = go + r * W;
                                T* __restrict dst = gxc + (r + dy) * W;
                                for (std::ptrdiff_t col = x0; col < x1; ++col) {
                                    dst[col + dx] += wv * gr[col];
                                }
                            }
                        }
                    }
                }
            }
        }
    });
}

template <typename T>
Var<T> maxpool2(const Var<T>& input) {
    require_rank(input, 3, "maxpool2");
    const std::size_t c = input->value.dim(0);
    const std::size_t h = input->value.dim(1);
    const std::size_t w = input->value.dim(2);
    if (h < 2 || w < 2) {
        throw DegenerateInputError("maxpool2: input " + shape_string(input->value.shape()) +
                                   " is smaller than one 2x2 window");
    }
    const std::size_t oh = h / 2;
    const std::size_t ow = w / 2;
    Tensor<T> out({c, oh, ow});
    std::vector<std::uint32_t> argmax(out.size());
    const T* x = input->value.data().data();
    T* y = out.data().data();
    std::size_t idx = 0;
    for (std::size_t ch = 0; ch < c; ++ch) {
        const T* xc = x + ch * h * w;
        for (std::size_t r = 0; r < oh; ++r) {
            for (std::size_t col = 0; col < ow; ++col, ++idx) {
                const std::size_t base = 2 * r * w + 2 * col;
                const std::size_t cells[4] = {base, base + 1, base + w, base + w + 1};
                std::size_t best = 0;
                for (std::size_t j = 1; j < 4; ++j) {
                    if (xc[cells[j]] > xc[cells[best]]) best = j;
                }
                y[idx] = xc[cells[best]];
                argmax[idx] = static_cast<std::uint32_t>(ch * h * w + cells[best]);
                trace_branch(static_cast<std::uint32_t>(best));
            }
        }
    }
    return make_result<T>(std::move(out), {input},
                          [argmax = std::move(argmax)](Node<T>& node) {
                              T* gx = node.parents[0]->value.grad().data();
                              const T* g = node.value.grad().data();
                              for (std::size_t i = 0; i < argmax.size(); ++i) {
                                  gx[argmax[i]] += g[i];
                              }
                          });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& input) {
    require_rank(input, 3, "global_avg_pool");
    const std::size_t c = input->value.dim(0);
    const std::size_t plane = input->value.dim(1) * input->value.dim(2);
    Tensor<T> out({c});
    const T* x = input->value.data().data();
    for (std::size_t ch = 0; ch < c; ++ch) {
        T acc{0};
        for (std::size_t i = 0; i < plane; ++i) acc += x[ch * plane + i];
        out[ch] = acc / static_cast<T>(plane);
    }
    return make_result<T>(std::move(out), {input}, [c, plane](Node<T>& node) {
        T* gx = node.parents[0]->value.grad().data();
        const T* g = node.value.grad().data();
        for (std::size_t ch = 0; ch < c; ++ch) {
            const T share = g[ch] / static_cast<T>(plane);
            for (std::size_t i = 0; i < plane; ++i) gx[ch * plane + i] += share;
        }
    });
}

template <typename T>
Var<T> relu(const Var<T>& input) {
    if (!input) throw GraphError("relu: missing input node");
    Tensor<T> out(input->value.shape());
    const auto x = input->value.data();
    auto y = out.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = x[i] > T{0} ? x[i] : T{0};
        trace_branch(x[i] > T{0} ? 1u : 0u);
    }
    return make_result<T>(std::move(out), {input}, [](Node<T>& node) {
        Node<T>& in = *node.parents[0];
        const auto x = in.value.data();
        auto gx = in.value.grad();
        const auto g = node.value.grad();
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (x[i] > T{0}) gx[i] += g[i];
        }
    });
}

template <typename T>
Var<T> tanh(const Var<T>& input) {
    if (!input) throw GraphError("tanh: missing input node");
    Tensor<T> out(input->value.shape());
    const auto x = input->value.data();
    auto y = out.data();
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
    return make_result<T>(std::move(out), {input}, [](Node<T>& node) {
        const auto y = node.value.data();
        const auto g = node.value.grad();
        auto gx = node.parents[0]->value.grad();
        for (std::size_t i = 0; i < y.size(); ++i) gx[i] += g[i] * (T{1} - y[i] * y[i]);
    });
}

template <typename T>
Var<T> adaptive(const Var<T>& input, const Var<T>& slope, T scale, AdaptiveBase base) {
    if (!input || !slope) throw GraphError("adaptive: missing input node");
    if (slope->value.size() != 1) {
        throw ShapeError("adaptive: slope must be a single scalar");
    }
    const T s = scale * slope->value[0];
    Tensor<T> out(input->value.shape());
    const auto x = input->value.data();
    auto y = out.data();
    if (base == AdaptiveBase::kTanh) {
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(s * x[i]);
    } else {
        for (std::size_t i = 0; i < x.size(); ++i) {
            const T z = s * x[i];
            y[i] = z > T{0} ? z : T{0};
            trace_branch(z > T{0} ? 1u : 0u);
        }
    }
    return make_result<T>(std::move(out), {input, slope}, [scale, base](Node<T>& node) {
        Node<T>& in = *node.parents[0];
        Node<T>& sl = *node.parents[1];
        const T s = scale * sl.value[0];
        const auto x = in.value.data();
        const auto y = node.value.data();
        const auto g = node.value.grad();
        T slope_grad{0};
        T* gx = in.requires_grad ? in.value.grad().data() : nullptr;
        for (std::size_t i = 0; i < x.size(); ++i) {
            T local;
            if (base == AdaptiveBase::kTanh) {
                local = g[i] * (T{1} - y[i] * y[i]);
            } else {
                local = (s * x[i] > T{0}) ? g[i] : T{0};
            }
            if (gx) gx[i] += local * s;
            slope_grad += local * x[i];
        }
        if (sl.requires_grad) sl.value.grad()[0] += slope_grad * scale;
    });
}

template <typename T>
Var<T> softmax(const Var<T>& logits) {
    require_rank(logits, 1, "softmax");
    const auto z = logits->value.data();
    for (T v : z) {
        if (!std::isfinite(v)) {
            throw NumericError("softmax: non-finite logit");
        }
    }
    const T peak = *std::max_element(z.begin(), z.end());
    Tensor<T> out(logits->value.shape());
    auto p = out.data();
    T total{0};
    for (std::size_t i = 0; i < z.size(); ++i) {
        p[i] = std::exp(z[i] - peak);
        total += p[i];
    }
    for (auto& v : p) v /= total;
    return make_result<T>(std::move(out), {logits}, [](Node<T>& node) {
        const auto p = node.value.data();
        const auto g = node.value.grad();
        auto gz = node.parents[0]->value.grad();
        T dot{0};
        for (std::size_t i = 0; i < p.size(); ++i) dot += g[i] * p[i];
        for (std::size_t i = 0; i < p.size(); ++i) gz[i] += p[i] * (g[i] - dot);
    });
}

template <typename T>
Var<T> cross_entropy(const Var<T>& probabilities, std::size_t target) {
    require_rank(probabilities, 1, "cross_entropy");
    const std::size_t classes = probabilities->value.size();
    if (target >= classes) {
        throw IndexError("cross_entropy: target " + std::to_string(target) +
                         " outside [0, " + std::to_string(classes) + ")");
    }
    const T floor = static_cast<T>(kProbabilityFloor);
    const T pt = probabilities->value[target];
    const bool clamped = !(pt > floor);
    Tensor<T> out({1});
    out[0] = -std::log(clamped ? floor : pt);
    return make_result<T>(std::move(out), {probabilities}, [target, clamped](Node<T>& node) {
        if (clamped) return;
        Node<T>& in = *node.parents[0];
        in.value.grad()[target] -= node.value.grad()[0] / in.value[target];
    });
}

template <typename T>
Var<T> dropout(const Var<T>& input, double rate, bool train, std::mt19937_64& rng) {
    if (!input) throw GraphError("dropout: missing input node");
    if (!(rate >= 0.0) || rate >= 1.0) {
        throw ParameterError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    }
    if (!train || rate == 0.0) {
        return input;
    }
    std::bernoulli_distribution keep(1.0 - rate);
    const T scale = static_cast<T>(1.0 / (1.0 - rate));
    std::vector<T> mask(input->value.size());
    for (auto& m : mask) m = keep(rng) ? scale : T{0};
    Tensor<T> out(input->value.shape());
    const auto x = input->value.data();
    auto y = out.data();
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * mask[i];
    return make_result<T>(std::move(out), {input}, [mask = std::move(mask)](Node<T>& node) {
        const auto g = node.value.grad();
        auto gx = node.parents[0]->value.grad();
        for (std::size_t i = 0; i < mask.size(); ++i) gx[i] += g[i] * mask[i];
    });
}

template <typename T>
Var<T> sum(const Var<T>& input) {
    if (!input) throw GraphError("sum: missing input node");
    Tensor<T> out({1});
    for (T v : input->value.data()) out[0] += v;
    return make_result<T>(std::move(out), {input}, [](Node<T>& node) {
        const T g = node.value.grad()[0];
        for (auto& v : node.parents[0]->value.grad()) v += g;
    });
}

template <typename T>
Var<T> flatten(const Var<T>& input) {
    if (!input) throw GraphError("flatten: missing input node");
    Tensor<T> out({input->value.size()}, input->value.values());
    return make_result<T>(std::move(out), {input}, [](Node<T>& node) {
        const auto g = node.value.grad();
        auto gx = node.parents[0]->value.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
}

template <typename T>
Var<T> dense(const Var<T>& input, const Var<T>& weights, const Var<T>& bias) {
    require_rank(input, 1, "dense");
    require_rank(weights, 2, "dense");
    require_rank(bias, 1, "dense");
    const std::size_t in_dim = input->value.size();
    const std::size_t out_dim = weights->value.dim(0);
    if (weights->value.dim(1) != in_dim) {
        throw ShapeError("dense: weights expect " + std::to_string(weights->value.dim(1)) +
                         " inputs, got " + std::to_string(in_dim));
    }
    if (bias->value.size() != out_dim) {
        throw ShapeError("dense: bias length does not match output size");
    }
    Tensor<T> out({out_dim});
    const T* x = input->value.data().data();
    const T* wt = weights->value.data().data();
    for (std::size_t o = 0; o < out_dim; ++o) {
        T acc = bias->value[o];
        const T* row = wt + o * in_dim;
        for (std::size_t i = 0; i < in_dim; ++i) acc += row[i] * x[i];
        out[o] = acc;
    }
    return make_result<T>(std::move(out), {input, weights, bias},
                          [in_dim, out_dim](Node<T>& node) {
                              Node<T>& in = *node.parents[0];
                              Node<T>& wn = *node.parents[1];
                              Node<T>& bn = *node.parents[2];
                              const T* g = node.value.grad().data();
                              const T* x = in.value.data().data();
                              const T* wt = wn.value.data().data();
                              if (bn.requires_grad) {
                                  T* gb = bn.value.grad().data();
                                  for (std::size_t o = 0; o < out_dim; ++o) gb[o] += g[o];
                              }
                              if (wn.requires_grad) {
                                  T* gw = wn.value.grad().data();
                                  for (std::size_t o = 0; o < out_dim; ++o) {
                                      for (std::size_t i = 0; i < in_dim; ++i) {
                                          gw[o * in_dim + i] += g[o] * x[i];
                                      }
                                  }
                              }
                              if (in.requires_grad) {
                                  T* gx = in.value.grad().data();
                                  for (std::size_t o = 0; o < out_dim; ++o) {
                                      for (std::size_t i = 0; i < in_dim; ++i) {
                                          gx[i] += g[o] * wt[o * in_dim + i];
                                      }
                                  }
                              }
                          });
}

#define BIRDFCN_INSTANTIATE_OPS(T)                                                     \
    template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&);           \
    template Var<T> maxpool2<T>(const Var<T>&);                                        \
    template Var<T> global_avg_pool<T>(const Var<T>&);                                 \
    template Var<T> relu<T>(const Var<T>&);                                            \
    template Var<T> tanh<T>(const Var<T>&);                                            \
    template Var<T> adaptive<T>(const Var<T>&, const Var<T>&, T, AdaptiveBase);        \
    template Var<T> softmax<T>(const Var<T>&);                                         \
    template Var<T> cross_entropy<T>(const Var<T>&, std::size_t);                      \
    template Var<T> dropout<T>(const Var<T>&, double, bool, std::mt19937_64&);         \
    template Var<T> sum<T>(const Var<T>&);                                             \
    template Var<T> flatten<T>(const Var<T>&);                                         \
    template Var<T> dense<T>(const Var<T>&, const Var<T>&, const Var<T>&);

BIRDFCN_INSTANTIATE_OPS(float)
BIRDFCN_INSTANTIATE_OPS(double)

#undef BIRDFCN_INSTANTIATE_OPS

}  // namespace ops
}  // namespace birdfcn::nn
