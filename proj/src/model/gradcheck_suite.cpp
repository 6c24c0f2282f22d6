#include "birdfcn/model/gradcheck_suite.hpp"

#include <random>

#include "birdfcn/model/fcn.hpp"
#include "birdfcn/nn/ops.hpp"

namespace birdfcn::model {

namespace {

using nn::Var;
namespace ops = nn::ops;

nn::Tensor<double> uniform(nn::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    nn::Tensor<double> t(std::move(shape));
    for (auto& v : t.data()) v = dist(rng);
    return t;
}

/// Turns a (C, H, W) activation into a scalar with a nontrivial gradient for every element.
Var<double> probe(const Var<double>& y) {
    return ops::cross_entropy(ops::softmax(ops::global_avg_pool(y)), 0);
}

FcnConfig toy(std::size_t depth, std::vector<std::size_t> widths, nn::Activation act) {
    FcnConfig c;
    c.depth = depth;
    c.n_classes = widths.back();
    c.widths = std::move(widths);
    c.activation = act;
    return c;
}

}  // namespace

std::vector<LayerCheck> run_gradcheck_suite(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<LayerCheck> out;
    auto check = [&](std::string layer, const std::function<Var<double>()>& fn, const std::vector<Var<double>>& in) {
        out.push_back({std::move(layer), nn::gradient_check(fn, in)});
    };

    for (std::size_t k : {3u, 1u}) {
        auto x = nn::watched(uniform({2, 6, 7}, rng));
        auto w = nn::parameter(uniform({3, 2, k, k}, rng), "kernels");
        auto b = nn::parameter(uniform({3}, rng), "bias");
        check(k == 3 ? "conv3x3" : "conv1x1", [=] { return probe(ops::conv2d(x, w, b)); }, {x, w, b});
    }
    {
        auto x = nn::watched(uniform({3, 6, 8}, rng));
        check("maxpool", [=] { return probe(ops::maxpool2(x)); }, {x});
    }
    {
        auto x = nn::watched(uniform({3, 4, 5}, rng));
        check("gap", [=] { return probe(x); }, {x});
    }
    {
        auto x = nn::watched(uniform({3, 4, 5}, rng));
        check("relu", [=] { return probe(ops::relu(x)); }, {x});
    }
    {
        auto x = nn::watched(uniform({3, 4, 5}, rng, -2.0, 2.0));
        check("tanh", [=] { return probe(ops::tanh(x)); }, {x});
    }
    for (auto base : {nn::AdaptiveBase::kTanh, nn::AdaptiveBase::kRelu}) {
        auto x = nn::watched(uniform({3, 4, 5}, rng, -2.0, 2.0));
        auto a = nn::parameter(nn::Tensor<double>({1}, {0.13}), "slope");
        check("adaptive-" + std::string(nn::to_string(base)),
              [=] { return probe(ops::adaptive(x, a, 10.0, base)); }, {x, a});
    }
    {
        auto x = nn::watched(uniform({3, 4, 5}, rng));
        check("dropout-off", [=] {
            std::mt19937_64 unused(0);
            return probe(ops::dropout(x, 0.4, false, unused));
        }, {x});
    }
    {
        auto z = nn::watched(uniform({5}, rng, -3.0, 3.0));
        check("softmax+ce", [=] { return ops::cross_entropy(ops::softmax(z), 2); }, {z});
    }
    {
        auto x = nn::watched(uniform({2, 3, 2}, rng));
        auto w = nn::parameter(uniform({4, 12}, rng), "weights");
        auto b = nn::parameter(uniform({4}, rng), "bias");
        check("dense", [=] { return ops::cross_entropy(ops::softmax(ops::dense(ops::flatten(x), w, b)), 1); },
              {x, w, b});
    }

    const auto input = uniform({16, 12}, rng);
    for (auto act : {nn::Activation::kRelu, nn::Activation::kTanh, nn::Activation::kAdaptive}) {
        const Network<double> net(toy(4, {4, 8, 4, 3}, act), seed + 1);
        check("fcn-" + std::string(nn::to_string(act)), [&net, &input] { return net.loss(input, 1, false, nullptr); },
              net.parameters());
    }
    {
        auto c = toy(3, {4, 6, 3}, nn::Activation::kTanh);
        c.head = Head::kDense;
        c.fixed_frames = 12;
        c.input_bands = 8;
        const Network<double> net(c, seed + 2);
        const auto x = uniform({8, 12}, rng);
        check("cnn-dense", [&net, &x] { return net.loss(x, 0, false, nullptr); }, net.parameters());
    }
    return out;
}

nn::GradCheckReport fault_injected_check(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto x = nn::constant(uniform({1, 6, 6}, rng));
    auto k = nn::parameter(uniform({2, 1, 3, 3}, rng), "kernels");
    auto b = nn::parameter(nn::Tensor<double>({2}), "bias");
    nn::detail::ScopedConvGradFault fault(1.5);
    return nn::gradient_check([=] { return probe(ops::conv2d(x, k, b)); }, {k});
}

}  // namespace birdfcn::model
