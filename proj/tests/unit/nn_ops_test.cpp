#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "birdfcn/nn/ops.hpp"
#include "test_util.hpp"

using namespace birdfcn;
using namespace birdfcn::nn;
using birdfcn::test_support::random_tensor;

namespace {

// Quadruple-loop same-padded cross-correlation, written independently of ops::conv2d.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& k,
                          const Tensor<double>& b) {
    const long cin = static_cast<long>(x.dim(0)), h = static_cast<long>(x.dim(1)),
               w = static_cast<long>(x.dim(2));
    const long cout = static_cast<long>(k.dim(0)), ks = static_cast<long>(k.dim(2));
    const long pad = ks / 2;
    Tensor<double> out({static_cast<std::size_t>(cout), x.dim(1), x.dim(2)});
    for (long o = 0; o < cout; ++o)
        for (long r = 0; r < h; ++r)
            for (long c = 0; c < w; ++c) {
                double acc = b[o];
                for (long i = 0; i < cin; ++i)
                    for (long u = 0; u < ks; ++u)
                        for (long v = 0; v < ks; ++v) {
                            const long rr = r + u - pad, cc = c + v - pad;
                            if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
                            acc += k[((o * cin + i) * ks + u) * ks + v] * x[(i * h + rr) * w + cc];
                        }
                out[(o * h + r) * w + c] = acc;
            }
    return out;
}

}  // namespace

TEST(Conv2dTest, IdentityKernelReturnsInput) {
    auto x = constant(random_tensor({1, 3, 3}, 1));
    auto k = constant(Tensor<double>({1, 1, 1, 1}, 1.0));
    auto b = constant(Tensor<double>({1}, 0.0));
    auto y = ops::conv2d(x, k, b);
    EXPECT_EQ(y->value.values(), x->value.values());
}

TEST(Conv2dTest, SinglePixelWithPaddedZeros) {
    auto x = constant(Tensor<double>({1, 1, 1}, 5.0));
    auto k = constant(Tensor<double>({1, 1, 3, 3}, 1.0));
    auto b = constant(Tensor<double>({1}, 0.0));
    auto y = ops::conv2d(x, k, b);
    ASSERT_EQ(y->value.shape(), (Shape{1, 1, 1}));
    EXPECT_DOUBLE_EQ(y->value[0], 5.0);
}

TEST(Conv2dTest, MatchesNaiveLoopOracle) {
    auto x = random_tensor({2, 6, 6}, 11);
    auto k = random_tensor({3, 2, 3, 3}, 12);
    auto b = random_tensor({3}, 13);
    auto y = ops::conv2d(constant(x), constant(k), constant(b));
    auto expected = naive_conv(x, k, b);
    ASSERT_EQ(y->value.shape(), expected.shape());
    for (std::size_t i = 0; i < expected.size(); ++i) {
        EXPECT_NEAR(y->value[i], expected[i], 1e-10);
    }
}

TEST(Conv2dTest, SamePaddingPreservesExtents) {
    for (std::size_t ks : {1u, 3u}) {
        for (std::size_t h : {1u, 2u, 5u}) {
            for (std::size_t w : {1u, 4u, 7u}) {
                auto x = constant(random_tensor({2, h, w}, h * 31 + w));
                auto k = constant(random_tensor({4, 2, ks, ks}, ks));
                auto b = constant(Tensor<double>({4}));
                auto y = ops::conv2d(x, k, b);
                EXPECT_EQ(y->value.shape(), (Shape{4, h, w}));
            }
        }
    }
}

TEST(Conv2dTest, ChannelMismatchIsShapeError) {
    auto x = constant(Tensor<double>({2, 4, 4}));
    auto k = constant(Tensor<double>({1, 3, 3, 3}));
    auto b = constant(Tensor<double>({1}));
    EXPECT_THROW(ops::conv2d(x, k, b), ShapeError);
}

TEST(MaxPoolTest, MaxOfFour) {
    auto x = constant(Tensor<double>({1, 2, 2}, {1, 2, 3, 4}));
    auto y = ops::maxpool2(x);
    ASSERT_EQ(y->value.shape(), (Shape{1, 1, 1}));
    EXPECT_EQ(y->value[0], 4.0);
}

TEST(MaxPoolTest, OddEdgeDropped) {
    auto x = constant(Tensor<double>({1, 5, 5}, 7.0));
    auto y = ops::maxpool2(x);
    ASSERT_EQ(y->value.shape(), (Shape{1, 2, 2}));
    for (double v : y->value.data()) EXPECT_EQ(v, 7.0);
}

TEST(MaxPoolTest, DegenerateInput) {
    EXPECT_THROW(ops::maxpool2(constant(Tensor<double>({1, 1, 4}))), DegenerateInputError);
    EXPECT_THROW(ops::maxpool2(constant(Tensor<double>({1, 4, 1}))), DegenerateInputError);
}

TEST(MaxPoolTest, GradientRoutesToArgmaxWithRowMajorTieBreak) {
    // Window 0 has a tie between cells (0,0) and (1,1); the first in row-major order wins.
    auto x = watched(Tensor<double>({1, 2, 4}, {3, 1, 0, 2, 0, 3, 5, 1}));
    auto loss = ops::sum(ops::maxpool2(x));
    backward(loss);
    const std::vector<double> expected{1, 0, 0, 0, 0, 0, 1, 0};
    EXPECT_EQ(std::vector<double>(x->value.grad().begin(), x->value.grad().end()), expected);
}

TEST(MaxPoolTest, GradientMatchesFiniteDifference) {
    auto base = random_tensor({2, 4, 6}, 99);
    auto x = watched(base);
    backward(ops::sum(ops::maxpool2(x)));
    const double h = 1e-6;
    for (std::size_t i = 0; i < base.size(); ++i) {
        auto plus = base, minus = base;
        plus[i] += h;
        minus[i] -= h;
        const double fd = (ops::sum(ops::maxpool2(constant(plus)))->value[0] -
                           ops::sum(ops::maxpool2(constant(minus)))->value[0]) /
                          (2 * h);
        EXPECT_NEAR(x->value.grad()[i], fd, 1e-6);
    }
}

TEST(GlobalAvgPoolTest, ConstantChannels) {
    Tensor<double> t({2, 4, 4});
    for (std::size_t i = 16; i < 32; ++i) t[i] = 2.0;
    for (std::size_t i = 0; i < 16; ++i) t[i] = 1.0;
    auto y = ops::global_avg_pool(constant(t));
    EXPECT_EQ(y->value.values(), (std::vector<double>{1.0, 2.0}));
}

TEST(GlobalAvgPoolTest, SingletonIsIdentity) {
    auto t = random_tensor({5, 1, 1}, 3);
    auto y = ops::global_avg_pool(constant(t));
    EXPECT_EQ(y->value.values(), t.values());
}

TEST(GlobalAvgPoolTest, ArithmeticMean) {
    auto y = ops::global_avg_pool(constant(Tensor<double>({1, 2, 3}, {1, 2, 3, 4, 5, 6})));
    EXPECT_DOUBLE_EQ(y->value[0], 3.5);
}

TEST(GlobalAvgPoolTest, OutputShapeDependsOnlyOnChannels) {
    for (std::size_t h : {1u, 3u, 8u}) {
        for (std::size_t w : {1u, 10u, 77u}) {
            auto y = ops::global_avg_pool(constant(Tensor<double>({6, h, w})));
            EXPECT_EQ(y->value.shape(), (Shape{6}));
        }
    }
}

TEST(ActivationTest, Relu) {
    auto y = ops::relu(constant(Tensor<double>({3}, {-1, 0, 2})));
    EXPECT_EQ(y->value.values(), (std::vector<double>{0, 0, 2}));
}

TEST(ActivationTest, AdaptiveTanhWithUnitSlopeEqualsTanh) {
    auto x = random_tensor({50}, 4, -3, 3);
    auto slope = constant(Tensor<double>({1}, 0.1));
    auto y = ops::adaptive(constant(x), slope, 10.0, AdaptiveBase::kTanh);
    for (std::size_t i = 0; i < x.size(); ++i) {
        EXPECT_NEAR(y->value[i], std::tanh(x[i]), 1e-15);
    }
}

TEST(ActivationTest, AdaptiveSlopeGradientMatchesFiniteDifference) {
    const double x = 0.5, n = 10.0, a = 0.1, h = 1e-5;
    auto slope = parameter(Tensor<double>({1}, a));
    backward(ops::sum(ops::adaptive(constant(Tensor<double>({1}, x)), slope, n, AdaptiveBase::kTanh)));
    const double fd = (std::tanh(n * (a + h) * x) - std::tanh(n * (a - h) * x)) / (2 * h);
    const double analytic = slope->value.grad()[0];
    EXPECT_LE(std::abs(analytic - fd) / std::abs(fd), 1e-4);
}

TEST(SoftmaxTest, UniformOverSeventeenZeros) {
    auto p = ops::softmax(constant(Tensor<double>({17}, 0.0)));
    for (double v : p->value.data()) EXPECT_NEAR(v, 1.0 / 17.0, 1e-15);
}

TEST(SoftmaxTest, ClosedFormTwoClass) {
    auto p = ops::softmax(constant(Tensor<double>({2}, {std::log(2.0), 0.0})));
    EXPECT_NEAR(p->value[0], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(p->value[1], 1.0 / 3.0, 1e-15);
}

TEST(SoftmaxTest, ShiftInvariance) {
    auto z = random_tensor({9}, 5, -4, 4);
    auto shifted = z;
    for (auto& v : shifted.data()) v += 123.25;
    auto p = ops::softmax(constant(z));
    auto q = ops::softmax(constant(shifted));
    for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(p->value[i], q->value[i], 1e-12);
}

TEST(SoftmaxTest, PositiveAndNormalizedForRandomLogits) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng() % 40;
        // Spreads beyond ~745 underflow exp() to zero in double; stay inside that range.
        const double scale = std::pow(10.0, static_cast<double>(rng() % 3));
        auto p = ops::softmax(constant(random_tensor({n}, rng(), -scale, scale)));
        double total = 0;
        for (double v : p->value.data()) {
            EXPECT_GT(v, 0.0);
            total += v;
        }
        EXPECT_NEAR(total, 1.0, 1e-9);
    }
}

TEST(SoftmaxTest, NonFiniteInputIsNumericError) {
    EXPECT_THROW(ops::softmax(constant(Tensor<double>({2}, {NAN, 0.0}))), NumericError);
    EXPECT_THROW(ops::softmax(constant(Tensor<double>({2}, {INFINITY, 0.0}))), NumericError);
}

TEST(CrossEntropyTest, UniformSeventeenClasses) {
    auto p = constant(Tensor<double>({17}, 1.0 / 17.0));
    for (std::size_t t : {0u, 9u, 16u}) {
        EXPECT_NEAR(ops::cross_entropy(p, t)->value[0], std::log(17.0), 1e-12);
    }
    EXPECT_NEAR(std::log(17.0), 2.8332, 1e-4);
}

TEST(CrossEntropyTest, PerfectPredictionIsZero) {
    auto p = constant(Tensor<double>({3}, {0, 1, 0}));
    EXPECT_EQ(ops::cross_entropy(p, 1)->value[0], 0.0);
}

TEST(CrossEntropyTest, ZeroProbabilityIsClampedAndFinite) {
    auto p = constant(Tensor<double>({2}, {1, 0}));
    const double loss = ops::cross_entropy(p, 1)->value[0];
    EXPECT_NEAR(loss, -std::log(1e-12), 1e-12);
    EXPECT_NEAR(loss, 27.63, 5e-3);
}

TEST(CrossEntropyTest, OutOfRangeTarget) {
    EXPECT_THROW(ops::cross_entropy(constant(Tensor<double>({3}, 1.0 / 3)), 3), IndexError);
}

TEST(DropoutTest, ZeroRateIsIdentityInBothModes) {
    std::mt19937_64 rng(1);
    auto x = constant(random_tensor({100}, 2));
    EXPECT_EQ(ops::dropout(x, 0.0, true, rng)->value.values(), x->value.values());
    EXPECT_EQ(ops::dropout(x, 0.0, false, rng)->value.values(), x->value.values());
}

TEST(DropoutTest, EvalModeIsExactIdentity) {
    std::mt19937_64 rng(1);
    auto x = constant(random_tensor({1000}, 7));
    EXPECT_EQ(ops::dropout(x, 0.4, false, rng)->value.values(), x->value.values());
}

TEST(DropoutTest, InvertedScalingPreservesExpectation) {
    std::mt19937_64 rng(2024);
    auto x = constant(Tensor<double>({1000000}, 1.0));
    auto y = ops::dropout(x, 0.4, true, rng);
    const double mean =
        std::accumulate(y->value.data().begin(), y->value.data().end(), 0.0) / 1e6;
    EXPECT_NEAR(mean, 1.0, 0.01);
    std::size_t zeros = 0;
    for (double v : y->value.data()) {
        if (v == 0.0) ++zeros;
        else EXPECT_NEAR(v, 1.0 / 0.6, 1e-12);
    }
    EXPECT_NEAR(static_cast<double>(zeros) / 1e6, 0.4, 0.01);
}

TEST(DropoutTest, RateAtLeastOneIsParameterError) {
    std::mt19937_64 rng(1);
    auto x = constant(Tensor<double>({4}));
    EXPECT_THROW(ops::dropout(x, 1.0, true, rng), ParameterError);
    EXPECT_THROW(ops::dropout(x, -0.1, false, rng), ParameterError);
}

TEST(DenseTest, MatchesHandComputation) {
    auto x = constant(Tensor<double>({3}, {1, 2, 3}));
    auto w = constant(Tensor<double>({2, 3}, {1, 0, -1, 0.5, 0.5, 0.5}));
    auto b = constant(Tensor<double>({2}, {0.25, -1}));
    auto y = ops::dense(x, w, b);
    EXPECT_DOUBLE_EQ(y->value[0], -2 + 0.25);
    EXPECT_DOUBLE_EQ(y->value[1], 3 - 1);
    EXPECT_THROW(ops::dense(constant(Tensor<double>({4})), w, b), ShapeError);
}
