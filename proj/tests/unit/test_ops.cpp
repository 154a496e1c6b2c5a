#include <gtest/gtest.h>

#include <cmath>

#include "migt/errors.hpp"
#include "migt/ops.hpp"
#include "../support/oracles.hpp"

using namespace migt;
using oracle::check_gradients;
using oracle::random_tensor;
using oracle::weighted_sum;

namespace {

constexpr double kGradTol = 1e-4;

void expect_grad_ok(const oracle::GradCheck& r) {
    EXPECT_LT(r.max_rel_error, kGradTol) << r.worst;
    EXPECT_GT(r.checked, 0u);
}

}  // namespace

// ---------------------------------------------------------------------------
// Gradients against central differences

TEST(OpGradients, Matmul2D) {
    Rng rng(1);
    auto a = random_tensor({3, 4}, rng), b = random_tensor({4, 5}, rng);
    expect_grad_ok(check_gradients([&] { return weighted_sum(matmul(a, b)); }, {a, b}));
}

TEST(OpGradients, MatmulBatched) {
    Rng rng(2);
    auto a = random_tensor({2, 3, 4}, rng), b = random_tensor({2, 4, 2}, rng);
    expect_grad_ok(check_gradients([&] { return weighted_sum(matmul(a, b)); }, {a, b}));
}

TEST(OpGradients, LinearWithAndWithoutBias) {
    Rng rng(3);
    auto x = random_tensor({2, 3, 4}, rng), w = random_tensor({4, 3}, rng), b = random_tensor({3}, rng);
    expect_grad_ok(check_gradients([&] { return weighted_sum(linear(x, w, b)); }, {x, w, b}));
    expect_grad_ok(check_gradients([&] { return weighted_sum(linear(x, w, Tensor{})); }, {x, w}));
}

TEST(OpGradients, ElementwiseArithmetic) {
    Rng rng(4);
    auto a = random_tensor({2, 3}, rng), b = random_tensor({2, 3}, rng), bias = random_tensor({3}, rng);
    expect_grad_ok(check_gradients([&] { return weighted_sum(add(a, b)); }, {a, b}));
    expect_grad_ok(check_gradients([&] { return weighted_sum(sub(a, b)); }, {a, b}));
    expect_grad_ok(check_gradients([&] { return weighted_sum(mul(a, b)); }, {a, b}));
    expect_grad_ok(check_gradients([&] { return weighted_sum(add_bias(a, bias)); }, {a, bias}));
    expect_grad_ok(check_gradients([&] { return weighted_sum(scale(a, -2.5)); }, {a}));
    expect_grad_ok(check_gradients([&] { return weighted_sum(add_scalar(a, 0.7)); }, {a}));
}

TEST(OpGradients, MulBroadcast) {
    Rng rng(5);
    auto x = random_tensor({3, 2, 4}, rng), w = random_tensor({2, 4}, rng);
    expect_grad_ok(check_gradients([&] { return weighted_sum(mul_broadcast(x, w)); }, {x, w}));
}

TEST(OpGradients, Activations) {
    Rng rng(6);
    auto x = random_tensor({4, 5}, rng, -3.0, 3.0);
    expect_grad_ok(check_gradients([&] { return weighted_sum(gelu(x)); }, {x}));
    expect_grad_ok(check_gradients([&] { return weighted_sum(migt::tanh(x)); }, {x}));
    expect_grad_ok(check_gradients([&] { return weighted_sum(sigmoid(x)); }, {x}));
}

TEST(OpGradients, Softmax) {
    Rng rng(7);
    auto x = random_tensor({2, 3, 5}, rng, -2.0, 2.0);
    expect_grad_ok(check_gradients([&] { return weighted_sum(softmax_lastdim(x)); }, {x}));
}

TEST(OpGradients, LayerNorm) {
    Rng rng(8);
    auto x = random_tensor({3, 6}, rng), g = random_tensor({6}, rng, 0.5, 1.5), b = random_tensor({6}, rng);
    expect_grad_ok(check_gradients([&] { return weighted_sum(layer_norm(x, g, b, 1e-5)); }, {x, g, b}));
}

TEST(OpGradients, DropoutWithFixedMask) {
    Rng rng(9);
    auto x = random_tensor({4, 6}, rng);
    expect_grad_ok(check_gradients(
        [&] {
            Rng mask(123);
            return weighted_sum(dropout(x, 0.4, Mode::Train, &mask));
        },
        {x}));
}

TEST(OpGradients, Conv3d) {
    Rng rng(10);
    auto x = random_tensor({2, 2, 3, 4, 3}, rng), w = random_tensor({3, 2, 3, 3, 3}, rng), b = random_tensor({3}, rng);
    expect_grad_ok(check_gradients([&] { return weighted_sum(conv3d(x, w, b)); }, {x, w, b}));
}

TEST(OpGradients, Conv3dUnbatched) {
    Rng rng(11);
    auto x = random_tensor({2, 2, 2, 2}, rng), w = random_tensor({1, 2, 1, 1, 1}, rng);
    expect_grad_ok(check_gradients([&] { return weighted_sum(conv3d(x, w, Tensor{})); }, {x, w}));
}

TEST(OpGradients, Pooling) {
    Rng rng(12);
    auto x = random_tensor({2, 2, 4, 2, 4}, rng);
    expect_grad_ok(check_gradients([&] { return weighted_sum(avg_pool3d(x, 2)); }, {x}));
    expect_grad_ok(check_gradients([&] { return weighted_sum(global_avg_pool3d(x)); }, {x}));
}

TEST(OpGradients, ShapeOps) {
    Rng rng(13);
    auto a = random_tensor({2, 3}, rng), b = random_tensor({2, 2}, rng);
    expect_grad_ok(check_gradients([&] { return weighted_sum(concat_lastdim({a, b, a})); }, {a, b}));
    expect_grad_ok(check_gradients([&] { return weighted_sum(slice_lastdim(a, 1, 2)); }, {a}));
    expect_grad_ok(check_gradients([&] { return weighted_sum(transpose_last2(a)); }, {a}));
    expect_grad_ok(check_gradients([&] { return weighted_sum(reshape(a, {3, 2})); }, {a}));
}

TEST(OpGradients, Reductions) {
    Rng rng(14);
    // Keep entries away from 0 where |x| has a kink.
    auto x = random_tensor({3, 4}, rng, 0.2, 1.0);
    auto y = Tensor({2}, {-0.7, 0.4}, true);
    expect_grad_ok(check_gradients([&] { return sum(x); }, {x}));
    expect_grad_ok(check_gradients([&] { return mean(x); }, {x}));
    expect_grad_ok(check_gradients([&] { return sum_squares(x); }, {x}));
    expect_grad_ok(check_gradients([&] { return sum_abs(y); }, {y}));
}

TEST(OpGradients, BinaryCrossEntropy) {
    Tensor p({4}, {0.2, 0.7, 0.55, 0.9}, true);
    const std::vector<double> labels{0, 1, 1, 0};
    expect_grad_ok(check_gradients([&] { return binary_cross_entropy(p, labels); }, {p}));
}

// ---------------------------------------------------------------------------
// Values

TEST(OpValues, GeluMatchesIndependentSeries) {
    Tensor x({5}, {-2.0, -0.5, 0.0, 1.0, 2.5});
    auto y = gelu(x);
    for (std::size_t i = 0; i < 5; ++i) {
        const double v = x.at(i);
        EXPECT_NEAR(y.at(i), v * oracle::normal_cdf_series(v), 1e-14);
    }
    EXPECT_EQ(y.at(2), 0.0);
}

TEST(OpValues, SigmoidIsStableAtExtremes) {
    auto y = sigmoid(Tensor({3}, {-800.0, 0.0, 800.0}));
    EXPECT_EQ(y.at(0), 0.0);
    EXPECT_EQ(y.at(1), 0.5);
    EXPECT_EQ(y.at(2), 1.0);
}

TEST(OpValues, SoftmaxRowsSumToOneAndIgnoreShifts) {
    Rng rng(20);
    auto x = random_tensor({4, 7}, rng, -5, 5, false);
    auto s = softmax_lastdim(x);
    auto shifted = softmax_lastdim(add_scalar(x, 1000.0));
    for (std::size_t r = 0; r < 4; ++r) {
        double total = 0.0;
        for (std::size_t c = 0; c < 7; ++c) {
            total += s.at(r * 7 + c);
            EXPECT_NEAR(s.at(r * 7 + c), shifted.at(r * 7 + c), 1e-12);
        }
        EXPECT_NEAR(total, 1.0, 1e-12);
    }
}

TEST(OpValues, LayerNormStandardizesWithPopulationVariance) {
    Tensor x({1, 4}, {1.0, 2.0, 3.0, 6.0});
    auto y = layer_norm(x, Tensor::full({4}, 1.0), Tensor::zeros({4}), 0.0);
    // mean 3, population variance (4+1+0+9)/4 = 3.5
    const double sd = std::sqrt(3.5);
    EXPECT_NEAR(y.at(0), -2.0 / sd, 1e-14);
    EXPECT_NEAR(y.at(3), 3.0 / sd, 1e-14);
    EXPECT_THROW(layer_norm(x, Tensor::full({4}, 1.0), Tensor::zeros({4}), -1.0), ParameterError);
}

TEST(OpValues, DropoutContract) {
    Tensor x = Tensor::full({1000}, 1.0);
    EXPECT_TRUE(dropout(x, 0.5, Mode::Eval, nullptr).same_storage(x));
    EXPECT_TRUE(dropout(x, 0.0, Mode::Train, nullptr).same_storage(x));
    EXPECT_THROW(dropout(x, 1.0, Mode::Train, nullptr), ParameterError);
    EXPECT_THROW(dropout(x, -0.1, Mode::Eval, nullptr), ParameterError);
    EXPECT_THROW(dropout(x, 0.3, Mode::Train, nullptr), ContractError);
    Rng rng(3);
    auto y = dropout(x, 0.3, Mode::Train, &rng);
    std::size_t kept = 0;
    for (double v : y.data()) {
        if (v != 0.0) {
            EXPECT_NEAR(v, 1.0 / 0.7, 1e-15);
            ++kept;
        }
    }
    EXPECT_NEAR(static_cast<double>(kept) / 1000.0, 0.7, 0.05);
}

TEST(OpValues, Conv3dMatchesDirectReference) {
    Rng rng(21);
    auto x = random_tensor({2, 3, 4, 5, 3}, rng, -1, 1, false);
    auto w = random_tensor({2, 3, 3, 3, 3}, rng, -1, 1, false);
    auto b = random_tensor({2}, rng, -1, 1, false);
    auto y = conv3d(x, w, b);
    auto ref = oracle::conv3d_reference(x, w, b);
    ASSERT_EQ(y.numel(), ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y.at(i), ref[i], 1e-12);

    auto w5 = random_tensor({1, 3, 5, 5, 5}, rng, -1, 1, false);
    auto y5 = conv3d(x, w5, Tensor{});
    auto ref5 = oracle::conv3d_reference(x, w5, Tensor{});
    for (std::size_t i = 0; i < ref5.size(); ++i) EXPECT_NEAR(y5.at(i), ref5[i], 1e-12);
}

TEST(OpValues, Conv3dRejectsBadKernels) {
    Tensor x = Tensor::zeros({1, 2, 4, 4, 4});
    EXPECT_THROW(conv3d(x, Tensor::zeros({1, 2, 2, 2, 2}), Tensor{}), ParameterError);
    EXPECT_THROW(conv3d(x, Tensor::zeros({1, 2, 3, 3, 1}), Tensor{}), ParameterError);
    EXPECT_THROW(conv3d(x, Tensor::zeros({1, 3, 3, 3, 3}), Tensor{}), DimensionError);
    EXPECT_THROW(conv3d(x, Tensor::zeros({1, 2, 3, 3, 3}), Tensor::zeros({2})), DimensionError);
}

TEST(OpValues, AvgPoolAveragesBlocks) {
    std::vector<double> v(8);
    for (int i = 0; i < 8; ++i) v[i] = i;
    auto y = avg_pool3d(Tensor({1, 1, 2, 2, 2}, v), 2);
    EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 1, 1}));
    EXPECT_DOUBLE_EQ(y.item(), 3.5);
    EXPECT_THROW(avg_pool3d(Tensor::zeros({1, 1, 3, 2, 2}), 2), ConfigError);
}

TEST(OpValues, BinaryCrossEntropyClosedForms) {
    Tensor half({3}, {0.5, 0.5, 0.5});
    const std::vector<double> mixed{0, 1, 1};
    EXPECT_NEAR(binary_cross_entropy(half, mixed).item(), std::log(2.0), 1e-15);
    Tensor p({2}, {0.9, 0.2});
    const std::vector<double> labels{1, 0};
    EXPECT_NEAR(binary_cross_entropy(p, labels).item(), -0.5 * (std::log(0.9) + std::log(0.8)), 1e-15);
    // Clamped, hence finite, at exact 0/1 probabilities.
    Tensor sure({2}, {0.0, 1.0});
    const std::vector<double> wrong{1, 0};
    const double upper = 1.0 - 1e-12;  // as represented in f64
    EXPECT_NEAR(binary_cross_entropy(sure, wrong).item(), -0.5 * (std::log(1e-12) + std::log(1.0 - upper)), 1e-12);
}

TEST(OpValues, MatmulErrorNamesBothShapes) {
    try {
        matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 5}));
        FAIL() << "expected DimensionError";
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[2x3]"), std::string::npos);
        EXPECT_NE(msg.find("[4x5]"), std::string::npos);
    }
}

TEST(OpValues, ConcatAndSliceRoundTrip) {
    Tensor a({2, 2}, {1, 2, 3, 4}), b({2, 1}, {5, 6});
    auto c = concat_lastdim({a, b});
    EXPECT_EQ(c.shape(), (Shape{2, 3}));
    const std::vector<double> expected{1, 2, 5, 3, 4, 6};
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(c.at(i), expected[i]);
    auto s = slice_lastdim(c, 2, 1);
    EXPECT_EQ(s.at(0), 5);
    EXPECT_EQ(s.at(1), 6);
    EXPECT_THROW(reshape(a, {3}), DimensionError);
}

TEST(OpValues, FiniteChecksFlagNonFiniteOutputs) {
    const bool before = finite_checks();
    set_finite_checks(true);
    Tensor x({1}, {1e308});
    EXPECT_THROW(scale(x, 10.0), Error);
    set_finite_checks(before);
}
