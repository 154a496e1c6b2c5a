#include <gtest/gtest.h>

#include "migt/errors.hpp"
#include "migt/ops.hpp"
#include "migt/rng.hpp"
#include "migt/tensor.hpp"

using namespace migt;

TEST(Tensor, ConstructionValidatesShapeAndSize) {
    EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
    EXPECT_THROW(Tensor({0, 3}, {}), DimensionError);
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    EXPECT_EQ(t.rank(), 2u);
    EXPECT_EQ(t.numel(), 6u);
    EXPECT_EQ(t.dim(1), 3u);
    EXPECT_EQ(shape_string(t.shape()), "[2x3]");
    EXPECT_DOUBLE_EQ(t.at(4), 5.0);
}

TEST(Tensor, CopiesShareStorage) {
    Tensor a = Tensor::zeros({3}, true);
    Tensor b = a;
    b.mutable_data()[1] = 7.0;
    EXPECT_DOUBLE_EQ(a.at(1), 7.0);
    EXPECT_TRUE(a.same_storage(b));
    Tensor c = a.detach();
    EXPECT_FALSE(c.same_storage(a));
    EXPECT_FALSE(c.requires_grad());
}

TEST(Tensor, OpOutputsAreImmutable) {
    Tensor a({2}, {1, 2});
    Tensor b = add(a, a);
    EXPECT_FALSE(b.is_leaf());
    EXPECT_THROW(b.mutable_data(), StateError);
}

TEST(Tensor, GradOnNonTrackingTensorThrows) {
    Tensor a({2}, {1, 2});
    EXPECT_THROW(a.grad(), StateError);
}

TEST(Tape, WithoutTapeNothingIsRecorded) {
    Tensor a({2}, {1, 2}, true);
    Tensor b = mul(a, a);
    EXPECT_FALSE(b.requires_grad());
}

TEST(Tape, SecondBackwardIsRejected) {
    Tensor a({2}, {1, 2}, true);
    Tape tape;
    Tensor loss;
    {
        TapeScope scope(tape);
        loss = sum(mul(a, a));
    }
    backward(loss, tape);
    EXPECT_TRUE(tape.consumed());
    EXPECT_THROW(backward(loss, tape), StateError);
}

TEST(Tape, NonScalarLossIsRejected) {
    Tensor a({2}, {1, 2}, true);
    Tape tape;
    Tensor y;
    {
        TapeScope scope(tape);
        y = mul(a, a);
    }
    EXPECT_THROW(backward(y, tape), ContractError);
}

TEST(Tape, ReusedTensorAccumulatesGradient) {
    // f(a) = Σ a·a + Σ a  →  ∂f/∂a = 2a + 1
    Tensor a({3}, {1.0, -2.0, 0.5}, true);
    Tape tape;
    Tensor loss;
    {
        TapeScope scope(tape);
        loss = add(sum(mul(a, a)), sum(a));
    }
    backward(loss, tape);
    EXPECT_DOUBLE_EQ(a.grad()[0], 3.0);
    EXPECT_DOUBLE_EQ(a.grad()[1], -3.0);
    EXPECT_DOUBLE_EQ(a.grad()[2], 2.0);
}

TEST(Tape, DiamondGraphVisitsEachNodeOnce) {
    // b = 2a; c = b + b; loss = Σ c·c = Σ 16a²  →  grad 32a
    Tensor a({2}, {1.0, 3.0}, true);
    Tape tape;
    Tensor loss;
    {
        TapeScope scope(tape);
        Tensor b = scale(a, 2.0);
        Tensor c = add(b, b);
        loss = sum(mul(c, c));
    }
    backward(loss, tape);
    EXPECT_DOUBLE_EQ(a.grad()[0], 32.0);
    EXPECT_DOUBLE_EQ(a.grad()[1], 96.0);
}

TEST(Tape, NestedScopesRestorePreviousTape) {
    Tape outer, inner;
    {
        TapeScope a(outer);
        EXPECT_EQ(active_tape(), &outer);
        {
            TapeScope b(inner);
            EXPECT_EQ(active_tape(), &inner);
        }
        EXPECT_EQ(active_tape(), &outer);
    }
    EXPECT_EQ(active_tape(), nullptr);
}

TEST(Rng, SameSeedSameStream) {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
    EXPECT_NE(derive_seed(1, 2), derive_seed(1, 3));
    EXPECT_NE(derive_seed(1, 2), derive_seed(2, 2));
}

TEST(Rng, UniformAndBelowStayInRange) {
    Rng r(3);
    for (int i = 0; i < 10000; ++i) {
        const double u = r.uniform();
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
        EXPECT_LT(r.below(7), 7u);
    }
}

TEST(Rng, NormalMomentsAreStandard) {
    Rng r(11);
    double s = 0, s2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double z = r.normal();
        s += z;
        s2 += z * z;
    }
    EXPECT_NEAR(s / n, 0.0, 0.01);
    EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Rng, ShuffleIsAPermutation) {
    Rng r(5);
    std::vector<int> v(50);
    for (int i = 0; i < 50; ++i) v[i] = i;
    r.shuffle(v);
    auto sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
}
