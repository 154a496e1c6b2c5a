#include <gtest/gtest.h>

#include <cmath>

#include "migt/encoders.hpp"
#include "migt/errors.hpp"
#include "../support/oracles.hpp"

using namespace migt;
using oracle::check_gradients;
using oracle::random_tensor;
using oracle::weighted_sum;

namespace {

void fill_all(const ParamStore& store, double value) {
    for (const auto& p : store.items()) std::fill(p.value.mutable_data().begin(), p.value.mutable_data().end(), value);
}

std::vector<Tensor> all_params(const ParamStore& store) {
    std::vector<Tensor> out;
    for (const auto& p : store.items()) out.push_back(p.value);
    return out;
}

std::vector<std::string> all_names(const ParamStore& store) {
    std::vector<std::string> out;
    for (const auto& p : store.items()) out.push_back(p.key);
    return out;
}

double sigmoid_ref(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST(GenomicEncoder, ShapesAndErrors) {
    ParamStore store;
    Rng rng(1);
    auto enc = GenomicEncoder::create(store, 12, 10, 8, 6, 0.5, 0.3, 1e-5, rng);
    auto out = genomic_forward(random_tensor({3, 12}, rng, 0, 1, false), enc, ForwardContext{});
    EXPECT_EQ(out.shape(), (Shape{3, 6}));
    EXPECT_THROW(genomic_forward(Tensor::zeros({3, 11}), enc, ForwardContext{}), DimensionError);
    // GELU output is bounded below by min_x x·Φ(x) ≈ −0.17.
    for (double v : out.data()) EXPECT_GT(v, -0.18);
}

TEST(GenomicEncoder, GradientsInTrainMode) {
    ParamStore store;
    Rng rng(2);
    auto enc = GenomicEncoder::create(store, 6, 5, 4, 3, 0.5, 0.3, 1e-5, rng);
    auto x = random_tensor({2, 6}, rng);
    auto wrt = all_params(store);
    wrt.push_back(x);
    auto names = all_names(store);
    names.push_back("G");
    auto r = check_gradients(
        [&] {
            Rng mask(5);
            return weighted_sum(genomic_forward(x, enc, ForwardContext{Mode::Train, &mask, false}));
        },
        wrt, names);
    EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(ConnectomeEncoder, GradientsAndShape) {
    ParamStore store;
    Rng rng(3);
    auto enc = ConnectomeEncoder::create(store, 7, 5, 4, 0.3, 1e-5, rng);
    auto x = random_tensor({2, 7}, rng);
    EXPECT_EQ(connectome_forward(x, enc, ForwardContext{}).shape(), (Shape{2, 4}));
    auto wrt = all_params(store);
    wrt.push_back(x);
    auto r = check_gradients(
        [&] {
            Rng mask(6);
            return weighted_sum(connectome_forward(x, enc, ForwardContext{Mode::Train, &mask, false}));
        },
        wrt);
    EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(VolumeEncoder, ExtentsContract) {
    EXPECT_NO_THROW(check_volume_extents({8, 16, 24}));
    EXPECT_THROW(check_volume_extents({8, 12, 8}), ConfigError);
    EXPECT_THROW(check_volume_extents({0, 8, 8}), ConfigError);
    EXPECT_EQ(volume_feature_extents({16, 24, 8}), (std::array<std::size_t, 3>{2, 3, 1}));

    ParamStore store;
    Rng rng(4);
    auto enc = VolumeEncoder::create(store, {2, 3, 4}, 3, rng);
    auto out = volume_forward(random_tensor({2, 1, 8, 16, 8}, rng, 0, 1, false), enc);
    EXPECT_EQ(out.shape(), (Shape{2, 4, 1, 2, 1}));
    EXPECT_THROW(volume_forward(Tensor::zeros({2, 2, 8, 8, 8}), enc), DimensionError);
}

TEST(VolumeEncoder, Gradients) {
    ParamStore store;
    Rng rng(5);
    auto enc = VolumeEncoder::create(store, {2, 2, 2}, 3, rng);
    auto x = random_tensor({1, 1, 8, 8, 8}, rng, 0, 1);
    auto wrt = all_params(store);
    wrt.push_back(x);
    auto r = check_gradients([&] { return weighted_sum(volume_forward(x, enc)); }, wrt);
    EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(ConvLstm, ZeroParametersGiveClosedForm) {
    ParamStore store;
    Rng rng(6);
    auto p = ConvLstmParams::create(store, "lstm", 2, {2, 2, 2}, 3, rng);
    fill_all(store, 0.0);
    auto x = random_tensor({1, 2, 2, 2, 2}, rng, -1, 1, false);
    // From zero state: every gate is σ(0) = ½ and the candidate tanh(0) = 0.
    auto first = convlstm_cell(x, LstmState{}, p);
    for (double v : first.cell.data()) EXPECT_EQ(v, 0.0);
    for (double v : first.hidden.data()) EXPECT_EQ(v, 0.0);
    // With a previous cell c: C = ½c, H = ½·tanh(½c).
    auto c_prev = random_tensor({1, 2, 2, 2, 2}, rng, -2, 2, false);
    auto h_prev = random_tensor({1, 2, 2, 2, 2}, rng, -1, 1, false);
    auto next = convlstm_cell(x, LstmState{h_prev, c_prev}, p);
    for (std::size_t i = 0; i < c_prev.numel(); ++i) {
        const double c = c_prev.at(i);
        EXPECT_NEAR(next.cell.at(i), 0.5 * c, 1e-12);
        EXPECT_NEAR(next.hidden.at(i), 0.5 * std::tanh(0.5 * c), 1e-12);
    }
}

TEST(ConvLstm, MatchesPointwiseReferenceWithUnitKernels) {
    // With 1×1×1 kernels every convolution is a per-voxel channel mix, so the
    // cell can be written out directly.
    ParamStore store;
    Rng rng(7);
    const std::size_t C = 2;
    auto p = ConvLstmParams::create(store, "lstm", C, {1, 2, 1}, 1, rng);
    for (const auto& item : store.items())
        for (auto& v : item.value.mutable_data()) v = rng.uniform(-1, 1);
    auto x = random_tensor({1, C, 1, 2, 1}, rng, -1, 1, false);
    auto h = random_tensor({1, C, 1, 2, 1}, rng, -1, 1, false);
    auto c = random_tensor({1, C, 1, 2, 1}, rng, -1, 1, false);
    auto out = convlstm_cell(x, LstmState{h, c}, p);

    const std::size_t V = 2;
    auto mix = [&](const Tensor& W, const Tensor& in, std::size_t o, std::size_t v) {
        double acc = 0.0;
        for (std::size_t i = 0; i < C; ++i) acc += W.at(o * C + i) * in.at(i * V + v);
        return acc;
    };
    for (std::size_t o = 0; o < C; ++o)
        for (std::size_t v = 0; v < V; ++v) {
            const std::size_t at = o * V + v;
            const double cp = c.at(at);
            const double ig = sigmoid_ref(mix(p.W_xi, x, o, v) + mix(p.W_hi, h, o, v) + p.W_ci.at(at) * cp + p.b_i.at(o));
            const double fg = sigmoid_ref(mix(p.W_xf, x, o, v) + mix(p.W_hf, h, o, v) + p.W_cf.at(at) * cp + p.b_f.at(o));
            const double cand = std::tanh(mix(p.W_xc, x, o, v) + mix(p.W_hc, h, o, v) + p.b_c.at(o));
            const double og = sigmoid_ref(mix(p.W_xo, x, o, v) + mix(p.W_ho, h, o, v) + p.W_co.at(at) * cp + p.b_o.at(o));
            const double cell = fg * cp + ig * cand;
            EXPECT_NEAR(out.cell.at(at), cell, 1e-14);
            EXPECT_NEAR(out.hidden.at(at), og * std::tanh(cell), 1e-14);
        }
}

TEST(ConvLstm, Gradients) {
    ParamStore store;
    Rng rng(8);
    auto p = ConvLstmParams::create(store, "lstm", 2, {2, 2, 2}, 3, rng);
    for (const auto& item : store.items())
        for (auto& v : item.value.mutable_data()) v = rng.uniform(-0.5, 0.5);
    auto x = random_tensor({1, 2, 2, 2, 2}, rng);
    auto wrt = all_params(store);
    wrt.push_back(x);
    auto r = check_gradients(
        [&] {
            LstmState s;
            for (int t = 0; t < 2; ++t) s = convlstm_cell(x, s, p);
            return weighted_sum(s.hidden);
        },
        wrt, all_names(store));
    EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(Ssa, PreservesShapeAndDifferentiates) {
    ParamStore store;
    Rng rng(9);
    auto ssa = SsaParams::create(store, 2, {2, 2, 2}, 3, 2, rng);
    auto sq = SqueezeParams::create(store, 2, 3, rng);
    auto x = random_tensor({2, 2, 2, 2, 2}, rng);
    EXPECT_EQ(ssa_forward(x, ssa).shape(), x.shape());
    EXPECT_EQ(squeeze_volume(ssa_forward(x, ssa), sq).shape(), (Shape{2, 3}));
    auto wrt = all_params(store);
    wrt.push_back(x);
    auto r = check_gradients([&] { return weighted_sum(squeeze_volume(ssa_forward(x, ssa), sq)); }, wrt);
    EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
    ParamStore other;
    EXPECT_THROW(SsaParams::create(other, 2, {2, 2, 2}, 3, 0, rng), ConfigError);
}
