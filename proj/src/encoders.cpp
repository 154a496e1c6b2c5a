#include "migt/encoders.hpp"

#include <string>

#include "migt/errors.hpp"

namespace migt {

namespace {

void require_input(const Tensor& x, std::size_t width, const char* what) {
    if (x.rank() != 2 || x.dim(1) != width) {
        throw DimensionError(std::string(what) + " input must be [B×" + std::to_string(width) + "], got " +
                             shape_string(x.shape()));
    }
}

Tensor conv_kernel(ParamStore& store, const std::string& key, std::size_t cout, std::size_t cin, std::size_t k,
                   Rng& rng) {
    const std::size_t k3 = k * k * k;
    return store.add_he(key, {cout, cin, k, k, k}, cin * k3, rng);
}

}  // namespace

GenomicEncoder GenomicEncoder::create(ParamStore& store, std::size_t input_dim, std::size_t hidden1,
                                      std::size_t hidden2, std::size_t embed_dim, double p1, double p2, double eps,
                                      Rng& rng) {
    GenomicEncoder enc;
    enc.layer1 = Dense::create(store, "genomic.W1", "genomic.b1", input_dim, hidden1, rng);
    enc.norm1 = LayerNormParams::create(store, "genomic.ln1", hidden1, eps);
    enc.layer2 = Dense::create(store, "genomic.W2", "genomic.b2", hidden1, hidden2, rng);
    enc.norm2 = LayerNormParams::create(store, "genomic.ln2", hidden2, eps);
    enc.layer3 = Dense::create(store, "genomic.W3", "genomic.b3", hidden2, embed_dim, rng);
    enc.p1 = p1;
    enc.p2 = p2;
    return enc;
}

Tensor genomic_forward(const Tensor& genomic, const GenomicEncoder& enc, const ForwardContext& ctx) {
    require_input(genomic, enc.input_dim(), "genomic");
    auto h = enc.norm1(dropout(gelu(enc.layer1(genomic)), enc.p1, ctx.mode, ctx.rng));
    auto h2 = enc.norm2(dropout(gelu(enc.layer2(h)), enc.p2, ctx.mode, ctx.rng));
    return gelu(enc.layer3(h2));
}

ConnectomeEncoder ConnectomeEncoder::create(ParamStore& store, std::size_t input_dim, std::size_t hidden,
                                            std::size_t embed_dim, double p3, double eps, Rng& rng) {
    ConnectomeEncoder enc;
    enc.layer4 = Dense::create(store, "connectome.W4", "connectome.b4", input_dim, hidden, rng);
    enc.norm = LayerNormParams::create(store, "connectome.ln", hidden, eps);
    enc.layer5 = Dense::create(store, "connectome.W5", "connectome.b5", hidden, embed_dim, rng);
    enc.p3 = p3;
    return enc;
}

Tensor connectome_forward(const Tensor& connectome, const ConnectomeEncoder& enc, const ForwardContext& ctx) {
    require_input(connectome, enc.input_dim(), "connectome");
    auto h = enc.norm(dropout(gelu(enc.layer4(connectome)), enc.p3, ctx.mode, ctx.rng));
    return gelu(enc.layer5(h));
}

// ---------------------------------------------------------------------------

VolumeEncoder VolumeEncoder::create(ParamStore& store, std::array<std::size_t, 3> channels, std::size_t kernel_size,
                                    Rng& rng) {
    VolumeEncoder enc;
    std::size_t cin = 1;
    for (std::size_t i = 0; i < 3; ++i) {
        const std::string prefix = "volume.conv" + std::to_string(i + 1);
        enc.kernels[i] = conv_kernel(store, prefix + ".W", channels[i], cin, kernel_size, rng);
        enc.biases[i] = store.add_zeros(prefix + ".b", {channels[i]}, ParamKind::Bias);
        cin = channels[i];
    }
    return enc;
}

void check_volume_extents(std::array<std::size_t, 3> volume) {
    for (auto e : volume) {
        if (e == 0 || e % 8 != 0) {
            throw ConfigError("volume extents " + shape_string({volume[0], volume[1], volume[2]}) +
                              " must be positive multiples of 8 (three 2x poolings)");
        }
    }
}

std::array<std::size_t, 3> volume_feature_extents(std::array<std::size_t, 3> volume) {
    check_volume_extents(volume);
    return {volume[0] / 8, volume[1] / 8, volume[2] / 8};
}

Tensor volume_forward(const Tensor& volume, const VolumeEncoder& enc) {
    if (volume.rank() != 5 || volume.dim(1) != 1) {
        throw DimensionError("volume input must be [B×1×D×H×W], got " + shape_string(volume.shape()));
    }
    check_volume_extents({volume.dim(2), volume.dim(3), volume.dim(4)});
    Tensor x = volume;
    for (std::size_t i = 0; i < 3; ++i) x = avg_pool3d(gelu(conv3d(x, enc.kernels[i], enc.biases[i])), 2);
    return x;
}

// ---------------------------------------------------------------------------

ConvLstmParams ConvLstmParams::create(ParamStore& store, const std::string& prefix, std::size_t channels,
                                      std::array<std::size_t, 3> extents, std::size_t kernel_size, Rng& rng) {
    ConvLstmParams p;
    const Shape peephole{channels, extents[0], extents[1], extents[2]};
    auto kernel = [&](const char* name) { return conv_kernel(store, prefix + "." + name, channels, channels, kernel_size, rng); };
    auto peep = [&](const char* name) {
        return store.add_glorot(prefix + "." + name, peephole, channels, channels, rng);
    };
    auto bias = [&](const char* name) { return store.add_zeros(prefix + "." + name, {channels}, ParamKind::Bias); };
    p.W_xi = kernel("W_xi");
    p.W_hi = kernel("W_hi");
    p.W_ci = peep("W_ci");
    p.b_i = bias("b_i");
    p.W_xf = kernel("W_xf");
    p.W_hf = kernel("W_hf");
    p.W_cf = peep("W_cf");
    p.b_f = bias("b_f");
    p.W_xc = kernel("W_xc");
    p.W_hc = kernel("W_hc");
    p.b_c = bias("b_c");
    p.W_xo = kernel("W_xo");
    p.W_ho = kernel("W_ho");
    p.W_co = peep("W_co");
    p.b_o = bias("b_o");
    return p;
}

LstmState convlstm_cell(const Tensor& input, const LstmState& previous, const ConvLstmParams& params) {
    if (input.rank() != 5) throw DimensionError("convlstm_cell: input must be [B×C×D×H×W], got " + shape_string(input.shape()));
    for (const Tensor* state : {&previous.hidden, &previous.cell}) {
        if (state->defined() && state->shape() != input.shape()) {
            throw DimensionError("convlstm_cell: state " + shape_string(state->shape()) + " does not match input " +
                                 shape_string(input.shape()));
        }
    }
    const bool has_hidden = previous.hidden.defined();
    const bool has_cell = previous.cell.defined();

    auto gate_input = [&](const Tensor& W_x, const Tensor& W_h, const Tensor* W_c, const Tensor& b) {
        Tensor acc = conv3d(input, W_x, b);
        if (has_hidden) acc = add(acc, conv3d(previous.hidden, W_h, Tensor{}));
        if (has_cell && W_c != nullptr) acc = add(acc, mul_broadcast(previous.cell, *W_c));
        return acc;
    };

    const Tensor in_gate = sigmoid(gate_input(params.W_xi, params.W_hi, &params.W_ci, params.b_i));
    const Tensor forget_gate = sigmoid(gate_input(params.W_xf, params.W_hf, &params.W_cf, params.b_f));
    const Tensor candidate = tanh(gate_input(params.W_xc, params.W_hc, nullptr, params.b_c));
    const Tensor out_gate = sigmoid(gate_input(params.W_xo, params.W_ho, &params.W_co, params.b_o));

    Tensor cell = mul(in_gate, candidate);
    if (has_cell) cell = add(mul(forget_gate, previous.cell), cell);
    return LstmState{mul(out_gate, tanh(cell)), cell};
}

SsaParams SsaParams::create(ParamStore& store, std::size_t channels, std::array<std::size_t, 3> extents,
                            std::size_t kernel_size, std::size_t steps, Rng& rng) {
    if (steps == 0) throw ConfigError("ConvLSTM must unroll at least one step");
    SsaParams p;
    p.entry_kernel = conv_kernel(store, "ssa.entry.W", channels, channels, kernel_size, rng);
    p.entry_bias = store.add_zeros("ssa.entry.b", {channels}, ParamKind::Bias);
    p.lstm = ConvLstmParams::create(store, "ssa", channels, extents, kernel_size, rng);
    p.exit_kernel = conv_kernel(store, "ssa.exit.W", channels, channels, kernel_size, rng);
    p.exit_bias = store.add_zeros("ssa.exit.b", {channels}, ParamKind::Bias);
    p.steps = steps;
    return p;
}

Tensor ssa_forward(const Tensor& features, const SsaParams& params) {
    const Tensor entry = conv3d(features, params.entry_kernel, params.entry_bias);
    LstmState state;
    for (std::size_t t = 0; t < params.steps; ++t) state = convlstm_cell(entry, state, params.lstm);
    return conv3d(state.hidden, params.exit_kernel, params.exit_bias);
}

SqueezeParams SqueezeParams::create(ParamStore& store, std::size_t channels, std::size_t embed_dim, Rng& rng) {
    return SqueezeParams{Dense::create(store, "squeeze.W", "squeeze.b", channels, embed_dim, rng)};
}

Tensor squeeze_volume(const Tensor& attended, const SqueezeParams& params) {
    return params.projection(global_avg_pool3d(attended));
}

}  // namespace migt
