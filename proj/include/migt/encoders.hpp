#pragma once

#include <array>
#include <cstddef>

#include "migt/params.hpp"

namespace migt {

// ---------------------------------------------------------------------------
// Genomic encoder φ: G [B×d] -> Ḡ [B×d′]
//
//   G′ = LayerNorm(Dropout(GELU(G·W1 + b1), p1))
//   Ḡ  = GELU(LayerNorm(Dropout(GELU(G′·W2 + b2), p2))·W3 + b3)

struct GenomicEncoder {
    Dense layer1, layer2, layer3;
    LayerNormParams norm1, norm2;
    double p1 = 0.5, p2 = 0.3;

    static GenomicEncoder create(ParamStore& store, std::size_t input_dim, std::size_t hidden1, std::size_t hidden2,
                                 std::size_t embed_dim, double p1, double p2, double eps, Rng& rng);
    std::size_t input_dim() const { return layer1.weight.dim(0); }
};

Tensor genomic_forward(const Tensor& genomic, const GenomicEncoder& enc, const ForwardContext& ctx);

// ---------------------------------------------------------------------------
// Connectome encoder ψ: C [B×f] -> C̄ [B×d′]
//
//   C′ = LayerNorm(Dropout(GELU(C·W4 + b4), p3))
//   C̄  = GELU(C′·W5 + b5)

struct ConnectomeEncoder {
    Dense layer4, layer5;
    LayerNormParams norm;
    double p3 = 0.3;

    static ConnectomeEncoder create(ParamStore& store, std::size_t input_dim, std::size_t hidden, std::size_t embed_dim,
                                    double p3, double eps, Rng& rng);
    std::size_t input_dim() const { return layer4.weight.dim(0); }
};

Tensor connectome_forward(const Tensor& connectome, const ConnectomeEncoder& enc, const ForwardContext& ctx);

// ---------------------------------------------------------------------------
// Volume encoder: three conv3d blocks, each GELU then 2x average pooling.
// Stands in for a pretrained 3D DenseNet; the output keeps spatial structure
// for the spatial sequence attention block.

struct VolumeEncoder {
    std::array<Tensor, 3> kernels;
    std::array<Tensor, 3> biases;

    static VolumeEncoder create(ParamStore& store, std::array<std::size_t, 3> channels, std::size_t kernel_size,
                                Rng& rng);
    std::size_t out_channels() const { return kernels[2].dim(0); }
};

/// Spatial extents of the feature map produced from `volume` extents.
std::array<std::size_t, 3> volume_feature_extents(std::array<std::size_t, 3> volume);
/// Throws ConfigError unless every extent is a positive multiple of 8.
void check_volume_extents(std::array<std::size_t, 3> volume);

/// S [B×1×D×H×W] -> X [B×C×D/8×H/8×W/8].
Tensor volume_forward(const Tensor& volume, const VolumeEncoder& enc);

// ---------------------------------------------------------------------------
// ConvLSTM with elementwise peepholes:
//
//   I_t = σ(W_xi∗X_t + W_hi∗H_{t−1} + W_ci⊙C_{t−1} + b_i)
//   F_t = σ(W_xf∗X_t + W_hf∗H_{t−1} + W_cf⊙C_{t−1} + b_f)
//   C_t = F_t⊙C_{t−1} + I_t⊙tanh(W_xc∗X_t + W_hc∗H_{t−1} + b_c)
//   O_t = σ(W_xo∗X_t + W_ho∗H_{t−1} + W_co⊙C_{t−1} + b_o)
//   H_t = O_t⊙tanh(C_t)

struct ConvLstmParams {
    Tensor W_xi, W_hi, W_ci, b_i;
    Tensor W_xf, W_hf, W_cf, b_f;
    Tensor W_xc, W_hc, b_c;
    Tensor W_xo, W_ho, W_co, b_o;

    /// Peephole weights are per-voxel maps of shape [C×D×H×W].
    static ConvLstmParams create(ParamStore& store, const std::string& prefix, std::size_t channels,
                                 std::array<std::size_t, 3> extents, std::size_t kernel_size, Rng& rng);
};

/// Hidden and cell state. Undefined tensors stand for all-zero state.
struct LstmState {
    Tensor hidden;
    Tensor cell;
};

LstmState convlstm_cell(const Tensor& input, const LstmState& previous, const ConvLstmParams& params);

// ---------------------------------------------------------------------------
// Spatial sequence attention: conv3d -> ConvLSTM unrolled `steps` times over
// the same feature map from zero state -> conv3d back to the input space.

struct SsaParams {
    Tensor entry_kernel, entry_bias;
    ConvLstmParams lstm;
    Tensor exit_kernel, exit_bias;
    std::size_t steps = 2;

    static SsaParams create(ParamStore& store, std::size_t channels, std::array<std::size_t, 3> extents,
                            std::size_t kernel_size, std::size_t steps, Rng& rng);
};

Tensor ssa_forward(const Tensor& features, const SsaParams& params);

// ---------------------------------------------------------------------------
// Squeeze: global average pool over space, then a learned C -> d′ map.

struct SqueezeParams {
    Dense projection;

    static SqueezeParams create(ParamStore& store, std::size_t channels, std::size_t embed_dim, Rng& rng);
};

Tensor squeeze_volume(const Tensor& attended, const SqueezeParams& params);

}  // namespace migt
