#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "migt/params.hpp"

namespace migt {

struct AttentionResult {
    Tensor output;
    /// One [B×n×n] softmax weight tensor per head.
    std::vector<Tensor> weights;
};

/// Softmax(Q·Kᵀ / √d_k)·V for Q, K, V of shape [B×n×d_k].
AttentionResult scaled_dot_attention(const Tensor& query, const Tensor& key, const Tensor& value);

/// Cross-modal multi-head attention over token sequences [B×n×m]:
///   x-MHA(Q, K, V) = (h_1 ⊕ … ⊕ h_h)·W^o,  h_i = SA(Q·W^Q_i, K·W^K_i, V·W^V_i)
/// with W^Q_i, W^K_i, W^V_i of shape [m×d_k], h·d_k = m, and W^o [m×m].
struct XmhaParams {
    std::vector<Tensor> W_Q, W_K, W_V;
    Tensor W_o;

    static XmhaParams create(ParamStore& store, const std::string& prefix, std::size_t token_dim, std::size_t heads,
                             Rng& rng);
    std::size_t heads() const { return W_Q.size(); }
    std::size_t token_dim() const { return W_o.dim(1); }
    std::size_t head_dim() const { return W_Q.front().dim(1); }
};

AttentionResult cross_modal_mha(const Tensor& query_source, const Tensor& key_source, const Tensor& value_source,
                                const XmhaParams& params);

/// One TransFusor stage:
///   Q = Linear_q(A), K = Linear_k(A), V = B
///   out = B ⊙ LayerNorm(B + x-MHA(Q, K, V))
/// where A, B are [B×d′] embeddings viewed as `tokens` tokens of d′/tokens.
struct TransFusorParams {
    Dense query_map, key_map;
    XmhaParams attention;
    LayerNormParams norm;
    std::size_t tokens = 1;

    static TransFusorParams create(ParamStore& store, const std::string& prefix, std::size_t embed_dim,
                                   std::size_t heads, std::size_t tokens, double eps, Rng& rng);
    std::size_t embed_dim() const { return query_map.weight.dim(0); }
};

struct FusorResult {
    Tensor fused;
    std::vector<Tensor> attention;
};

FusorResult transfusor(const Tensor& query_source, const Tensor& value_source, const TransFusorParams& params);

/// GC′ = C̄ ⊙ LayerNorm(C̄ + x-MHA(Linear(Ḡ), Linear(Ḡ), C̄)).
FusorResult gc_transfusor(const Tensor& genomic, const Tensor& connectome, const TransFusorParams& params);
/// GCS′ = X̂ ⊙ LayerNorm(X̂ + x-MHA(Linear(GC′), Linear(GC′), X̂)).
FusorResult gcs_transfusor(const Tensor& gc_fused, const Tensor& squeezed_volume, const TransFusorParams& params);

/// Sigmoid-gated convex combination: g = σ([A ⊕ B]·W + b), out = g⊙A + (1−g)⊙B.
struct AffParams {
    Dense gate;

    static AffParams create(ParamStore& store, const std::string& prefix, std::size_t embed_dim, Rng& rng);
};

Tensor aff_fuse(const Tensor& a, const Tensor& b, const AffParams& params);

/// Classification head: dense→GELU→LayerNorm→Dropout→dense→GELU→dense(1)→σ.
struct HeadParams {
    Dense layer1, layer2, output;
    LayerNormParams norm;
    double dropout = 0.3;

    static HeadParams create(ParamStore& store, std::size_t input_dim, std::size_t hidden1, std::size_t hidden2,
                             double dropout, double eps, Rng& rng);
};

struct HeadResult {
    Tensor logit;  // [B]
    Tensor prob;   // [B]
};

HeadResult classify(const Tensor& features, const HeadParams& params, const ForwardContext& ctx);

/// Mean binary cross-entropy; throws ParameterError for labels outside {0, 1}.
Tensor bce_loss(const Tensor& prob, std::span<const double> labels);

}  // namespace migt
