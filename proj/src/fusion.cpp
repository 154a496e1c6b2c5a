#include "migt/fusion.hpp"

#include <cmath>

#include "migt/errors.hpp"

namespace migt {

AttentionResult scaled_dot_attention(const Tensor& query, const Tensor& key, const Tensor& value) {
    if (query.rank() != 3 || key.rank() != 3 || value.rank() != 3 || query.shape() != key.shape() ||
        value.dim(0) != query.dim(0) || value.dim(1) != key.dim(1)) {
        throw DimensionError("scaled_dot_attention: incompatible Q " + shape_string(query.shape()) + ", K " +
                             shape_string(key.shape()) + ", V " + shape_string(value.shape()));
    }
    const double d_k = static_cast<double>(query.dim(2));
    auto scores = scale(matmul(query, transpose_last2(key)), 1.0 / std::sqrt(d_k));
    auto weights = softmax_lastdim(scores);
    return AttentionResult{matmul(weights, value), {weights}};
}

XmhaParams XmhaParams::create(ParamStore& store, const std::string& prefix, std::size_t token_dim, std::size_t heads,
                              Rng& rng) {
    if (heads == 0 || token_dim % heads != 0) {
        throw ConfigError("x-MHA: token width " + std::to_string(token_dim) + " is not divisible by " +
                          std::to_string(heads) + " heads");
    }
    const std::size_t d_k = token_dim / heads;
    XmhaParams p;
    for (std::size_t i = 0; i < heads; ++i) {
        const std::string head = prefix + ".head" + std::to_string(i);
        p.W_Q.push_back(store.add_glorot(head + ".W_Q", {token_dim, d_k}, token_dim, d_k, rng));
        p.W_K.push_back(store.add_glorot(head + ".W_K", {token_dim, d_k}, token_dim, d_k, rng));
        p.W_V.push_back(store.add_glorot(head + ".W_V", {token_dim, d_k}, token_dim, d_k, rng));
    }
    p.W_o = store.add_glorot(prefix + ".W_o", {heads * d_k, token_dim}, heads * d_k, token_dim, rng);
    return p;
}

AttentionResult cross_modal_mha(const Tensor& query_source, const Tensor& key_source, const Tensor& value_source,
                                const XmhaParams& params) {
    const Tensor* sources[] = {&query_source, &key_source, &value_source};
    for (const Tensor* s : sources) {
        if (s->rank() != 3 || s->shape() != query_source.shape() || s->dim(2) != params.token_dim()) {
            throw DimensionError("x-MHA: inputs must share shape [B×n×" + std::to_string(params.token_dim()) +
                                 "], got Q " + shape_string(query_source.shape()) + ", K " +
                                 shape_string(key_source.shape()) + ", V " + shape_string(value_source.shape()));
        }
    }
    std::vector<Tensor> heads;
    AttentionResult result;
    for (std::size_t i = 0; i < params.heads(); ++i) {
        auto head = scaled_dot_attention(linear(query_source, params.W_Q[i], Tensor{}),
                                         linear(key_source, params.W_K[i], Tensor{}),
                                         linear(value_source, params.W_V[i], Tensor{}));
        heads.push_back(head.output);
        result.weights.push_back(head.weights.front());
    }
    const Tensor joined = heads.size() == 1 ? heads.front() : concat_lastdim(heads);
    result.output = linear(joined, params.W_o, Tensor{});
    return result;
}

TransFusorParams TransFusorParams::create(ParamStore& store, const std::string& prefix, std::size_t embed_dim,
                                          std::size_t heads, std::size_t tokens, double eps, Rng& rng) {
    if (tokens == 0 || embed_dim % tokens != 0) {
        throw ConfigError("TransFusor: embedding width " + std::to_string(embed_dim) + " is not divisible into " +
                          std::to_string(tokens) + " tokens");
    }
    TransFusorParams p;
    p.query_map = Dense::create(store, prefix + ".q.W", prefix + ".q.b", embed_dim, embed_dim, rng);
    p.key_map = Dense::create(store, prefix + ".k.W", prefix + ".k.b", embed_dim, embed_dim, rng);
    p.attention = XmhaParams::create(store, prefix, embed_dim / tokens, heads, rng);
    p.norm = LayerNormParams::create(store, prefix + ".ln", embed_dim, eps);
    p.tokens = tokens;
    return p;
}

FusorResult transfusor(const Tensor& query_source, const Tensor& value_source, const TransFusorParams& params) {
    const std::size_t width = params.embed_dim();
    for (const Tensor* s : {&query_source, &value_source}) {
        if (s->rank() != 2 || s->dim(1) != width || s->dim(0) != query_source.dim(0)) {
            throw DimensionError("TransFusor: inputs must be [B×" + std::to_string(width) + "], got " +
                                 shape_string(query_source.shape()) + " and " + shape_string(value_source.shape()));
        }
    }
    const std::size_t batch = query_source.dim(0);
    const Shape tokens{batch, params.tokens, width / params.tokens};
    auto q = reshape(params.query_map(query_source), tokens);
    auto k = reshape(params.key_map(query_source), tokens);
    auto v = reshape(value_source, tokens);
    auto attended = cross_modal_mha(q, k, v, params.attention);
    auto mixed = reshape(attended.output, {batch, width});
    return FusorResult{mul(value_source, params.norm(add(value_source, mixed))), std::move(attended.weights)};
}

FusorResult gc_transfusor(const Tensor& genomic, const Tensor& connectome, const TransFusorParams& params) {
    return transfusor(genomic, connectome, params);
}

FusorResult gcs_transfusor(const Tensor& gc_fused, const Tensor& squeezed_volume, const TransFusorParams& params) {
    return transfusor(gc_fused, squeezed_volume, params);
}

AffParams AffParams::create(ParamStore& store, const std::string& prefix, std::size_t embed_dim, Rng& rng) {
    return AffParams{Dense::create(store, prefix + ".W", prefix + ".b", 2 * embed_dim, embed_dim, rng)};
}

Tensor aff_fuse(const Tensor& a, const Tensor& b, const AffParams& params) {
    if (a.shape() != b.shape()) {
        throw DimensionError("AFF: embeddings differ in shape: " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
    auto g = sigmoid(params.gate(concat_lastdim({a, b})));
    // g⊙a + (1−g)⊙b == b + g⊙(a − b)
    return add(b, mul(g, sub(a, b)));
}

HeadParams HeadParams::create(ParamStore& store, std::size_t input_dim, std::size_t hidden1, std::size_t hidden2,
                              double dropout, double eps, Rng& rng) {
    HeadParams p;
    p.layer1 = Dense::create(store, "head.W1", "head.b1", input_dim, hidden1, rng);
    p.norm = LayerNormParams::create(store, "head.ln", hidden1, eps);
    p.layer2 = Dense::create(store, "head.W2", "head.b2", hidden1, hidden2, rng);
    p.output = Dense::create(store, "head.W3", "head.b3", hidden2, 1, rng);
    p.dropout = dropout;
    return p;
}

HeadResult classify(const Tensor& features, const HeadParams& params, const ForwardContext& ctx) {
    if (features.rank() != 2 || features.dim(1) != params.layer1.weight.dim(0)) {
        throw DimensionError("classification head expects [B×" + std::to_string(params.layer1.weight.dim(0)) +
                             "], got " + shape_string(features.shape()));
    }
    auto h = dropout(params.norm(gelu(params.layer1(features))), params.dropout, ctx.mode, ctx.rng);
    auto h2 = gelu(params.layer2(h));
    auto logit = reshape(params.output(h2), {features.dim(0)});
    return HeadResult{logit, sigmoid(logit)};
}

Tensor bce_loss(const Tensor& prob, std::span<const double> labels) {
    for (double y : labels) {
        if (y != 0.0 && y != 1.0) throw ParameterError("bce_loss: label " + std::to_string(y) + " is not 0 or 1");
    }
    return binary_cross_entropy(prob, labels, 1e-12);
}

}  // namespace migt
