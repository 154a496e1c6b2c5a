#pragma once

#include <span>
#include <vector>

#include "migt/rng.hpp"
#include "migt/tensor.hpp"

// Differentiable operations. Each op records a backward rule onto the active
// Tape when any input requires grad; otherwise it only computes values.

namespace migt {

enum class Mode { Train, Eval };

/// Enables NaN/Inf screening of every op output (on by default in debug builds).
void set_finite_checks(bool enabled);
bool finite_checks();

/// [m×k]·[k×n] -> [m×n], or batched [B×m×k]·[B×k×n] -> [B×m×n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// x[..., in] · w[in×out] (+ b[out]). `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Elementwise (Hadamard) product of equally shaped tensors.
Tensor mul(const Tensor& a, const Tensor& b);
/// x[..., n] + b[n].
Tensor add_bias(const Tensor& x, const Tensor& bias);
/// x[B, rest...] ⊙ w[rest...], broadcasting w over the leading axis.
Tensor mul_broadcast(const Tensor& x, const Tensor& weight);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);

/// Exact GELU: x·Φ(x) with Φ(x) = ½(1 + erf(x/√2)).
Tensor gelu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);

Tensor softmax_lastdim(const Tensor& x);
/// Standardizes each last-axis slice with its population variance, then
/// applies gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
/// Inverted dropout. Eval mode (or p == 0) returns `x` itself.
Tensor dropout(const Tensor& x, double p, Mode mode, Rng* rng);

/// Same-padded 3D cross-correlation. x is [B×Cin×D×H×W] or [Cin×D×H×W];
/// kernels [Cout×Cin×k×k×k] with odd k; bias [Cout] or undefined.
Tensor conv3d(const Tensor& x, const Tensor& kernels, const Tensor& bias);
/// Non-overlapping average pooling over the last three axes of a rank-5 tensor.
Tensor avg_pool3d(const Tensor& x, std::size_t factor = 2);
/// [B×C×D×H×W] -> [B×C].
Tensor global_avg_pool3d(const Tensor& x);

Tensor concat_lastdim(const std::vector<Tensor>& parts);
Tensor slice_lastdim(const Tensor& x, std::size_t begin, std::size_t length);
/// Swaps the last two axes (rank ≥ 2).
Tensor transpose_last2(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_squares(const Tensor& x);
Tensor sum_abs(const Tensor& x);

/// Mean binary cross-entropy of probabilities `prob` [B] against 0/1 labels,
/// with prob clamped to [eps, 1 − eps].
Tensor binary_cross_entropy(const Tensor& prob, std::span<const double> labels, double eps = 1e-12);

}  // namespace migt
