#include "migt/ops.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <string>

#include <cblas.h>

#include "migt/errors.hpp"

namespace migt {

namespace {

#ifdef NDEBUG
std::atomic<bool> g_finite_checks{false};
#else
std::atomic<bool> g_finite_checks{true};
#endif

bool tracking(std::initializer_list<const Tensor*> inputs) {
    if (active_tape() == nullptr) return false;
    for (const Tensor* t : inputs) {
        if (t->defined() && t->requires_grad()) return true;
    }
    return false;
}

Tensor make_output(Shape shape, std::vector<double> data, bool track, const char* op) {
    if (g_finite_checks.load(std::memory_order_relaxed)) {
        for (double v : data) {
            if (!std::isfinite(v)) throw Error(std::string(op) + " produced a non-finite value");
        }
    }
    return Tensor::from_op(std::move(shape), std::move(data), track);
}

void record(std::vector<Tensor> inputs, const Tensor& output, Tape::BackwardFn fn) {
    active_tape()->record(std::move(inputs), output, std::move(fn));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
}

bool wants_grad(const Tensor& t) { return t.defined() && t.requires_grad(); }

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;


// Row-major C = op(A)·op(B) + beta·C with op(A) [m×k] and op(B) [k×n].
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* A, const double* B,
          double beta, double* C) {
    if (m == 0 || n == 0) return;
    const auto lda = static_cast<int>(trans_a ? m : k);
    const auto ldb = static_cast<int>(trans_b ? k : n);
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
                static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), 1.0, A, lda, B, ldb, beta, C,
                static_cast<int>(n));
}
}  // namespace

void set_finite_checks(bool enabled) { g_finite_checks.store(enabled); }
bool finite_checks() { return g_finite_checks.load(); }

// ---------------------------------------------------------------------------
// Products

Tensor matmul(const Tensor& a, const Tensor& b) {
    const bool batched = a.rank() == 3;
    const bool shapes_ok = (a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0)) ||
                           (a.rank() == 3 && b.rank() == 3 && a.dim(0) == b.dim(0) && a.dim(2) == b.dim(1));
    if (!shapes_ok) {
        throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                             shape_string(b.shape()));
    }
    const std::size_t batch = batched ? a.dim(0) : 1;
    const std::size_t m = a.dim(a.rank() - 2), k = a.dim(a.rank() - 1), n = b.dim(b.rank() - 1);
    std::vector<double> out(batch * m * n, 0.0);
    auto ad = a.data();
    auto bd = b.data();
    for (std::size_t s = 0; s < batch; ++s) {
        gemm(false, false, m, n, k, ad.data() + s * m * k, bd.data() + s * k * n, 0.0, out.data() + s * m * n);
    }
    Shape shape = batched ? Shape{batch, m, n} : Shape{m, n};
    const bool track = tracking({&a, &b});
    auto result = make_output(std::move(shape), std::move(out), track, "matmul");
    if (track) {
        record({a, b}, result, [a, b, result, batch, m, k, n] {
            auto g = result.grad();
            for (std::size_t s = 0; s < batch; ++s) {
                const double* G = g.data() + s * m * n;
                // dA = G·Bᵀ, dB = Aᵀ·G
                if (a.requires_grad()) {
                    gemm(false, true, m, k, n, G, b.data().data() + s * k * n, 1.0,
                         a.mutable_grad().data() + s * m * k);
                }
                if (b.requires_grad()) {
                    gemm(true, false, k, n, m, a.data().data() + s * m * k, G, 1.0,
                         b.mutable_grad().data() + s * k * n);
                }
            }
        });
    }
    return result;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    if (x.rank() < 1 || weight.rank() != 2 || x.dim(x.rank() - 1) != weight.dim(0)) {
        throw DimensionError("linear: input " + shape_string(x.shape()) + " incompatible with weight " +
                             shape_string(weight.shape()));
    }
    const std::size_t in = weight.dim(0), out_dim = weight.dim(1);
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_dim)) {
        throw DimensionError("linear: bias " + shape_string(bias.shape()) + " does not match weight " +
                             shape_string(weight.shape()));
    }
    const std::size_t rows = x.numel() / in;
    std::vector<double> out(rows * out_dim, 0.0);
    if (bias.defined()) {
        for (std::size_t r = 0; r < rows; ++r) std::copy(bias.data().begin(), bias.data().end(), out.data() + r * out_dim);
    }
    gemm(false, false, rows, out_dim, in, x.data().data(), weight.data().data(), 1.0, out.data());
    Shape shape = x.shape();
    shape.back() = out_dim;
    const bool track = tracking({&x, &weight, &bias});
    auto result = make_output(std::move(shape), std::move(out), track, "linear");
    if (track) {
        record({x, weight, bias}, result, [x, weight, bias, result, rows, in, out_dim] {
            auto g = result.grad();
            if (x.requires_grad()) gemm(false, true, rows, in, out_dim, g.data(), weight.data().data(), 1.0, x.mutable_grad().data());
            if (weight.requires_grad()) gemm(true, false, in, out_dim, rows, x.data().data(), g.data(), 1.0, weight.mutable_grad().data());
            if (wants_grad(bias)) {
                auto gb = bias.mutable_grad();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < out_dim; ++j) gb[j] += g[r * out_dim + j];
            }
        });
    }
    return result;
}
// ---------------------------------------------------------------------------
// Elementwise arithmetic

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    auto ad = a.data(), bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
    const bool track = tracking({&a, &b});
    auto result = make_output(a.shape(), std::move(out), track, "add");
    if (track) {
        record({a, b}, result, [a, b, result] {
            auto g = result.grad();
            for (const Tensor* t : {&a, &b}) {
                if (!t->requires_grad()) continue;
                auto gt = t->mutable_grad();
                for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
            }
        });
    }
    return result;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.numel());
    auto ad = a.data(), bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
    const bool track = tracking({&a, &b});
    auto result = make_output(a.shape(), std::move(out), track, "sub");
    if (track) {
        record({a, b}, result, [a, b, result] {
            auto g = result.grad();
            if (a.requires_grad()) {
                auto ga = a.mutable_grad();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (b.requires_grad()) {
                auto gb = b.mutable_grad();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
            }
        });
    }
    return result;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    auto ad = a.data(), bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
    const bool track = tracking({&a, &b});
    auto result = make_output(a.shape(), std::move(out), track, "mul");
    if (track) {
        record({a, b}, result, [a, b, result] {
            auto g = result.grad();
            auto ad = a.data(), bd = b.data();
            if (a.requires_grad()) {
                auto ga = a.mutable_grad();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bd[i];
            }
            if (b.requires_grad()) {
                auto gb = b.mutable_grad();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ad[i];
            }
        });
    }
    return result;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    if (bias.rank() != 1 || x.dim(x.rank() - 1) != bias.dim(0)) {
        throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not match " +
                             shape_string(x.shape()));
    }
    const std::size_t n = bias.dim(0);
    std::vector<double> out(x.data().begin(), x.data().end());
    auto bd = bias.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i % n];
    const bool track = tracking({&x, &bias});
    auto result = make_output(x.shape(), std::move(out), track, "add_bias");
    if (track) {
        record({x, bias}, result, [x, bias, result, n] {
            auto g = result.grad();
            if (x.requires_grad()) {
                auto gx = x.mutable_grad();
                for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
            }
            if (bias.requires_grad()) {
                auto gb = bias.mutable_grad();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
            }
        });
    }
    return result;
}

Tensor mul_broadcast(const Tensor& x, const Tensor& weight) {
    Shape rest(x.shape().begin() + 1, x.shape().end());
    if (x.rank() < 2 || rest != weight.shape()) {
        throw DimensionError("mul_broadcast: weight " + shape_string(weight.shape()) + " does not match " +
                             shape_string(x.shape()) + " without its leading axis");
    }
    const std::size_t n = weight.numel();
    std::vector<double> out(x.numel());
    auto xd = x.data(), wd = weight.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * wd[i % n];
    const bool track = tracking({&x, &weight});
    auto result = make_output(x.shape(), std::move(out), track, "mul_broadcast");
    if (track) {
        record({x, weight}, result, [x, weight, result, n] {
            auto g = result.grad();
            auto xd = x.data(), wd = weight.data();
            if (x.requires_grad()) {
                auto gx = x.mutable_grad();
                for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * wd[i % n];
            }
            if (weight.requires_grad()) {
                auto gw = weight.mutable_grad();
                for (std::size_t i = 0; i < g.size(); ++i) gw[i % n] += g[i] * xd[i];
            }
        });
    }
    return result;
}

Tensor scale(const Tensor& x, double factor) {
    std::vector<double> out(x.data().begin(), x.data().end());
    for (auto& v : out) v *= factor;
    const bool track = tracking({&x});
    auto result = make_output(x.shape(), std::move(out), track, "scale");
    if (track) {
        record({x}, result, [x, result, factor] {
            auto g = result.grad();
            auto gx = x.mutable_grad();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
        });
    }
    return result;
}

Tensor add_scalar(const Tensor& x, double offset) {
    std::vector<double> out(x.data().begin(), x.data().end());
    for (auto& v : out) v += offset;
    const bool track = tracking({&x});
    auto result = make_output(x.shape(), std::move(out), track, "add_scalar");
    if (track) {
        record({x}, result, [x, result] {
            auto g = result.grad();
            auto gx = x.mutable_grad();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        });
    }
    return result;
}

// ---------------------------------------------------------------------------
// Activations

namespace {

// Unary elementwise op whose derivative is expressed via (x, y).
template <typename Forward, typename Derivative>
Tensor unary(const Tensor& x, const char* name, Forward f, Derivative df) {
    auto xd = x.data();
    std::vector<double> out(xd.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xd[i]);
    const bool track = tracking({&x});
    auto result = make_output(x.shape(), std::move(out), track, name);
    if (track) {
        record({x}, result, [x, result, df] {
            auto g = result.grad();
            auto xd = x.data();
            auto yd = result.data();
            auto gx = x.mutable_grad();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xd[i], yd[i]);
        });
    }
    return result;
}

double std_normal_cdf(double x) { return 0.5 * (1.0 + std::erf(x * kInvSqrt2)); }

}  // namespace

Tensor gelu(const Tensor& x) {
    return unary(
        x, "gelu", [](double v) { return v * std_normal_cdf(v); },
        [](double v, double) { return std_normal_cdf(v) + v * kInvSqrt2Pi * std::exp(-0.5 * v * v); });
}

Tensor tanh(const Tensor& x) {
    return unary(
        x, "tanh", [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
    return unary(
        x, "sigmoid",
        [](double v) {
            if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

// ---------------------------------------------------------------------------
// Normalization

Tensor softmax_lastdim(const Tensor& x) {
    const std::size_t n = x.dim(x.rank() - 1);
    const std::size_t rows = x.numel() / n;
    auto xd = x.data();
    std::vector<double> out(xd.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xd.data() + r * n;
        double* o = out.data() + r * n;
        const double mx = *std::max_element(in, in + n);
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            o[j] = std::exp(in[j] - mx);
            total += o[j];
        }
        for (std::size_t j = 0; j < n; ++j) o[j] /= total;
    }
    const bool track = tracking({&x});
    auto result = make_output(x.shape(), std::move(out), track, "softmax");
    if (track) {
        record({x}, result, [x, result, rows, n] {
            auto g = result.grad();
            auto y = result.data();
            auto gx = x.mutable_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
                for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
            }
        });
    }
    return result;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    const std::size_t n = x.dim(x.rank() - 1);
    if (gain.shape() != Shape{n} || bias.shape() != Shape{n}) {
        throw DimensionError("layer_norm: gain " + shape_string(gain.shape()) + " / bias " +
                             shape_string(bias.shape()) + " must match last axis of " + shape_string(x.shape()));
    }
    if (eps < 0) throw ParameterError("layer_norm: eps must be non-negative");
    const std::size_t rows = x.numel() / n;
    auto xd = x.data(), gd = gain.data(), bd = bias.data();
    std::vector<double> out(xd.size()), normalized(xd.size()), inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xd.data() + r * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += in[j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (in[j] - mu) * (in[j] - mu);
        var /= static_cast<double>(n);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            const double xh = (in[j] - mu) * inv_std[r];
            normalized[r * n + j] = xh;
            out[r * n + j] = xh * gd[j] + bd[j];
        }
    }
    const bool track = tracking({&x, &gain, &bias});
    auto result = make_output(x.shape(), std::move(out), track, "layer_norm");
    if (track) {
        record({x, gain, bias}, result,
               [x, gain, bias, result, rows, n, normalized = std::move(normalized), inv_std = std::move(inv_std)] {
                   auto g = result.grad();
                   auto gd = gain.data();
                   if (gain.requires_grad()) {
                       auto gg = gain.mutable_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) gg[i % n] += g[i] * normalized[i];
                   }
                   if (bias.requires_grad()) {
                       auto gb = bias.mutable_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
                   }
                   if (x.requires_grad()) {
                       auto gx = x.mutable_grad();
                       const double inv_n = 1.0 / static_cast<double>(n);
                       for (std::size_t r = 0; r < rows; ++r) {
                           double mean_dxh = 0.0, mean_dxh_xh = 0.0;
                           for (std::size_t j = 0; j < n; ++j) {
                               const double dxh = g[r * n + j] * gd[j];
                               mean_dxh += dxh;
                               mean_dxh_xh += dxh * normalized[r * n + j];
                           }
                           mean_dxh *= inv_n;
                           mean_dxh_xh *= inv_n;
                           for (std::size_t j = 0; j < n; ++j) {
                               const double dxh = g[r * n + j] * gd[j];
                               gx[r * n + j] +=
                                   inv_std[r] * (dxh - mean_dxh - normalized[r * n + j] * mean_dxh_xh);
                           }
                       }
                   }
               });
    }
    return result;
}

Tensor dropout(const Tensor& x, double p, Mode mode, Rng* rng) {
    if (!(p >= 0.0 && p < 1.0)) throw ParameterError("dropout: probability must lie in [0, 1), got " + std::to_string(p));
    if (mode == Mode::Eval || p == 0.0) return x;
    if (rng == nullptr) throw ContractError("dropout: train mode requires a random stream");
    const double keep_scale = 1.0 / (1.0 - p);
    std::vector<double> mask(x.numel());
    for (auto& m : mask) m = rng->uniform() >= p ? keep_scale : 0.0;
    std::vector<double> out(x.numel());
    auto xd = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * mask[i];
    const bool track = tracking({&x});
    auto result = make_output(x.shape(), std::move(out), track, "dropout");
    if (track) {
        record({x}, result, [x, result, mask = std::move(mask)] {
            auto g = result.grad();
            auto gx = x.mutable_grad();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
        });
    }
    return result;
}

// ---------------------------------------------------------------------------
// Volumetric ops

namespace {

struct ConvGeometry {
    std::size_t batch, cin, cout, depth, height, width, k;
    std::size_t spatial() const { return depth * height * width; }
};

// Visits every (output voxel row, input voxel row) pair touched by one kernel
// tap, clipped to the padded volume, so the inner loop stays contiguous.
template <typename RowFn>
void for_each_tap_row(const ConvGeometry& g, std::size_t kd, std::size_t kh, std::size_t kw, RowFn fn) {
    const long pad = static_cast<long>(g.k / 2);
    const long dz = static_cast<long>(kd) - pad, dy = static_cast<long>(kh) - pad, dx = static_cast<long>(kw) - pad;
    const long D = static_cast<long>(g.depth), H = static_cast<long>(g.height), W = static_cast<long>(g.width);
    const long x0 = std::max(0L, -dx), x1 = std::min(W, W - dx);
    if (x1 <= x0) return;
    for (long z = std::max(0L, -dz); z < std::min(D, D - dz); ++z) {
        for (long y = std::max(0L, -dy); y < std::min(H, H - dy); ++y) {
            const std::size_t out_off = static_cast<std::size_t>((z * H + y) * W + x0);
            const std::size_t in_off = static_cast<std::size_t>(((z + dz) * H + (y + dy)) * W + x0 + dx);
            fn(out_off, in_off, static_cast<std::size_t>(x1 - x0));
        }
    }
}

// Lays out every kernel tap of every input channel as one row of a
// [Cin·k³ × vol] matrix; out-of-volume taps stay zero.
void im2col(const ConvGeometry& g, const double* in, double* cols) {
    const std::size_t vol = g.spatial(), k = g.k;
    std::fill(cols, cols + g.cin * k * k * k * vol, 0.0);
    for (std::size_t ci = 0; ci < g.cin; ++ci)
        for (std::size_t kd = 0; kd < k; ++kd)
            for (std::size_t kh = 0; kh < k; ++kh)
                for (std::size_t kw = 0; kw < k; ++kw) {
                    double* row = cols + (((ci * k + kd) * k + kh) * k + kw) * vol;
                    const double* src = in + ci * vol;
                    for_each_tap_row(g, kd, kh, kw, [&](std::size_t oo, std::size_t io, std::size_t len) {
                        std::copy_n(src + io, len, row + oo);
                    });
                }
}

// Adjoint of im2col: scatters rows back onto the input volume.
void col2im(const ConvGeometry& g, const double* cols, double* in) {
    const std::size_t vol = g.spatial(), k = g.k;
    for (std::size_t ci = 0; ci < g.cin; ++ci)
        for (std::size_t kd = 0; kd < k; ++kd)
            for (std::size_t kh = 0; kh < k; ++kh)
                for (std::size_t kw = 0; kw < k; ++kw) {
                    const double* row = cols + (((ci * k + kd) * k + kh) * k + kw) * vol;
                    double* dst = in + ci * vol;
                    for_each_tap_row(g, kd, kh, kw, [&](std::size_t oo, std::size_t io, std::size_t len) {
                        for (std::size_t i = 0; i < len; ++i) dst[io + i] += row[oo + i];
                    });
                }
}

}  // namespace

Tensor conv3d(const Tensor& x, const Tensor& kernels, const Tensor& bias) {
    if (x.rank() == 4) {
        Shape batched{1};
        batched.insert(batched.end(), x.shape().begin(), x.shape().end());
        auto out = conv3d(reshape(x, batched), kernels, bias);
        return reshape(out, Shape(out.shape().begin() + 1, out.shape().end()));
    }
    if (x.rank() != 5 || kernels.rank() != 5) {
        throw DimensionError("conv3d: expected input [B×C×D×H×W] and kernels [Cout×Cin×k×k×k], got " +
                             shape_string(x.shape()) + " and " + shape_string(kernels.shape()));
    }
    const std::size_t k = kernels.dim(2);
    if (kernels.dim(3) != k || kernels.dim(4) != k) {
        throw ParameterError("conv3d: kernels must be cubic, got " + shape_string(kernels.shape()));
    }
    if (k % 2 == 0) throw ParameterError("conv3d: kernel size must be odd for same padding, got " + std::to_string(k));
    if (kernels.dim(1) != x.dim(1)) {
        throw DimensionError("conv3d: input channels " + shape_string(x.shape()) + " do not match kernels " +
                             shape_string(kernels.shape()));
    }
    if (bias.defined() && bias.shape() != Shape{kernels.dim(0)}) {
        throw DimensionError("conv3d: bias " + shape_string(bias.shape()) + " does not match output channels");
    }
    const ConvGeometry geo{x.dim(0), x.dim(1), kernels.dim(0), x.dim(2), x.dim(3), x.dim(4), k};
    const std::size_t vol = geo.spatial(), taps = geo.cin * k * k * k;
    std::vector<double> out(geo.batch * geo.cout * vol, 0.0);
    std::vector<double> cols(taps * vol);
    auto xd = x.data();
    for (std::size_t b = 0; b < geo.batch; ++b) {
        double* o = out.data() + b * geo.cout * vol;
        if (bias.defined()) {
            for (std::size_t co = 0; co < geo.cout; ++co) std::fill(o + co * vol, o + (co + 1) * vol, bias.data()[co]);
        }
        im2col(geo, xd.data() + b * geo.cin * vol, cols.data());
        // [Cout × Cin·k³] · [Cin·k³ × vol]
        gemm(false, false, geo.cout, vol, taps, kernels.data().data(), cols.data(), 1.0, o);
    }
    const bool track = tracking({&x, &kernels, &bias});
    auto result = make_output({geo.batch, geo.cout, geo.depth, geo.height, geo.width}, std::move(out), track, "conv3d");
    if (track) {
        record({x, kernels, bias}, result, [x, kernels, bias, result, geo] {
            const std::size_t vol = geo.spatial(), taps = geo.cin * geo.k * geo.k * geo.k;
            auto g = result.grad();
            std::vector<double> cols(taps * vol);
            for (std::size_t b = 0; b < geo.batch; ++b) {
                const double* go = g.data() + b * geo.cout * vol;
                if (wants_grad(bias)) {
                    auto gb = bias.mutable_grad();
                    for (std::size_t co = 0; co < geo.cout; ++co)
                        for (std::size_t i = 0; i < vol; ++i) gb[co] += go[co * vol + i];
                }
                if (kernels.requires_grad()) {
                    im2col(geo, x.data().data() + b * geo.cin * vol, cols.data());
                    gemm(false, true, geo.cout, taps, vol, go, cols.data(), 1.0, kernels.mutable_grad().data());
                }
                if (x.requires_grad()) {
                    gemm(true, false, taps, vol, geo.cout, kernels.data().data(), go, 0.0, cols.data());
                    col2im(geo, cols.data(), x.mutable_grad().data() + b * geo.cin * vol);
                }
            }
        });
    }
    return result;
}
Tensor avg_pool3d(const Tensor& x, std::size_t factor) {
    if (x.rank() != 5) throw DimensionError("avg_pool3d: expected rank-5 input, got " + shape_string(x.shape()));
    if (factor == 0) throw ParameterError("avg_pool3d: factor must be positive");
    for (std::size_t axis = 2; axis < 5; ++axis) {
        if (x.dim(axis) % factor != 0) {
            throw ConfigError("avg_pool3d: extents " + shape_string(x.shape()) + " are not divisible by " +
                              std::to_string(factor));
        }
    }
    const std::size_t planes = x.dim(0) * x.dim(1);
    const std::size_t D = x.dim(2), H = x.dim(3), W = x.dim(4);
    const std::size_t d = D / factor, h = H / factor, w = W / factor;
    const double inv = 1.0 / static_cast<double>(factor * factor * factor);
    auto xd = x.data();
    std::vector<double> out(planes * d * h * w, 0.0);
    auto visit = [=](auto&& fn) {
        for (std::size_t p = 0; p < planes; ++p)
            for (std::size_t z = 0; z < D; ++z)
                for (std::size_t y = 0; y < H; ++y)
                    for (std::size_t xx = 0; xx < W; ++xx) {
                        const std::size_t src = ((p * D + z) * H + y) * W + xx;
                        const std::size_t dst = ((p * d + z / factor) * h + y / factor) * w + xx / factor;
                        fn(src, dst);
                    }
    };
    visit([&](std::size_t src, std::size_t dst) { out[dst] += xd[src] * inv; });
    const bool track = tracking({&x});
    auto result = make_output({x.dim(0), x.dim(1), d, h, w}, std::move(out), track, "avg_pool3d");
    if (track) {
        record({x}, result, [x, result, visit, inv] {
            auto g = result.grad();
            auto gx = x.mutable_grad();
            visit([&](std::size_t src, std::size_t dst) { gx[src] += g[dst] * inv; });
        });
    }
    return result;
}

Tensor global_avg_pool3d(const Tensor& x) {
    if (x.rank() != 5) throw DimensionError("global_avg_pool3d: expected rank-5 input, got " + shape_string(x.shape()));
    const std::size_t planes = x.dim(0) * x.dim(1);
    const std::size_t vol = x.dim(2) * x.dim(3) * x.dim(4);
    const double inv = 1.0 / static_cast<double>(vol);
    auto xd = x.data();
    std::vector<double> out(planes, 0.0);
    for (std::size_t p = 0; p < planes; ++p) {
        double acc = 0.0;
        for (std::size_t i = 0; i < vol; ++i) acc += xd[p * vol + i];
        out[p] = acc * inv;
    }
    const bool track = tracking({&x});
    auto result = make_output({x.dim(0), x.dim(1)}, std::move(out), track, "global_avg_pool3d");
    if (track) {
        record({x}, result, [x, result, planes, vol, inv] {
            auto g = result.grad();
            auto gx = x.mutable_grad();
            for (std::size_t p = 0; p < planes; ++p)
                for (std::size_t i = 0; i < vol; ++i) gx[p * vol + i] += g[p] * inv;
        });
    }
    return result;
}

// ---------------------------------------------------------------------------
// Layout

Tensor concat_lastdim(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_lastdim: no operands");
    Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& p : parts) {
        Shape pl(p.shape().begin(), p.shape().end() - 1);
        if (pl != lead) {
            throw DimensionError("concat_lastdim: leading extents differ: " + shape_string(parts[0].shape()) + " vs " +
                                 shape_string(p.shape()));
        }
        widths.push_back(p.shape().back());
        total += widths.back();
    }
    const std::size_t rows = shape_numel(lead);
    std::vector<double> out(rows * total);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        auto pd = parts[k].data();
        for (std::size_t r = 0; r < rows; ++r)
            std::copy_n(pd.data() + r * widths[k], widths[k], out.data() + r * total + offset);
        offset += widths[k];
    }
    Shape shape = lead;
    shape.push_back(total);
    bool track = false;
    if (active_tape() != nullptr)
        for (const auto& p : parts) track = track || p.requires_grad();
    auto result = make_output(std::move(shape), std::move(out), track, "concat");
    if (track) {
        record(parts, result, [parts, result, widths, rows, total] {
            auto g = result.grad();
            std::size_t offset = 0;
            for (std::size_t k = 0; k < parts.size(); ++k) {
                if (parts[k].requires_grad()) {
                    auto gp = parts[k].mutable_grad();
                    for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < widths[k]; ++j) gp[r * widths[k] + j] += g[r * total + offset + j];
                }
                offset += widths[k];
            }
        });
    }
    return result;
}

Tensor slice_lastdim(const Tensor& x, std::size_t begin, std::size_t length) {
    const std::size_t n = x.shape().back();
    if (length == 0 || begin + length > n) {
        throw DimensionError("slice_lastdim: [" + std::to_string(begin) + ", " + std::to_string(begin + length) +
                             ") out of range for " + shape_string(x.shape()));
    }
    const std::size_t rows = x.numel() / n;
    auto xd = x.data();
    std::vector<double> out(rows * length);
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(xd.data() + r * n + begin, length, out.data() + r * length);
    Shape shape = x.shape();
    shape.back() = length;
    const bool track = tracking({&x});
    auto result = make_output(std::move(shape), std::move(out), track, "slice");
    if (track) {
        record({x}, result, [x, result, rows, n, begin, length] {
            auto g = result.grad();
            auto gx = x.mutable_grad();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < length; ++j) gx[r * n + begin + j] += g[r * length + j];
        });
    }
    return result;
}

Tensor transpose_last2(const Tensor& x) {
    if (x.rank() < 2) throw DimensionError("transpose_last2: rank must be at least 2, got " + shape_string(x.shape()));
    const std::size_t m = x.dim(x.rank() - 2), n = x.dim(x.rank() - 1);
    const std::size_t batch = x.numel() / (m * n);
    auto xd = x.data();
    std::vector<double> out(xd.size());
    for (std::size_t s = 0; s < batch; ++s)
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) out[s * m * n + j * m + i] = xd[s * m * n + i * n + j];
    Shape shape = x.shape();
    std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
    const bool track = tracking({&x});
    auto result = make_output(std::move(shape), std::move(out), track, "transpose");
    if (track) {
        record({x}, result, [x, result, batch, m, n] {
            auto g = result.grad();
            auto gx = x.mutable_grad();
            for (std::size_t s = 0; s < batch; ++s)
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) gx[s * m * n + i * n + j] += g[s * m * n + j * m + i];
        });
    }
    return result;
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
    }
    const bool track = tracking({&x});
    auto result = make_output(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()), track, "reshape");
    if (track) {
        record({x}, result, [x, result] {
            auto g = result.grad();
            auto gx = x.mutable_grad();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        });
    }
    return result;
}

// ---------------------------------------------------------------------------
// Reductions

namespace {

template <typename Value, typename Derivative>
Tensor reduce(const Tensor& x, const char* name, Value value, Derivative derivative) {
    auto xd = x.data();
    double acc = 0.0;
    for (double v : xd) acc += value(v);
    const bool track = tracking({&x});
    auto result = make_output({1}, {acc}, track, name);
    if (track) {
        record({x}, result, [x, result, derivative] {
            const double g = result.grad()[0];
            auto xd = x.data();
            auto gx = x.mutable_grad();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * derivative(xd[i]);
        });
    }
    return result;
}

}  // namespace

Tensor sum(const Tensor& x) {
    return reduce(x, "sum", [](double v) { return v; }, [](double) { return 1.0; });
}

Tensor mean(const Tensor& x) {
    const double inv = 1.0 / static_cast<double>(x.numel());
    return reduce(x, "mean", [inv](double v) { return v * inv; }, [inv](double) { return inv; });
}

Tensor sum_squares(const Tensor& x) {
    return reduce(x, "sum_squares", [](double v) { return v * v; }, [](double v) { return 2.0 * v; });
}

Tensor sum_abs(const Tensor& x) {
    return reduce(
        x, "sum_abs", [](double v) { return std::abs(v); },
        [](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor binary_cross_entropy(const Tensor& prob, std::span<const double> labels, double eps) {
    if (prob.numel() != labels.size()) {
        throw DimensionError("binary_cross_entropy: " + std::to_string(labels.size()) + " labels for predictions " +
                             shape_string(prob.shape()));
    }
    const double n = static_cast<double>(labels.size());
    auto pd = prob.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double p = std::clamp(pd[i], eps, 1.0 - eps);
        acc += labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p);
    }
    const bool track = tracking({&prob});
    auto result = make_output({1}, {-acc / n}, track, "binary_cross_entropy");
    if (track) {
        std::vector<double> y(labels.begin(), labels.end());
        record({prob}, result, [prob, result, y = std::move(y), eps, n] {
            const double g = result.grad()[0];
            auto pd = prob.data();
            auto gp = prob.mutable_grad();
            for (std::size_t i = 0; i < y.size(); ++i) {
                const double p = pd[i];
                if (p < eps || p > 1.0 - eps) continue;
                gp[i] += -g / n * (y[i] / p - (1.0 - y[i]) / (1.0 - p));
            }
        });
    }
    return result;
}

}  // namespace migt
