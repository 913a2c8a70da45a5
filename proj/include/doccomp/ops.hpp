// Copyright 2026 The doccomp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "doccomp/tensor.hpp"

namespace doccomp {

/// Per-query key index lists in CSR form. Query q attends to
/// keys[offsets[q] .. offsets[q+1]).
struct KeySets {
    std::vector<std::size_t> offsets{0};
    std::vector<std::size_t> keys;

    std::size_t n_queries() const { return offsets.size() - 1; }
    std::size_t count(std::size_t q) const { return offsets[q + 1] - offsets[q]; }
    std::span<const std::size_t> of(std::size_t q) const {
        return std::span<const std::size_t>(keys).subspan(offsets[q], count(q));
    }

    void push(std::span<const std::size_t> ks) {
        keys.insert(keys.end(), ks.begin(), ks.end());
        offsets.push_back(keys.size());
    }

    /// Every query sees every key.
    static KeySets full(std::size_t n_queries, std::size_t n_keys) {
        KeySets s;
        s.keys.reserve(n_queries * n_keys);
        for (std::size_t q = 0; q < n_queries; ++q) {
            for (std::size_t k = 0; k < n_keys; ++k) s.keys.push_back(k);
            s.offsets.push_back(s.keys.size());
        }
        return s;
    }

    /// Query i sees keys 0..i.
    static KeySets causal(std::size_t n) {
        KeySets s;
        s.keys.reserve(n * (n + 1) / 2);
        for (std::size_t q = 0; q < n; ++q) {
            for (std::size_t k = 0; k <= q; ++k) s.keys.push_back(k);
            s.offsets.push_back(s.keys.size());
        }
        return s;
    }
};

namespace kernel {

/// C[M,N] += A[M,K] * B[K,N], all row-major.
template <typename T>
void gemm_acc(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = c + i * n;
        const T* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = arow[p];
            if (av == T(0)) continue;
            const T* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
std::vector<T> transpose(std::size_t rows, std::size_t cols, const T* a) {
    std::vector<T> t(rows * cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = a[i * cols + j];
    return t;
}

/// C[M,N] += A[K,M]^T * B[K,N].
template <typename T>
void gemm_tn_acc(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
    for (std::size_t p = 0; p < k; ++p) {
        const T* arow = a + p * m;
        const T* brow = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const T av = arow[i];
            if (av == T(0)) continue;
            T* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
    T s = T(0);
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

}  // namespace kernel

namespace detail {

inline std::size_t last_dim(const Shape& s) { return s.empty() ? 1 : s.back(); }

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError("numeric-kernel", std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                                   " vs " + shape_str(b.shape()));
    }
}

}  // namespace detail

/// Matrix product of [M,K] and [K,N].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) {
        throw DimensionError("numeric-kernel",
                             "matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    std::vector<T> out(m * n, T(0));
    kernel::gemm_acc(m, k, n, a.data().data(), b.data().data(), out.data());
    auto an = a.node(), bn = b.node();
    return Tensor<T>::make_result({m, n}, std::move(out), {an, bn}, [an, bn, m, k, n](auto& self) {
        const T* g = self.grad.data();
        if (an->requires_grad) {
            auto bt = kernel::transpose(k, n, bn->value.data());
            kernel::gemm_acc(m, n, k, g, bt.data(), an->ensure_grad().data());
        }
        if (bn->requires_grad) kernel::gemm_tn_acc(k, m, n, an->value.data(), g, bn->ensure_grad().data());
    });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    auto an = a.node(), bn = b.node();
    return Tensor<T>::make_result(a.shape(), std::move(out), {an, bn}, [an, bn](auto& self) {
        for (auto* in : {an.get(), bn.get()}) {
            if (!in->requires_grad) continue;
            auto& g = in->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    auto an = a.node(), bn = b.node();
    return Tensor<T>::make_result(a.shape(), std::move(out), {an, bn}, [an, bn](auto& self) {
        if (an->requires_grad) {
            auto& g = an->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn->value[i];
        }
        if (bn->requires_grad) {
            auto& g = bn->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an->value[i];
        }
    });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s) {
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * s;
    auto xn = x.node();
    return Tensor<T>::make_result(x.shape(), std::move(out), {xn}, [xn, s](auto& self) {
        auto& g = xn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
    });
}

/// x[..., D] + bias[D], broadcast over all leading positions.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
    const std::size_t d = detail::last_dim(x.shape());
    if (bias.size() != d) {
        throw DimensionError("numeric-kernel",
                             "add_bias: bias " + shape_str(bias.shape()) + " vs input " + shape_str(x.shape()));
    }
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + bias[i % d];
    auto xn = x.node(), bn = bias.node();
    return Tensor<T>::make_result(x.shape(), std::move(out), {xn, bn}, [xn, bn, d](auto& self) {
        if (xn->requires_grad) {
            auto& g = xn->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            auto& g = bn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % d] += self.grad[i];
        }
    });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (volume(shape) != x.size()) {
        throw DimensionError("numeric-kernel",
                             "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    auto xn = x.node();
    return Tensor<T>::make_result(std::move(shape), xn->value, {xn}, [xn](auto& self) {
        auto& g = xn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

/// Rows [begin, begin+count) along the first axis.
template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t begin, std::size_t count) {
    if (x.rank() == 0 || begin + count > x.extent(0)) {
        throw DimensionError("numeric-kernel", "slice_rows: range [" + std::to_string(begin) + ", " +
                                                   std::to_string(begin + count) + ") outside " +
                                                   shape_str(x.shape()));
    }
    const std::size_t row = x.size() / x.extent(0);
    Shape shape = x.shape();
    shape[0] = count;
    std::vector<T> out(x.data().begin() + begin * row, x.data().begin() + (begin + count) * row);
    auto xn = x.node();
    return Tensor<T>::make_result(std::move(shape), std::move(out), {xn}, [xn, begin, row](auto& self) {
        auto& g = xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * row + i] += self.grad[i];
    });
}

/// out[i] = x[idx[i]] along the first axis; also serves as embedding lookup.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::size_t>& idx) {
    if (x.rank() == 0) throw DimensionError("numeric-kernel", "gather_rows on a scalar");
    const std::size_t n = x.extent(0);
    const std::size_t row = n ? x.size() / n : 0;
    std::vector<T> out(idx.size() * row);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= n) {
            throw DimensionError("numeric-kernel", "gather_rows: index " + std::to_string(idx[i]) +
                                                       " out of range for " + shape_str(x.shape()));
        }
        std::copy_n(x.data().begin() + idx[i] * row, row, out.begin() + i * row);
    }
    Shape shape = x.shape();
    shape[0] = idx.size();
    auto xn = x.node();
    return Tensor<T>::make_result(std::move(shape), std::move(out), {xn}, [xn, idx, row](auto& self) {
        auto& g = xn->ensure_grad();
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t j = 0; j < row; ++j) g[idx[i] * row + j] += self.grad[i * row + j];
    });
}

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, const std::vector<std::size_t>& ids) {
    return gather_rows(table, ids);
}

/// Stacks tensors along the first axis; trailing extents must agree.
template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw ArgumentError("numeric-kernel", "concat_rows of nothing");
    Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
    std::size_t rows = 0;
    std::vector<std::shared_ptr<typename Tensor<T>::Node>> inputs;
    for (const auto& p : parts) {
        if (p.rank() == 0 || Shape(p.shape().begin() + 1, p.shape().end()) != tail) {
            throw DimensionError("numeric-kernel", "concat_rows: " + shape_str(p.shape()) +
                                                       " does not stack with " + shape_str(parts[0].shape()));
        }
        rows += p.extent(0);
        inputs.push_back(p.node());
    }
    std::vector<T> out;
    out.reserve(rows * volume(tail));
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    Shape shape = parts[0].shape();
    shape[0] = rows;
    auto captured = inputs;
    return Tensor<T>::make_result(std::move(shape), std::move(out), std::move(inputs), [captured](auto& self) {
        std::size_t off = 0;
        for (const auto& in : captured) {
            if (in->requires_grad) {
                auto& g = in->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[off + i];
            }
            off += in->value.size();
        }
    });
}

/// Softmax over the last axis with max subtraction.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
    const std::size_t d = x.rank() ? x.shape().back() : 0;
    if (d == 0) throw DimensionError("numeric-kernel", "softmax_rows: empty last axis in " + shape_str(x.shape()));
    const std::size_t rows = x.size() / d;
    std::vector<T> out(x.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* in = x.data().data() + r * d;
        T* o = out.data() + r * d;
        T mx = *std::max_element(in, in + d);
        T s = T(0);
        for (std::size_t j = 0; j < d; ++j) s += (o[j] = std::exp(in[j] - mx));
        for (std::size_t j = 0; j < d; ++j) o[j] /= s;
    }
    auto xn = x.node();
    return Tensor<T>::make_result(x.shape(), std::move(out), {xn}, [xn, d, rows](auto& self) {
        auto& g = xn->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
            const T* y = self.value.data() + r * d;
            const T* gy = self.grad.data() + r * d;
            T dotv = kernel::dot(y, gy, d);
            for (std::size_t j = 0; j < d; ++j) g[r * d + j] += y[j] * (gy[j] - dotv);
        }
    });
}

/// Layer normalization over the last axis with learned gain and bias.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps = T(1e-5)) {
    const std::size_t d = detail::last_dim(x.shape());
    if (gain.size() != d || bias.size() != d) {
        throw DimensionError("numeric-kernel", "layer_norm: gain/bias do not match " + shape_str(x.shape()));
    }
    const std::size_t rows = x.size() / d;
    std::vector<T> out(x.size()), xhat(x.size()), inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* in = x.data().data() + r * d;
        T mean = T(0);
        for (std::size_t j = 0; j < d; ++j) mean += in[j];
        mean /= T(d);
        T var = T(0);
        for (std::size_t j = 0; j < d; ++j) var += (in[j] - mean) * (in[j] - mean);
        var /= T(d);
        inv_std[r] = T(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            xhat[r * d + j] = (in[j] - mean) * inv_std[r];
            out[r * d + j] = xhat[r * d + j] * gain[j] + bias[j];
        }
    }
    auto xn = x.node(), gn = gain.node(), bn = bias.node();
    return Tensor<T>::make_result(
        x.shape(), std::move(out), {xn, gn, bn},
        [xn, gn, bn, d, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](auto& self) {
            const T* gy = self.grad.data();
            if (gn->requires_grad) {
                auto& g = gn->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % d] += gy[i] * xhat[i];
            }
            if (bn->requires_grad) {
                auto& g = bn->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % d] += gy[i];
            }
            if (xn->requires_grad) {
                auto& g = xn->ensure_grad();
                std::vector<T> gh(d);
                for (std::size_t r = 0; r < rows; ++r) {
                    T mean_gh = T(0), mean_ghx = T(0);
                    for (std::size_t j = 0; j < d; ++j) {
                        gh[j] = gy[r * d + j] * gn->value[j];
                        mean_gh += gh[j];
                        mean_ghx += gh[j] * xhat[r * d + j];
                    }
                    mean_gh /= T(d);
                    mean_ghx /= T(d);
                    for (std::size_t j = 0; j < d; ++j)
                        g[r * d + j] += inv_std[r] * (gh[j] - mean_gh - xhat[r * d + j] * mean_ghx);
                }
            }
        });
}

/// GELU, tanh approximation.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    constexpr T c = T(0.7978845608028654);  // sqrt(2/pi)
    constexpr T a = T(0.044715);
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const T v = x[i];
        out[i] = T(0.5) * v * (T(1) + std::tanh(c * (v + a * v * v * v)));
    }
    auto xn = x.node();
    return Tensor<T>::make_result(x.shape(), std::move(out), {xn}, [xn](auto& self) {
        auto& g = xn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const T v = xn->value[i];
            const T u = c * (v + a * v * v * v);
            const T t = std::tanh(u);
            const T du = c * (T(1) + T(3) * a * v * v);
            g[i] += self.grad[i] * (T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * du);
        }
    });
}

namespace detail {

/// Rotates pairs (2i, 2i+1) of one head row by pos * base^(-2i/dh).
/// sign = -1 applies the inverse rotation.
template <typename T>
void rotate_pairs(const T* in, T* out, std::size_t dh, std::size_t pos, T sign) {
    for (std::size_t i = 0; i + 1 < dh; i += 2) {
        const double theta = double(pos) * std::pow(10000.0, -double(i) / double(dh));
        const T c = T(std::cos(theta)), s = sign * T(std::sin(theta));
        out[i] = in[i] * c - in[i + 1] * s;
        out[i + 1] = in[i] * s + in[i + 1] * c;
    }
}

}  // namespace detail

/// Rotary position encoding of x [L, heads*dh]: row r is rotated per head as
/// position offset + r. dh must be even.
template <typename T>
Tensor<T> rotary(const Tensor<T>& x, std::size_t heads, std::size_t offset = 0) {
    if (x.rank() != 2 || heads == 0 || x.extent(1) % heads != 0 || (x.extent(1) / heads) % 2 != 0) {
        throw DimensionError("numeric-kernel", "rotary: " + shape_str(x.shape()) + " with " + std::to_string(heads) +
                                                   " heads needs an even head width");
    }
    const std::size_t L = x.extent(0), d = x.extent(1), dh = d / heads;
    std::vector<T> out(x.size());
    for (std::size_t r = 0; r < L; ++r)
        for (std::size_t h = 0; h < heads; ++h)
            detail::rotate_pairs(x.data().data() + r * d + h * dh, out.data() + r * d + h * dh, dh, offset + r, T(1));
    auto xn = x.node();
    return Tensor<T>::make_result(x.shape(), std::move(out), {xn}, [xn, L, d, dh, heads, offset](auto& self) {
        auto& g = xn->ensure_grad();
        std::vector<T> back(dh);
        for (std::size_t r = 0; r < L; ++r)
            for (std::size_t h = 0; h < heads; ++h) {
                detail::rotate_pairs(self.grad.data() + r * d + h * dh, back.data(), dh, offset + r, T(-1));
                for (std::size_t j = 0; j < dh; ++j) g[r * d + h * dh + j] += back[j];
            }
    });
}

/// Valid (unpadded) strided 2-D convolution.
///
/// x is [H, W, Cin] and kernel is [KH, KW, Cin, Cout]; the result is
/// [(H-KH)/SH + 1, (W-KW)/SW + 1, Cout]. The input must be fully covered by
/// the strided windows, otherwise the configuration is rejected.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, std::size_t stride_h, std::size_t stride_w) {
    if (x.rank() != 3 || kernel.rank() != 4 || kernel.extent(2) != x.extent(2)) {
        throw DimensionError("numeric-kernel", "conv2d: input " + shape_str(x.shape()) + " vs kernel " +
                                                   shape_str(kernel.shape()));
    }
    const std::size_t h = x.extent(0), w = x.extent(1), cin = x.extent(2);
    const std::size_t kh = kernel.extent(0), kw = kernel.extent(1), cout = kernel.extent(3);
    if (stride_h == 0 || stride_w == 0) throw ConfigError("numeric-kernel", "conv2d: zero stride");
    if (kh > h || kw > w) {
        throw DimensionError("numeric-kernel", "conv2d: kernel " + shape_str(kernel.shape()) +
                                                   " larger than input " + shape_str(x.shape()));
    }
    if ((h - kh) % stride_h != 0 || (w - kw) % stride_w != 0) {
        throw ConfigError("numeric-kernel", "conv2d: input " + shape_str(x.shape()) +
                                                " not divisible into windows of " + shape_str(kernel.shape()) +
                                                " at stride (" + std::to_string(stride_h) + "," +
                                                std::to_string(stride_w) + ")");
    }
    const std::size_t oh = (h - kh) / stride_h + 1, ow = (w - kw) / stride_w + 1;
    const std::size_t patch = kh * kw * cin;
    // im2col: one row per output pixel, laid out (ky, kx, c) to match the kernel.
    std::vector<T> cols(oh * ow * patch);
    for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
            T* dst = cols.data() + (oy * ow + ox) * patch;
            for (std::size_t ky = 0; ky < kh; ++ky) {
                const T* src = x.data().data() + ((oy * stride_h + ky) * w + ox * stride_w) * cin;
                std::copy_n(src, kw * cin, dst + ky * kw * cin);
            }
        }
    std::vector<T> out(oh * ow * cout, T(0));
    kernel::gemm_acc(oh * ow, patch, cout, cols.data(), kernel.data().data(), out.data());
    auto xn = x.node(), kn = kernel.node();
    return Tensor<T>::make_result(
        {oh, ow, cout}, std::move(out), {xn, kn},
        [xn, kn, cols = std::move(cols), w, cin, kh, kw, cout, oh, ow, patch, stride_h, stride_w](auto& self) {
            const T* g = self.grad.data();
            if (kn->requires_grad) kernel::gemm_tn_acc(patch, oh * ow, cout, cols.data(), g, kn->ensure_grad().data());
            if (xn->requires_grad) {
                auto kt = kernel::transpose(patch, cout, kn->value.data());
                std::vector<T> gcols(oh * ow * patch, T(0));
                kernel::gemm_acc(oh * ow, cout, patch, g, kt.data(), gcols.data());
                auto& gx = xn->ensure_grad();
                for (std::size_t oy = 0; oy < oh; ++oy)
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const T* src = gcols.data() + (oy * ow + ox) * patch;
                        for (std::size_t ky = 0; ky < kh; ++ky) {
                            T* dst = gx.data() + ((oy * stride_h + ky) * w + ox * stride_w) * cin;
                            const T* s = src + ky * kw * cin;
                            for (std::size_t i = 0; i < kw * cin; ++i) dst[i] += s[i];
                        }
                    }
            }
        });
}

/// Bin boundaries used by adaptive_mean_pool: bin i covers
/// [floor(i*in/out), floor((i+1)*in/out)), a partition of [0, in).
inline std::pair<std::size_t, std::size_t> adaptive_bin(std::size_t i, std::size_t in, std::size_t out) {
    return {i * in / out, (i + 1) * in / out};
}

/// Mean over contiguous spatial bins of an [H, W, C] map.
template <typename T>
Tensor<T> adaptive_mean_pool(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
    if (x.rank() != 3) throw DimensionError("numeric-kernel", "adaptive_mean_pool expects [H,W,C], got " + shape_str(x.shape()));
    if (out_h == 0 || out_w == 0) throw DimensionError("numeric-kernel", "adaptive_mean_pool: zero output extent");
    const std::size_t h = x.extent(0), w = x.extent(1), c = x.extent(2);
    if (out_h > h || out_w > w) {
        throw DimensionError("numeric-kernel", "adaptive_mean_pool: output " + std::to_string(out_h) + "x" +
                                                   std::to_string(out_w) + " exceeds input " + shape_str(x.shape()));
    }
    std::vector<T> out(out_h * out_w * c, T(0));
    for (std::size_t oy = 0; oy < out_h; ++oy) {
        auto [y0, y1] = adaptive_bin(oy, h, out_h);
        for (std::size_t ox = 0; ox < out_w; ++ox) {
            auto [x0, x1] = adaptive_bin(ox, w, out_w);
            const T inv = T(1) / T((y1 - y0) * (x1 - x0));
            T* o = out.data() + (oy * out_w + ox) * c;
            for (std::size_t y = y0; y < y1; ++y)
                for (std::size_t xx = x0; xx < x1; ++xx) {
                    const T* in = x.data().data() + (y * w + xx) * c;
                    for (std::size_t k = 0; k < c; ++k) o[k] += in[k];
                }
            for (std::size_t k = 0; k < c; ++k) o[k] *= inv;
        }
    }
    auto xn = x.node();
    return Tensor<T>::make_result({out_h, out_w, c}, std::move(out), {xn}, [xn, h, w, c, out_h, out_w](auto& self) {
        auto& g = xn->ensure_grad();
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            auto [y0, y1] = adaptive_bin(oy, h, out_h);
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                auto [x0, x1] = adaptive_bin(ox, w, out_w);
                const T inv = T(1) / T((y1 - y0) * (x1 - x0));
                const T* go = self.grad.data() + (oy * out_w + ox) * c;
                for (std::size_t y = y0; y < y1; ++y)
                    for (std::size_t xx = x0; xx < x1; ++xx) {
                        T* gi = g.data() + (y * w + xx) * c;
                        for (std::size_t k = 0; k < c; ++k) gi[k] += go[k] * inv;
                    }
            }
        }
    });
}

/// out[q] = mean of x rows listed in sets.of(q). x is [N, D].
template <typename T>
Tensor<T> segment_mean(const Tensor<T>& x, std::shared_ptr<const KeySets> sets) {
    if (x.rank() != 2) throw DimensionError("numeric-kernel", "segment_mean expects [N,D], got " + shape_str(x.shape()));
    const std::size_t d = x.extent(1), nq = sets->n_queries();
    std::vector<T> out(nq * d, T(0));
    for (std::size_t q = 0; q < nq; ++q) {
        auto ks = sets->of(q);
        if (ks.empty()) throw DimensionError("numeric-kernel", "segment_mean: empty segment " + std::to_string(q));
        T* o = out.data() + q * d;
        for (auto k : ks) {
            if (k >= x.extent(0)) throw DimensionError("numeric-kernel", "segment_mean: row index out of range");
            const T* in = x.data().data() + k * d;
            for (std::size_t j = 0; j < d; ++j) o[j] += in[j];
        }
        const T inv = T(1) / T(ks.size());
        for (std::size_t j = 0; j < d; ++j) o[j] *= inv;
    }
    auto xn = x.node();
    return Tensor<T>::make_result({nq, d}, std::move(out), {xn}, [xn, sets, d, nq](auto& self) {
        auto& g = xn->ensure_grad();
        for (std::size_t q = 0; q < nq; ++q) {
            auto ks = sets->of(q);
            const T inv = T(1) / T(ks.size());
            const T* go = self.grad.data() + q * d;
            for (auto k : ks)
                for (std::size_t j = 0; j < d; ++j) g[k * d + j] += go[j] * inv;
        }
    });
}

/// Multi-head scaled dot-product attention restricted to per-query key sets.
///
/// q is [Nq, D], k is [Nk, D], v is [Nk, Dv]; heads split D and Dv evenly.
/// Query i, head h produces softmax_{k in S_i}(q_i,h . k_k,h / sqrt(D/heads))
/// weighted sum of v_k,h. Head outputs are concatenated; there is no output
/// projection. When `weights_out` is given it receives the attention
/// probabilities laid out [head][csr position].
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::shared_ptr<const KeySets> sets,
                    std::size_t heads, std::vector<T>* weights_out = nullptr) {
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.extent(1) != k.extent(1) || k.extent(0) != v.extent(0)) {
        throw DimensionError("numeric-kernel", "attention: q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) +
                                                   ", v " + shape_str(v.shape()));
    }
    const std::size_t nq = q.extent(0), nk = k.extent(0), d = q.extent(1), dv = v.extent(1);
    if (heads == 0 || d % heads != 0 || dv % heads != 0) {
        throw ConfigError("numeric-kernel", "attention: " + std::to_string(heads) + " heads do not divide dims " +
                                                std::to_string(d) + "/" + std::to_string(dv));
    }
    if (sets->n_queries() != nq) {
        throw DimensionError("numeric-kernel", "attention: " + std::to_string(sets->n_queries()) +
                                                   " key sets for " + std::to_string(nq) + " queries");
    }
    const std::size_t dh = d / heads, dvh = dv / heads;
    const T inv_scale = T(1) / std::sqrt(T(dh));
    const std::size_t nnz = sets->keys.size();
    for (auto key : sets->keys)
        if (key >= nk) throw DimensionError("numeric-kernel", "attention: key index out of range");
    std::vector<T> probs(heads * nnz);
    std::vector<T> out(nq * dv, T(0));
    const T* qd = q.data().data();
    const T* kd = k.data().data();
    const T* vd = v.data().data();
    for (std::size_t i = 0; i < nq; ++i) {
        auto ks = sets->of(i);
        if (ks.empty()) throw DimensionError("numeric-kernel", "attention: query " + std::to_string(i) + " has no keys");
        const std::size_t base = sets->offsets[i];
        for (std::size_t hh = 0; hh < heads; ++hh) {
            T* p = probs.data() + hh * nnz + base;
            T mx = -std::numeric_limits<T>::infinity();
            for (std::size_t s = 0; s < ks.size(); ++s) {
                p[s] = kernel::dot(qd + i * d + hh * dh, kd + ks[s] * d + hh * dh, dh) * inv_scale;
                mx = std::max(mx, p[s]);
            }
            T sum = T(0);
            for (std::size_t s = 0; s < ks.size(); ++s) sum += (p[s] = std::exp(p[s] - mx));
            T* o = out.data() + i * dv + hh * dvh;
            for (std::size_t s = 0; s < ks.size(); ++s) {
                p[s] /= sum;
                const T* vr = vd + ks[s] * dv + hh * dvh;
                for (std::size_t j = 0; j < dvh; ++j) o[j] += p[s] * vr[j];
            }
        }
    }
    if (weights_out) *weights_out = probs;
    auto qn = q.node(), kn = k.node(), vn = v.node();
    return Tensor<T>::make_result(
        {nq, dv}, std::move(out), {qn, kn, vn},
        [qn, kn, vn, sets, probs = std::move(probs), nq, d, dv, dh, dvh, heads, nnz, inv_scale](auto& self) {
            const T* go = self.grad.data();
            std::vector<T>* gq = qn->requires_grad ? &qn->ensure_grad() : nullptr;
            std::vector<T>* gk = kn->requires_grad ? &kn->ensure_grad() : nullptr;
            std::vector<T>* gv = vn->requires_grad ? &vn->ensure_grad() : nullptr;
            std::vector<T> dp;
            for (std::size_t i = 0; i < nq; ++i) {
                auto ks = sets->of(i);
                const std::size_t base = sets->offsets[i];
                dp.resize(ks.size());
                for (std::size_t hh = 0; hh < heads; ++hh) {
                    const T* p = probs.data() + hh * nnz + base;
                    const T* gor = go + i * dv + hh * dvh;
                    T pdp = T(0);
                    for (std::size_t s = 0; s < ks.size(); ++s) {
                        dp[s] = kernel::dot(gor, vn->value.data() + ks[s] * dv + hh * dvh, dvh);
                        pdp += p[s] * dp[s];
                        if (gv) {
                            T* g = gv->data() + ks[s] * dv + hh * dvh;
                            for (std::size_t j = 0; j < dvh; ++j) g[j] += p[s] * gor[j];
                        }
                    }
                    for (std::size_t s = 0; s < ks.size(); ++s) {
                        const T ds = p[s] * (dp[s] - pdp) * inv_scale;
                        if (ds == T(0)) continue;
                        if (gq) {
                            T* g = gq->data() + i * d + hh * dh;
                            const T* kr = kn->value.data() + ks[s] * d + hh * dh;
                            for (std::size_t j = 0; j < dh; ++j) g[j] += ds * kr[j];
                        }
                        if (gk) {
                            T* g = gk->data() + ks[s] * d + hh * dh;
                            const T* qr = qn->value.data() + i * d + hh * dh;
                            for (std::size_t j = 0; j < dh; ++j) g[j] += ds * qr[j];
                        }
                    }
                }
            }
        });
}

/// Mean token cross-entropy of logits [N, V] against integer targets.
/// Zero targets yields an exact zero loss.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<std::size_t>& targets) {
    if (targets.empty()) return Tensor<T>::scalar(T(0));
    if (logits.rank() != 2 || logits.extent(0) != targets.size()) {
        throw DimensionError("numeric-kernel", "cross_entropy: logits " + shape_str(logits.shape()) + " for " +
                                                   std::to_string(targets.size()) + " targets");
    }
    const std::size_t n = logits.extent(0), vsz = logits.extent(1);
    std::vector<T> probs(logits.size());
    T loss = T(0);
    for (std::size_t r = 0; r < n; ++r) {
        if (targets[r] >= vsz) throw DimensionError("numeric-kernel", "cross_entropy: target id out of vocabulary");
        const T* in = logits.data().data() + r * vsz;
        T* p = probs.data() + r * vsz;
        T mx = *std::max_element(in, in + vsz);
        T s = T(0);
        for (std::size_t j = 0; j < vsz; ++j) s += (p[j] = std::exp(in[j] - mx));
        for (std::size_t j = 0; j < vsz; ++j) p[j] /= s;
        loss += -(in[targets[r]] - mx - std::log(s));
    }
    loss /= T(n);
    auto ln = logits.node();
    return Tensor<T>::make_result({}, {loss}, {ln}, [ln, probs = std::move(probs), targets, n, vsz](auto& self) {
        auto& g = ln->ensure_grad();
        const T scale_g = self.grad[0] / T(n);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < vsz; ++j)
                g[r * vsz + j] += scale_g * (probs[r * vsz + j] - (j == targets[r] ? T(1) : T(0)));
    });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    T s = T(0);
    for (auto v : x.data()) s += v;
    auto xn = x.node();
    return Tensor<T>::make_result({}, {s}, {xn}, [xn](auto& self) {
        auto& g = xn->ensure_grad();
        for (auto& gi : g) gi += self.grad[0];
    });
}

}  // namespace doccomp
