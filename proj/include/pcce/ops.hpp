// Copyright 2026 the pcce authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>

#include "pcce/tensor.hpp"

// Differentiable op set for the enhancement network and its losses: dilated
// conv2d with reflection padding, 2x2 average pooling, pixel shuffle,
// LReLU, elementwise arithmetic, global and windowed moment reductions.
// All loops run in a fixed order (parallel tasks own disjoint output slices),
// so results are bit-identical across thread counts.

namespace pcce::nd {

enum class Padding { ReflectSame, None };

namespace detail {

// Reflection fold for arbitrary offsets: -1 -> 1, n -> n-2, and repeated
// mirroring beyond that, so padding may exceed the plane extent.
inline int64_t reflect_index(int64_t i, int64_t n) {
    if (n == 1) return 0;
    const int64_t period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
}

template <typename T>
void check_nchw(const Tensor<T>& t, const char* op) {
    if (t.shape().size() != 4)
        throw std::invalid_argument(std::string(op) + ": expected NCHW tensor, got " + shape_str(t.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int64_t dilation, Padding padding) {
    detail::check_nchw(input, "conv2d");
    if (weight.shape().size() != 4)
        throw std::invalid_argument("conv2d: weight must be Cout x Cin x k x k, got " + shape_str(weight.shape()));
    if (dilation < 1) throw std::invalid_argument("conv2d: dilation must be positive");

    const auto& xs = input.shape();
    const auto& ws = weight.shape();
    const int64_t N = xs[0], Cin = xs[1], H = xs[2], W = xs[3];
    const int64_t Cout = ws[0], k = ws[2];
    if (ws[1] != Cin)
        throw std::invalid_argument("conv2d: weight expects " + std::to_string(ws[1]) +
                                    " input channels, tensor has " + std::to_string(Cin));
    if (ws[2] != ws[3] || k % 2 == 0)
        throw std::invalid_argument("conv2d: kernel must be square with odd size, got " + shape_str(ws));
    if (bias.shape() != Shape{Cout})
        throw std::invalid_argument("conv2d: bias must have shape [Cout]");

    const int64_t pad = (padding == Padding::ReflectSame) ? dilation * (k - 1) / 2 : 0;
    if (padding == Padding::ReflectSame && (H <= pad || W <= pad))
        throw std::invalid_argument("conv2d: reflect-same padding " + std::to_string(pad) +
                                    " exceeds spatial extent " + std::to_string(H) + "x" + std::to_string(W));
    const int64_t HP = H + 2 * pad, WP = W + 2 * pad;
    const int64_t OH = HP - dilation * (k - 1), OW = WP - dilation * (k - 1);
    if (OH < 1 || OW < 1)
        throw std::invalid_argument("conv2d: kernel does not fit input without padding");

    // Padded copy of the input; kept alive for the backward pass.
    auto xpad = std::make_shared<std::vector<T>>(static_cast<size_t>(N) * Cin * HP * WP);
    {
        std::span<const T> x = input.data();
        for (int64_t nc = 0; nc < N * Cin; ++nc) {
            const T* src = x.data() + nc * H * W;
            T* dst = xpad->data() + nc * HP * WP;
            for (int64_t y = 0; y < HP; ++y) {
                const int64_t ry = detail::reflect_index(y - pad, H);
                if (pad == 0) {
                    std::memcpy(dst + y * WP, src + ry * W, sizeof(T) * W);
                } else {
                    for (int64_t xq = 0; xq < WP; ++xq)
                        dst[y * WP + xq] = src[ry * W + detail::reflect_index(xq - pad, W)];
                }
            }
        }
    }

    std::vector<T> out(static_cast<size_t>(N) * Cout * OH * OW);
    {
        std::span<const T> w = weight.data();
        std::span<const T> b = bias.data();
        const T* xp = xpad->data();
#pragma omp parallel for collapse(2) schedule(static)
        for (int64_t n = 0; n < N; ++n) {
            for (int64_t co = 0; co < Cout; ++co) {
                T* oc = out.data() + (n * Cout + co) * OH * OW;
                std::fill(oc, oc + OH * OW, b[co]);
                for (int64_t ci = 0; ci < Cin; ++ci) {
                    const T* pc = xp + (n * Cin + ci) * HP * WP;
                    for (int64_t ky = 0; ky < k; ++ky) {
                        for (int64_t kx = 0; kx < k; ++kx) {
                            const T wv = w[((co * Cin + ci) * k + ky) * k + kx];
                            if (wv == T(0)) continue;
                            for (int64_t oy = 0; oy < OH; ++oy) {
                                const T* row = pc + (oy + ky * dilation) * WP + kx * dilation;
                                T* orow = oc + oy * OW;
                                for (int64_t ox = 0; ox < OW; ++ox) orow[ox] += wv * row[ox];
                            }
                        }
                    }
                }
            }
        }
    }

    Tensor<T> result = Tensor<T>::from_data({N, Cout, OH, OW}, std::move(out));
    if (!detail::any_requires_grad<T>({&input, &weight, &bias})) return result;

    auto rn = result.node();
    rn->is_leaf = false;
    rn->requires_grad = true;
    rn->parents = {input.node(), weight.node(), bias.node()};
    auto xn = input.node().get();
    auto wn = weight.node().get();
    auto bn = bias.node().get();
    auto out_node = rn.get();
    rn->backward_fn = [=]() {
        const std::vector<T>& g = out_node->grad;
        const T* xp = xpad->data();
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int64_t n = 0; n < N; ++n)
                for (int64_t co = 0; co < Cout; ++co) {
                    const T* gc = g.data() + (n * Cout + co) * OH * OW;
                    T acc = 0;
                    for (int64_t i = 0; i < OH * OW; ++i) acc += gc[i];
                    bn->grad[co] += acc;
                }
        }
        if (wn->requires_grad) {
            wn->ensure_grad();
#pragma omp parallel for schedule(static)
            for (int64_t co = 0; co < Cout; ++co) {
                for (int64_t ci = 0; ci < Cin; ++ci)
                    for (int64_t ky = 0; ky < k; ++ky)
                        for (int64_t kx = 0; kx < k; ++kx) {
                            T acc = 0;
                            for (int64_t n = 0; n < N; ++n) {
                                const T* gc = g.data() + (n * Cout + co) * OH * OW;
                                const T* pc = xp + (n * Cin + ci) * HP * WP;
                                for (int64_t oy = 0; oy < OH; ++oy) {
                                    const T* row = pc + (oy + ky * dilation) * WP + kx * dilation;
                                    const T* grow = gc + oy * OW;
                                    for (int64_t ox = 0; ox < OW; ++ox) acc += grow[ox] * row[ox];
                                }
                            }
                            wn->grad[((co * Cin + ci) * k + ky) * k + kx] += acc;
                        }
            }
        }
        if (xn->requires_grad) {
            xn->ensure_grad();
            const std::vector<T>& w = wn->data;
#pragma omp parallel for collapse(2) schedule(static)
            for (int64_t n = 0; n < N; ++n) {
                for (int64_t ci = 0; ci < Cin; ++ci) {
                    // accumulate in padded space, then fold reflections back
                    std::vector<T> gp(static_cast<size_t>(HP) * WP, T(0));
                    for (int64_t co = 0; co < Cout; ++co) {
                        const T* gc = g.data() + (n * Cout + co) * OH * OW;
                        for (int64_t ky = 0; ky < k; ++ky)
                            for (int64_t kx = 0; kx < k; ++kx) {
                                const T wv = w[((co * Cin + ci) * k + ky) * k + kx];
                                if (wv == T(0)) continue;
                                for (int64_t oy = 0; oy < OH; ++oy) {
                                    T* prow = gp.data() + (oy + ky * dilation) * WP + kx * dilation;
                                    const T* grow = gc + oy * OW;
                                    for (int64_t ox = 0; ox < OW; ++ox) prow[ox] += wv * grow[ox];
                                }
                            }
                    }
                    T* gx = xn->grad.data() + (n * Cin + ci) * H * W;
                    for (int64_t y = 0; y < HP; ++y) {
                        const int64_t ry = detail::reflect_index(y - pad, H);
                        for (int64_t xq = 0; xq < WP; ++xq)
                            gx[ry * W + detail::reflect_index(xq - pad, W)] += gp[y * WP + xq];
                    }
                }
            }
        }
    };
    return result;
}

// ---------------------------------------------------------------------------
// avg_pool2 / pixel_shuffle / pad / crop

template <typename T>
Tensor<T> avg_pool2(const Tensor<T>& input) {
    detail::check_nchw(input, "avg_pool2");
    const auto& s = input.shape();
    const int64_t N = s[0], C = s[1], H = s[2], W = s[3];
    if (H % 2 != 0 || W % 2 != 0)
        throw std::invalid_argument("avg_pool2: H and W must be even, got " + shape_str(s));
    const int64_t OH = H / 2, OW = W / 2;

    std::vector<T> out(static_cast<size_t>(N) * C * OH * OW);
    std::span<const T> x = input.data();
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const T* src = x.data() + nc * H * W;
        T* dst = out.data() + nc * OH * OW;
        for (int64_t y = 0; y < OH; ++y)
            for (int64_t xq = 0; xq < OW; ++xq) {
                const T* p = src + 2 * y * W + 2 * xq;
                dst[y * OW + xq] = (p[0] + p[1] + p[W] + p[W + 1]) * T(0.25);
            }
    }

    Tensor<T> result = Tensor<T>::from_data({N, C, OH, OW}, std::move(out));
    if (!input.requires_grad()) return result;
    auto rn = result.node();
    rn->is_leaf = false;
    rn->requires_grad = true;
    rn->parents = {input.node()};
    auto xn = input.node().get();
    auto on = rn.get();
    rn->backward_fn = [=]() {
        xn->ensure_grad();
        const std::vector<T>& g = on->grad;
        for (int64_t nc = 0; nc < N * C; ++nc) {
            T* gx = xn->grad.data() + nc * H * W;
            const T* gc = g.data() + nc * OH * OW;
            for (int64_t y = 0; y < OH; ++y)
                for (int64_t xq = 0; xq < OW; ++xq) {
                    const T q = gc[y * OW + xq] * T(0.25);
                    T* p = gx + 2 * y * W + 2 * xq;
                    p[0] += q;
                    p[1] += q;
                    p[W] += q;
                    p[W + 1] += q;
                }
        }
    };
    return result;
}

/// Channel-to-space rearrangement: output channel c at (r*y+dy, r*x+dx) reads
/// input channel c*r^2 + dy*r + dx at (y, x).
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& input, int64_t r) {
    detail::check_nchw(input, "pixel_shuffle");
    if (r < 1) throw std::invalid_argument("pixel_shuffle: upscale factor must be positive");
    const auto& s = input.shape();
    const int64_t N = s[0], C = s[1], H = s[2], W = s[3];
    if (C % (r * r) != 0)
        throw std::invalid_argument("pixel_shuffle: channels " + std::to_string(C) +
                                    " not divisible by r^2=" + std::to_string(r * r));
    const int64_t OC = C / (r * r), OH = H * r, OW = W * r;

    std::vector<T> out(static_cast<size_t>(N) * C * H * W);
    std::span<const T> x = input.data();
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < OC; ++c)
            for (int64_t dy = 0; dy < r; ++dy)
                for (int64_t dx = 0; dx < r; ++dx) {
                    const T* src = x.data() + ((n * C + c * r * r + dy * r + dx) * H) * W;
                    T* dst = out.data() + (n * OC + c) * OH * OW;
                    for (int64_t y = 0; y < H; ++y)
                        for (int64_t xq = 0; xq < W; ++xq)
                            dst[(r * y + dy) * OW + r * xq + dx] = src[y * W + xq];
                }

    Tensor<T> result = Tensor<T>::from_data({N, OC, OH, OW}, std::move(out));
    if (!input.requires_grad()) return result;
    auto rn = result.node();
    rn->is_leaf = false;
    rn->requires_grad = true;
    rn->parents = {input.node()};
    auto xn = input.node().get();
    auto on = rn.get();
    rn->backward_fn = [=]() {
        xn->ensure_grad();
        const std::vector<T>& g = on->grad;
        for (int64_t n = 0; n < N; ++n)
            for (int64_t c = 0; c < OC; ++c)
                for (int64_t dy = 0; dy < r; ++dy)
                    for (int64_t dx = 0; dx < r; ++dx) {
                        T* gx = xn->grad.data() + ((n * C + c * r * r + dy * r + dx) * H) * W;
                        const T* gc = g.data() + (n * OC + c) * OH * OW;
                        for (int64_t y = 0; y < H; ++y)
                            for (int64_t xq = 0; xq < W; ++xq)
                                gx[y * W + xq] += gc[(r * y + dy) * OW + r * xq + dx];
                    }
    };
    return result;
}

/// Reflection padding with repeated mirroring, so pad amounts may exceed the
/// plane extent (needed when tiny inputs are grown to the network's minimum).
template <typename T>
Tensor<T> reflect_pad2d(const Tensor<T>& input, int64_t top, int64_t bottom, int64_t left, int64_t right) {
    detail::check_nchw(input, "reflect_pad2d");
    if (top < 0 || bottom < 0 || left < 0 || right < 0)
        throw std::invalid_argument("reflect_pad2d: negative padding");
    const auto& s = input.shape();
    const int64_t N = s[0], C = s[1], H = s[2], W = s[3];
    const int64_t OH = H + top + bottom, OW = W + left + right;

    std::vector<T> out(static_cast<size_t>(N) * C * OH * OW);
    std::span<const T> x = input.data();
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const T* src = x.data() + nc * H * W;
        T* dst = out.data() + nc * OH * OW;
        for (int64_t y = 0; y < OH; ++y) {
            const int64_t ry = detail::reflect_index(y - top, H);
            for (int64_t xq = 0; xq < OW; ++xq)
                dst[y * OW + xq] = src[ry * W + detail::reflect_index(xq - left, W)];
        }
    }

    Tensor<T> result = Tensor<T>::from_data({N, C, OH, OW}, std::move(out));
    if (!input.requires_grad()) return result;
    auto rn = result.node();
    rn->is_leaf = false;
    rn->requires_grad = true;
    rn->parents = {input.node()};
    auto xn = input.node().get();
    auto on = rn.get();
    rn->backward_fn = [=]() {
        xn->ensure_grad();
        const std::vector<T>& g = on->grad;
        for (int64_t nc = 0; nc < N * C; ++nc) {
            T* gx = xn->grad.data() + nc * H * W;
            const T* gc = g.data() + nc * OH * OW;
            for (int64_t y = 0; y < OH; ++y) {
                const int64_t ry = detail::reflect_index(y - top, H);
                for (int64_t xq = 0; xq < OW; ++xq)
                    gx[ry * W + detail::reflect_index(xq - left, W)] += gc[y * OW + xq];
            }
        }
    };
    return result;
}

template <typename T>
Tensor<T> crop2d(const Tensor<T>& input, int64_t top, int64_t left, int64_t out_h, int64_t out_w) {
    detail::check_nchw(input, "crop2d");
    const auto& s = input.shape();
    const int64_t N = s[0], C = s[1], H = s[2], W = s[3];
    if (top < 0 || left < 0 || out_h < 1 || out_w < 1 || top + out_h > H || left + out_w > W)
        throw std::invalid_argument("crop2d: window out of bounds");

    std::vector<T> out(static_cast<size_t>(N) * C * out_h * out_w);
    std::span<const T> x = input.data();
    for (int64_t nc = 0; nc < N * C; ++nc)
        for (int64_t y = 0; y < out_h; ++y)
            std::memcpy(out.data() + (nc * out_h + y) * out_w,
                        x.data() + nc * H * W + (top + y) * W + left, sizeof(T) * out_w);

    Tensor<T> result = Tensor<T>::from_data({N, C, out_h, out_w}, std::move(out));
    if (!input.requires_grad()) return result;
    auto rn = result.node();
    rn->is_leaf = false;
    rn->requires_grad = true;
    rn->parents = {input.node()};
    auto xn = input.node().get();
    auto on = rn.get();
    rn->backward_fn = [=]() {
        xn->ensure_grad();
        const std::vector<T>& g = on->grad;
        for (int64_t nc = 0; nc < N * C; ++nc)
            for (int64_t y = 0; y < out_h; ++y) {
                T* gx = xn->grad.data() + nc * H * W + (top + y) * W + left;
                const T* gc = g.data() + (nc * out_h + y) * out_w;
                for (int64_t xq = 0; xq < out_w; ++xq) gx[xq] += gc[xq];
            }
    };
    return result;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_nchw(a, "concat_channels");
    detail::check_nchw(b, "concat_channels");
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    if (sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3])
        throw std::invalid_argument("concat_channels: N/H/W mismatch " + shape_str(sa) + " vs " + shape_str(sb));
    const int64_t N = sa[0], Ca = sa[1], Cb = sb[1], H = sa[2], W = sa[3];
    const int64_t HW = H * W;

    std::vector<T> out(static_cast<size_t>(N) * (Ca + Cb) * HW);
    for (int64_t n = 0; n < N; ++n) {
        std::memcpy(out.data() + n * (Ca + Cb) * HW, a.data().data() + n * Ca * HW, sizeof(T) * Ca * HW);
        std::memcpy(out.data() + (n * (Ca + Cb) + Ca) * HW, b.data().data() + n * Cb * HW, sizeof(T) * Cb * HW);
    }

    Tensor<T> result = Tensor<T>::from_data({N, Ca + Cb, H, W}, std::move(out));
    if (!detail::any_requires_grad<T>({&a, &b})) return result;
    auto rn = result.node();
    rn->is_leaf = false;
    rn->requires_grad = true;
    rn->parents = {a.node(), b.node()};
    auto an = a.node().get();
    auto bn = b.node().get();
    auto on = rn.get();
    rn->backward_fn = [=]() {
        const std::vector<T>& g = on->grad;
        if (an->requires_grad) {
            an->ensure_grad();
            for (int64_t n = 0; n < N; ++n) {
                const T* gc = g.data() + n * (Ca + Cb) * HW;
                T* gx = an->grad.data() + n * Ca * HW;
                for (int64_t i = 0; i < Ca * HW; ++i) gx[i] += gc[i];
            }
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int64_t n = 0; n < N; ++n) {
                const T* gc = g.data() + (n * (Ca + Cb) + Ca) * HW;
                T* gx = bn->grad.data() + n * Cb * HW;
                for (int64_t i = 0; i < Cb * HW; ++i) gx[i] += gc[i];
            }
        }
    };
    return result;
}

// ---------------------------------------------------------------------------
// elementwise

namespace detail {

// fwd(x) -> y ; dfdx(x, y) -> local derivative
template <typename T, typename F, typename D>
Tensor<T> unary_op(const Tensor<T>& x, F fwd, D dfdx) {
    std::vector<T> out(x.numel());
    std::span<const T> xv = x.data();
    for (int64_t i = 0; i < x.numel(); ++i) out[i] = fwd(xv[i]);
    Tensor<T> result = Tensor<T>::from_data(x.shape(), std::move(out));
    if (!x.requires_grad()) return result;
    auto rn = result.node();
    rn->is_leaf = false;
    rn->requires_grad = true;
    rn->parents = {x.node()};
    auto xn = x.node().get();
    auto on = rn.get();
    rn->backward_fn = [=]() {
        xn->ensure_grad();
        const int64_t n = static_cast<int64_t>(on->data.size());
        for (int64_t i = 0; i < n; ++i) xn->grad[i] += on->grad[i] * dfdx(xn->data[i], on->data[i]);
    };
    return result;
}

// dfdx / dfdy evaluated as (x, y, out)
template <typename T, typename F, typename DX, typename DY>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, const char* name, F fwd, DX dfda, DY dfdb) {
    check_same_shape(a, b, name);
    std::vector<T> out(a.numel());
    std::span<const T> av = a.data();
    std::span<const T> bv = b.data();
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = fwd(av[i], bv[i]);
    Tensor<T> result = Tensor<T>::from_data(a.shape(), std::move(out));
    if (!any_requires_grad<T>({&a, &b})) return result;
    auto rn = result.node();
    rn->is_leaf = false;
    rn->requires_grad = true;
    rn->parents = {a.node(), b.node()};
    auto an = a.node().get();
    auto bn = b.node().get();
    auto on = rn.get();
    rn->backward_fn = [=]() {
        const int64_t n = static_cast<int64_t>(on->data.size());
        if (an->requires_grad) {
            an->ensure_grad();
            for (int64_t i = 0; i < n; ++i)
                an->grad[i] += on->grad[i] * dfda(an->data[i], bn->data[i], on->data[i]);
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int64_t i = 0; i < n; ++i)
                bn->grad[i] += on->grad[i] * dfdb(an->data[i], bn->data[i], on->data[i]);
        }
    };
    return result;
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        a, b, "add", [](T x, T y) { return x + y; }, [](T, T, T) { return T(1); }, [](T, T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        a, b, "sub", [](T x, T y) { return x - y; }, [](T, T, T) { return T(1); }, [](T, T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y, T) { return y; }, [](T x, T, T) { return x; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        a, b, "div", [](T x, T y) { return x / y; }, [](T, T y, T) { return T(1) / y; },
        [](T, T y, T out) { return -out / y; });
}

template <typename T>
Tensor<T> smul(const Tensor<T>& x, T c) {
    return detail::unary_op(
        x, [c](T v) { return v * c; }, [c](T, T) { return c; });
}

template <typename T>
Tensor<T> sadd(const Tensor<T>& x, T c) {
    return detail::unary_op(
        x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> lrelu(const Tensor<T>& x, T slope) {
    if (!(slope > T(0) && slope < T(1)))
        throw std::invalid_argument("lrelu: slope must lie in (0, 1)");
    // gradient at exactly 0 is the slope
    return detail::unary_op(
        x, [slope](T v) { return v >= T(0) ? v : slope * v; },
        [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
    // subgradient 0 at the tie
    return detail::unary_op(
        x, [](T v) { return v < T(0) ? -v : v; },
        [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
    if (!(lo < hi)) throw std::invalid_argument("clamp: lo must be < hi");
    return detail::unary_op(
        x, [lo, hi](T v) { return std::min(hi, std::max(lo, v)); },
        [lo, hi](T v, T) { return (v > lo && v < hi) ? T(1) : T(0); });
}

/// Elementwise x^gamma for x >= 0. Gradient at x = 0 is 0 (gamma >= 1 in all
/// callers; the power model exponent is > 1).
template <typename T>
Tensor<T> pow_scalar(const Tensor<T>& x, T gamma) {
    std::span<const T> xv = x.data();
    for (int64_t i = 0; i < x.numel(); ++i)
        if (xv[i] < T(0)) throw std::invalid_argument("pow_scalar: negative base (inputs must be clamped first)");
    return detail::unary_op(
        x, [gamma](T v) { return std::pow(v, gamma); },
        [gamma](T v, T) { return v == T(0) ? T(0) : gamma * std::pow(v, gamma - T(1)); });
}

template <typename T>
Tensor<T> ln(const Tensor<T>& x) {
    std::span<const T> xv = x.data();
    for (int64_t i = 0; i < x.numel(); ++i)
        if (!(xv[i] > T(0)))
            throw std::invalid_argument("ln: non-positive input (missing epsilon guard upstream)");
    return detail::unary_op(
        x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

// ---------------------------------------------------------------------------
// reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    double acc = 0;
    for (T v : x.data()) acc += static_cast<double>(v);
    Tensor<T> result = Tensor<T>::scalar(static_cast<T>(acc));
    if (!x.requires_grad()) return result;
    auto rn = result.node();
    rn->is_leaf = false;
    rn->requires_grad = true;
    rn->parents = {x.node()};
    auto xn = x.node().get();
    auto on = rn.get();
    rn->backward_fn = [=]() {
        xn->ensure_grad();
        const T g = on->grad[0];
        for (T& v : xn->grad) v += g;
    };
    return result;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    const int64_t n = x.numel();
    double acc = 0;
    for (T v : x.data()) acc += static_cast<double>(v);
    Tensor<T> result = Tensor<T>::scalar(static_cast<T>(acc / n));
    if (!x.requires_grad()) return result;
    auto rn = result.node();
    rn->is_leaf = false;
    rn->requires_grad = true;
    rn->parents = {x.node()};
    auto xn = x.node().get();
    auto on = rn.get();
    rn->backward_fn = [=]() {
        xn->ensure_grad();
        const T g = on->grad[0] / static_cast<T>(n);
        for (T& v : xn->grad) v += g;
    };
    return result;
}

/// Population standard deviation over all elements (divide by N), computed
/// two-pass. Gradient is (x_i - mu) / (N * sigma), defined as 0 for a flat
/// tensor.
template <typename T>
Tensor<T> stddev(const Tensor<T>& x) {
    const int64_t n = x.numel();
    std::span<const T> xv = x.data();
    double acc = 0;
    for (T v : xv) acc += static_cast<double>(v);
    const double mu = acc / n;
    double var = 0;
    for (T v : xv) {
        const double d = static_cast<double>(v) - mu;
        var += d * d;
    }
    var /= n;
    const double sigma = std::sqrt(var);
    Tensor<T> result = Tensor<T>::scalar(static_cast<T>(sigma));
    if (!x.requires_grad()) return result;
    auto rn = result.node();
    rn->is_leaf = false;
    rn->requires_grad = true;
    rn->parents = {x.node()};
    auto xn = x.node().get();
    auto on = rn.get();
    rn->backward_fn = [=]() {
        if (sigma <= 0) return;
        xn->ensure_grad();
        const double g = static_cast<double>(on->grad[0]) / (n * sigma);
        for (int64_t i = 0; i < n; ++i)
            xn->grad[i] += static_cast<T>(g * (static_cast<double>(xn->data[i]) - mu));
    };
    return result;
}

// ---------------------------------------------------------------------------
// windowed moments (box-filter sums over reflect-padded planes)

namespace detail {

// out[i] = sum of src[i .. i+win)
inline void sliding_sum_1d(const double* src, int64_t n, int64_t win, double* out) {
    double acc = 0;
    for (int64_t i = 0; i < win; ++i) acc += src[i];
    out[0] = acc;
    for (int64_t i = 1; i + win - 1 < n; ++i) {
        acc += src[i + win - 1] - src[i - 1];
        out[i] = acc;
    }
}

// Window sums of `plane` (H x W) over win x win reflect-padded windows
// centered at each pixel; O(HW) via separable running sums.
template <typename T>
void box_sums_reflect(const T* plane, int64_t H, int64_t W, int64_t win, double* out) {
    const int64_t p = win / 2;
    const int64_t HP = H + 2 * p, WP = W + 2 * p;
    std::vector<double> padded(static_cast<size_t>(HP) * WP);
    for (int64_t y = 0; y < HP; ++y) {
        const int64_t ry = reflect_index(y - p, H);
        for (int64_t x = 0; x < WP; ++x)
            padded[y * WP + x] = static_cast<double>(plane[ry * W + reflect_index(x - p, W)]);
    }
    std::vector<double> rows(static_cast<size_t>(HP) * W);
    for (int64_t y = 0; y < HP; ++y) sliding_sum_1d(padded.data() + y * WP, WP, win, rows.data() + y * W);
    std::vector<double> col(HP);
    for (int64_t x = 0; x < W; ++x) {
        for (int64_t y = 0; y < HP; ++y) col[y] = rows[y * W + x];
        std::vector<double> sums(H);
        sliding_sum_1d(col.data(), HP, win, sums.data());
        for (int64_t y = 0; y < H; ++y) out[y * W + x] = sums[y];
    }
}

// Adjoint of box_sums_reflect: spreads g over each window in padded space and
// folds reflections back; accumulates into gx (H x W doubles).
inline void box_sums_adjoint_fold(const double* g, int64_t H, int64_t W, int64_t win, double* gx) {
    const int64_t p = win / 2;
    const int64_t HP = H + 2 * p, WP = W + 2 * p;
    const int64_t m = win - 1;
    // cover[pq] = sum of g over windows containing padded position pq;
    // computed as sliding sums over a zero-extended copy of g
    std::vector<double> zrow(W + 2 * m, 0.0), rowcover(static_cast<size_t>(H) * WP);
    for (int64_t y = 0; y < H; ++y) {
        std::copy(g + y * W, g + (y + 1) * W, zrow.begin() + m);
        sliding_sum_1d(zrow.data(), W + 2 * m, win, rowcover.data() + y * WP);
    }
    std::vector<double> zcol(H + 2 * m), cover(HP);
    for (int64_t x = 0; x < WP; ++x) {
        std::fill(zcol.begin(), zcol.end(), 0.0);
        for (int64_t y = 0; y < H; ++y) zcol[m + y] = rowcover[y * WP + x];
        sliding_sum_1d(zcol.data(), H + 2 * m, win, cover.data());
        for (int64_t y = 0; y < HP; ++y) {
            const int64_t ry = reflect_index(y - p, H);
            gx[ry * W + reflect_index(x - p, W)] += cover[y];
        }
    }
}

}  // namespace detail

/// Per-pixel mean over win x win reflection-padded windows; output has the
/// input's shape.
template <typename T>
Tensor<T> patch_mean(const Tensor<T>& x, int64_t win) {
    detail::check_nchw(x, "patch_mean");
    if (win < 1 || win % 2 == 0) throw std::invalid_argument("patch_mean: window must be odd and positive");
    const auto& s = x.shape();
    const int64_t N = s[0], C = s[1], H = s[2], W = s[3];
    const double inv = 1.0 / (static_cast<double>(win) * win);

    std::vector<T> out(x.numel());
    std::vector<double> sums(static_cast<size_t>(H) * W);
    for (int64_t nc = 0; nc < N * C; ++nc) {
        detail::box_sums_reflect(x.data().data() + nc * H * W, H, W, win, sums.data());
        for (int64_t i = 0; i < H * W; ++i) out[nc * H * W + i] = static_cast<T>(sums[i] * inv);
    }

    Tensor<T> result = Tensor<T>::from_data(s, std::move(out));
    if (!x.requires_grad()) return result;
    auto rn = result.node();
    rn->is_leaf = false;
    rn->requires_grad = true;
    rn->parents = {x.node()};
    auto xn = x.node().get();
    auto on = rn.get();
    rn->backward_fn = [=]() {
        xn->ensure_grad();
        std::vector<double> g(static_cast<size_t>(H) * W), gx(static_cast<size_t>(H) * W);
        for (int64_t nc = 0; nc < N * C; ++nc) {
            for (int64_t i = 0; i < H * W; ++i) g[i] = static_cast<double>(on->grad[nc * H * W + i]) * inv;
            std::fill(gx.begin(), gx.end(), 0.0);
            detail::box_sums_adjoint_fold(g.data(), H, W, win, gx.data());
            for (int64_t i = 0; i < H * W; ++i) xn->grad[nc * H * W + i] += static_cast<T>(gx[i]);
        }
    };
    return result;
}

/// Per-pixel population standard deviation over win x win reflection-padded
/// windows. Gradient contribution through a flat window is 0.
template <typename T>
Tensor<T> patch_std(const Tensor<T>& x, int64_t win) {
    detail::check_nchw(x, "patch_std");
    if (win < 1 || win % 2 == 0) throw std::invalid_argument("patch_std: window must be odd and positive");
    const auto& s = x.shape();
    const int64_t N = s[0], C = s[1], H = s[2], W = s[3];
    const int64_t HW = H * W;
    const double inv = 1.0 / (static_cast<double>(win) * win);

    // keep the window means around for the backward pass
    auto mu = std::make_shared<std::vector<double>>(static_cast<size_t>(N) * C * HW);
    auto sigma = std::make_shared<std::vector<double>>(static_cast<size_t>(N) * C * HW);
    std::vector<T> out(x.numel());
    {
        std::vector<double> s1(static_cast<size_t>(HW)), s2(static_cast<size_t>(HW));
        std::vector<T> sq(static_cast<size_t>(HW));
        for (int64_t nc = 0; nc < N * C; ++nc) {
            const T* plane = x.data().data() + nc * HW;
            for (int64_t i = 0; i < HW; ++i) sq[i] = plane[i] * plane[i];
            detail::box_sums_reflect(plane, H, W, win, s1.data());
            detail::box_sums_reflect(sq.data(), H, W, win, s2.data());
            for (int64_t i = 0; i < HW; ++i) {
                const double m = s1[i] * inv;
                const double var = std::max(0.0, s2[i] * inv - m * m);
                const double sd = std::sqrt(var);
                (*mu)[nc * HW + i] = m;
                (*sigma)[nc * HW + i] = sd;
                out[nc * HW + i] = static_cast<T>(sd);
            }
        }
    }

    Tensor<T> result = Tensor<T>::from_data(s, std::move(out));
    if (!x.requires_grad()) return result;
    auto rn = result.node();
    rn->is_leaf = false;
    rn->requires_grad = true;
    rn->parents = {x.node()};
    auto xn = x.node().get();
    auto on = rn.get();
    rn->backward_fn = [=]() {
        xn->ensure_grad();
        // dsigma_i/dx_k = (x_k - mu_i) / (win^2 sigma_i) for k in window i:
        // two adjoint box passes, one for g/sigma and one for g*mu/sigma
        std::vector<double> a(static_cast<size_t>(HW)), b(static_cast<size_t>(HW));
        std::vector<double> A(static_cast<size_t>(HW)), B(static_cast<size_t>(HW));
        for (int64_t nc = 0; nc < N * C; ++nc) {
            const double* m = mu->data() + nc * HW;
            const double* sd = sigma->data() + nc * HW;
            for (int64_t i = 0; i < HW; ++i) {
                const double gi = static_cast<double>(on->grad[nc * HW + i]);
                if (sd[i] > 0) {
                    a[i] = gi / sd[i];
                    b[i] = gi * m[i] / sd[i];
                } else {
                    a[i] = b[i] = 0.0;
                }
            }
            std::fill(A.begin(), A.end(), 0.0);
            std::fill(B.begin(), B.end(), 0.0);
            detail::box_sums_adjoint_fold(a.data(), H, W, win, A.data());
            detail::box_sums_adjoint_fold(b.data(), H, W, win, B.data());
            const T* plane = xn->data.data() + nc * HW;
            for (int64_t i = 0; i < HW; ++i)
                xn->grad[nc * HW + i] += static_cast<T>((static_cast<double>(plane[i]) * A[i] - B[i]) * inv);
        }
    };
    return result;
}

}  // namespace pcce::nd
