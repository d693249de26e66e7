// Copyright 2026 the pcce authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>

#include "pcce/ops.hpp"

// The unsupervised loss suite: power loss |R - R_hat|, SSIM similarity loss
// against the undimmed original, and global + local contrast losses with the
// R-dependent w_std switch. All terms are built from recorded tensor ops, so
// one backward() from the weighted total reaches the network parameters.

namespace pcce::loss {

struct Weights {
    double lambda_p = 10.0;
    double lambda_s = 2.0;
    double lambda_c = 0.25;
    double lambda_g = 2.0;
};

/// Loss-term switches for ablation runs; disabled terms are left out of the
/// recorded graph entirely.
struct Mask {
    bool power = true;
    bool similarity = true;
    bool contrast_global = true;
    bool contrast_local = true;
};

template <typename T>
struct Breakdown {
    double l_p = 0.0;
    double l_s = 0.0;
    double l_c_global = 0.0;
    double l_c_local = 0.0;
    double l_total = 0.0;
    double rate = 0.0;           // requested R
    double measured_rate = 0.0;  // R_hat of f(X_D) against the original X
    nd::Tensor<T> total;         // backward-capable scalar
};

constexpr double kContrastEps = 1e-4;
constexpr int kLocalWindow = 11;

/// Blend factor between "preserve sigma" and "grow sigma": max(0, 1 - 2R).
inline double w_std(double rate) { return std::max(0.0, 1.0 - 2.0 * rate); }

namespace detail {

template <typename T>
void check_plane(const nd::Tensor<T>& t, const char* who) {
    if (t.shape().size() != 4 || t.shape()[0] != 1 || t.shape()[1] != 1)
        throw std::invalid_argument(std::string(who) + ": expected a 1x1xHxW luminance tensor, got " +
                                    nd::shape_str(t.shape()));
}

template <typename T>
nd::Tensor<T> gaussian_window_tensor(int size, double sigma) {
    std::vector<T> w(static_cast<size_t>(size) * size);
    const double c = (size - 1) / 2.0;
    double total = 0.0;
    std::vector<double> w1(size);
    for (int i = 0; i < size; ++i) {
        w1[i] = std::exp(-((i - c) * (i - c)) / (2.0 * sigma * sigma));
        total += w1[i];
    }
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) w[i * size + j] = static_cast<T>((w1[i] / total) * (w1[j] / total));
    return nd::Tensor<T>::from_data({1, 1, size, size}, std::move(w));
}

}  // namespace detail

/// |R - R_hat| with R_hat = 1 - sum(f^gamma) / input_power. The measured rate
/// is written to *measured when given.
template <typename T>
nd::Tensor<T> power_loss(double rate, const nd::Tensor<T>& f_out, double input_power, double gamma,
                         double* measured = nullptr) {
    detail::check_plane(f_out, "power_loss");
    if (!(input_power > 0.0)) throw std::invalid_argument("power_loss: input plane has zero power");
    nd::Tensor<T> out_power = nd::sum(nd::pow_scalar(f_out, static_cast<T>(gamma)));
    nd::Tensor<T> r_hat = nd::sadd(nd::smul(out_power, static_cast<T>(-1.0 / input_power)), T(1));
    if (measured) *measured = static_cast<double>(r_hat.item());
    return nd::abs(nd::sadd(nd::smul(r_hat, T(-1)), static_cast<T>(rate)));
}

/// 1 - mean SSIM(original, f_out), 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, dynamic range 1, valid-region windows.
template <typename T>
nd::Tensor<T> similarity_loss(const nd::Tensor<T>& original, const nd::Tensor<T>& f_out) {
    detail::check_plane(original, "similarity_loss");
    detail::check_plane(f_out, "similarity_loss");
    if (original.shape() != f_out.shape())
        throw std::invalid_argument("similarity_loss: plane dimensions differ");
    const int win = 11;
    if (original.shape()[2] < win || original.shape()[3] < win)
        throw std::invalid_argument("similarity_loss: plane smaller than the SSIM window");
    const T c1 = static_cast<T>(0.01 * 0.01), c2 = static_cast<T>(0.03 * 0.03);

    nd::Tensor<T> window = detail::gaussian_window_tensor<T>(win, 1.5);
    nd::Tensor<T> zero_bias = nd::Tensor<T>::zeros({1});
    auto blur = [&](const nd::Tensor<T>& t) { return nd::conv2d(t, window, zero_bias, 1, nd::Padding::None); };

    nd::Tensor<T> mu1 = blur(original);
    nd::Tensor<T> mu2 = blur(f_out);
    nd::Tensor<T> m11 = blur(nd::mul(original, original));
    nd::Tensor<T> m22 = blur(nd::mul(f_out, f_out));
    nd::Tensor<T> m12 = blur(nd::mul(original, f_out));

    nd::Tensor<T> mu1mu2 = nd::mul(mu1, mu2);
    nd::Tensor<T> s11 = nd::sub(m11, nd::mul(mu1, mu1));
    nd::Tensor<T> s22 = nd::sub(m22, nd::mul(mu2, mu2));
    nd::Tensor<T> s12 = nd::sub(m12, mu1mu2);

    nd::Tensor<T> num = nd::mul(nd::sadd(nd::smul(mu1mu2, T(2)), c1), nd::sadd(nd::smul(s12, T(2)), c2));
    nd::Tensor<T> den = nd::mul(nd::sadd(nd::add(nd::mul(mu1, mu1), nd::mul(mu2, mu2)), c1),
                                nd::sadd(nd::add(s11, s22), c2));
    return nd::sadd(nd::smul(nd::mean(nd::div(num, den)), T(-1)), T(1));
}

/// |mu_d - mu_f| - (1-w) ln((sigma_f+eps)/(sigma_d+eps)) + w |sigma_d - sigma_f|
/// over whole-plane statistics, with w = w_std(R).
template <typename T>
nd::Tensor<T> global_contrast_loss(const nd::Tensor<T>& dimmed, const nd::Tensor<T>& f_out, double rate) {
    detail::check_plane(dimmed, "global_contrast_loss");
    detail::check_plane(f_out, "global_contrast_loss");
    if (dimmed.shape() != f_out.shape())
        throw std::invalid_argument("global_contrast_loss: plane dimensions differ");
    const double w = w_std(rate);
    const T eps = static_cast<T>(kContrastEps);

    nd::Tensor<T> mu_term = nd::abs(nd::sub(nd::mean(dimmed), nd::mean(f_out)));
    nd::Tensor<T> sd = nd::stddev(dimmed);
    nd::Tensor<T> sf = nd::stddev(f_out);
    nd::Tensor<T> log_ratio = nd::sub(nd::ln(nd::sadd(sf, eps)), nd::ln(nd::sadd(sd, eps)));
    nd::Tensor<T> out = nd::sub(mu_term, nd::smul(log_ratio, static_cast<T>(1.0 - w)));
    if (w > 0.0) out = nd::add(out, nd::smul(nd::abs(nd::sub(sd, sf)), static_cast<T>(w)));
    return out;
}

/// The same expression evaluated per pixel on 11x11 reflection-padded window
/// statistics and averaged over the plane.
template <typename T>
nd::Tensor<T> local_contrast_loss(const nd::Tensor<T>& dimmed, const nd::Tensor<T>& f_out, double rate) {
    detail::check_plane(dimmed, "local_contrast_loss");
    detail::check_plane(f_out, "local_contrast_loss");
    if (dimmed.shape() != f_out.shape())
        throw std::invalid_argument("local_contrast_loss: plane dimensions differ");
    if (dimmed.shape()[2] < kLocalWindow || dimmed.shape()[3] < kLocalWindow)
        throw std::invalid_argument("local_contrast_loss: plane smaller than the 11x11 patch window");
    const double w = w_std(rate);
    const T eps = static_cast<T>(kContrastEps);

    nd::Tensor<T> mu_d = nd::patch_mean(dimmed, kLocalWindow);
    nd::Tensor<T> mu_f = nd::patch_mean(f_out, kLocalWindow);
    nd::Tensor<T> sd = nd::patch_std(dimmed, kLocalWindow);
    nd::Tensor<T> sf = nd::patch_std(f_out, kLocalWindow);

    nd::Tensor<T> term = nd::abs(nd::sub(mu_d, mu_f));
    nd::Tensor<T> log_ratio = nd::sub(nd::ln(nd::sadd(sf, eps)), nd::ln(nd::sadd(sd, eps)));
    term = nd::sub(term, nd::smul(log_ratio, static_cast<T>(1.0 - w)));
    if (w > 0.0) term = nd::add(term, nd::smul(nd::abs(nd::sub(sd, sf)), static_cast<T>(w)));
    return nd::mean(term);
}

/// Weighted total: lambda_p L_p + lambda_s L_s + lambda_c (lambda_G L_c^G + L_c^L).
/// `original` is the undimmed luminance X (the power reference), `dimmed` is
/// X_D, `f_out` the network output.
template <typename T>
Breakdown<T> total_loss(const nd::Tensor<T>& original, const nd::Tensor<T>& dimmed, const nd::Tensor<T>& f_out,
                        double rate, const Weights& weights, double gamma, const Mask& mask = {}) {
    detail::check_plane(original, "total_loss");
    if (original.shape() != dimmed.shape() || original.shape() != f_out.shape())
        throw std::invalid_argument("total_loss: plane dimensions differ");

    Breakdown<T> bd;
    bd.rate = rate;

    double input_power = 0.0;
    for (T v : original.data()) input_power += std::pow(static_cast<double>(v), gamma);

    nd::Tensor<T> total = nd::Tensor<T>::scalar(T(0));
    if (mask.power) {
        nd::Tensor<T> lp = power_loss(rate, f_out, input_power, gamma, &bd.measured_rate);
        bd.l_p = static_cast<double>(lp.item());
        total = nd::add(total, nd::smul(lp, static_cast<T>(weights.lambda_p)));
    }
    if (mask.similarity) {
        nd::Tensor<T> ls = similarity_loss(original, f_out);
        bd.l_s = static_cast<double>(ls.item());
        total = nd::add(total, nd::smul(ls, static_cast<T>(weights.lambda_s)));
    }
    if (mask.contrast_global) {
        nd::Tensor<T> lcg = global_contrast_loss(dimmed, f_out, rate);
        bd.l_c_global = static_cast<double>(lcg.item());
        total = nd::add(total, nd::smul(lcg, static_cast<T>(weights.lambda_c * weights.lambda_g)));
    }
    if (mask.contrast_local) {
        nd::Tensor<T> lcl = local_contrast_loss(dimmed, f_out, rate);
        bd.l_c_local = static_cast<double>(lcl.item());
        total = nd::add(total, nd::smul(lcl, static_cast<T>(weights.lambda_c)));
    }
    bd.total = total;
    bd.l_total = static_cast<double>(total.item());
    return bd;
}

}  // namespace pcce::loss
