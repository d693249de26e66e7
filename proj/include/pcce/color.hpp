// Copyright 2026 the pcce authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <utility>
#include <vector>

// Colorspace decomposition, the OLED power model, and the dimming algebra
// relating the power-saving rate R to the luminance scaling factor k.
// Everything here is double precision; the analytic identities (rate <->
// ratio round trips, pure-scaling power rates) anchor the rest of the system.

namespace pcce::color {

/// Panel coefficients of the power model P = sum(w0 + wR R^g + wG G^g + wB B^g).
struct PanelModel {
    double gamma = 2.2;
    double w0 = 0.0;
    double wr = 1.0, wg = 1.0, wb = 1.0;
};

enum class LumaRole { Original, Dimmed, Enhanced };

/// Single luminance plane, values in [0, 1], row-major.
struct LumaPlane {
    int64_t width = 0, height = 0;
    std::vector<double> values;
    LumaRole role = LumaRole::Original;

    int64_t pixels() const { return width * height; }
    double& at(int64_t y, int64_t x) { return values[y * width + x]; }
    double at(int64_t y, int64_t x) const { return values[y * width + x]; }
};

/// Zero-centered chrominance planes paired with a LumaPlane.
struct ChromaPlanes {
    int64_t width = 0, height = 0;
    std::vector<double> u, v;
};

/// Interleaved RGB image, values in [0, 1].
struct ImageRGB {
    int64_t width = 0, height = 0;
    std::vector<double> pixels;  // H*W*3, rgb interleaved

    int64_t count() const { return width * height; }
    double* px(int64_t y, int64_t x) { return pixels.data() + (y * width + x) * 3; }
    const double* px(int64_t y, int64_t x) const { return pixels.data() + (y * width + x) * 3; }
};

/// Requested rate, its scaling factor, and the measured outcome of a dim.
struct DimSpec {
    double rate = 0.0;      // requested R
    double ratio = 1.0;     // k = (1 - R)^(1/gamma)
    double p_in = 0.0;      // TDP of the input plane
    double p_dim = 0.0;     // TDP after dimming
    double achieved = 0.0;  // measured rate 1 - p_dim/p_in
};

/// Frame-adaptive rate policy for video: R = clamp(mean(Y)^rho, clamp range).
struct VideoPolicy {
    double rho = 1.5;
    double clamp_lo = 0.01, clamp_hi = 0.8;  // the training range of R
};

/// BT.601 full-range decomposition; Y in [0, 1], U/V zero-centered.
std::pair<LumaPlane, ChromaPlanes> rgb_to_yuv(const ImageRGB& image);

/// Inverse BT.601. Outputs are clamped to [0, 1]; when out_of_gamut is given
/// it receives the count of pixels that needed clamping.
ImageRGB yuv_to_rgb(const LumaPlane& luma, const ChromaPlanes& chroma, int64_t* out_of_gamut = nullptr);

/// Luminance-only TDP: sum of Y_i^gamma.
double tdp_luma(const LumaPlane& luma, const PanelModel& panel);

/// Full RGB TDP: sum of w0 + wR R^g + wG G^g + wB B^g.
double tdp_rgb(const ImageRGB& image, const PanelModel& panel);

/// k = (1 - R)^(1/gamma); rejects R outside [0, 1).
double dim_ratio(double rate, const PanelModel& panel);

/// X_D = k * X.
LumaPlane apply_dim(const LumaPlane& luma, double ratio);

/// Measured rate 1 - tdp(output)/tdp(input); rejects zero input power.
double achieved_rate(const LumaPlane& input, const LumaPlane& output, const PanelModel& panel);

/// Fills a DimSpec for a uniform dim of `luma` at the requested rate.
DimSpec plan_dim(const LumaPlane& luma, double rate, const PanelModel& panel);

/// Frame rate policy R = clamp(mean(Y)^rho).
double video_rate(const LumaPlane& luma, const VideoPolicy& policy);

}  // namespace pcce::color
