// Copyright 2026 the pcce authors
// SPDX-License-Identifier: Apache-2.0

#include "pcce/color.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pcce::color {

namespace {

// BT.601 full-range (JPEG) coefficients, U/V without the usual +0.5 offset.
constexpr double kYR = 0.299, kYG = 0.587, kYB = 0.114;
constexpr double kUR = -0.168736, kUG = -0.331264, kUB = 0.5;
constexpr double kVR = 0.5, kVG = -0.418688, kVB = -0.081312;

constexpr double kRV = 1.402;
constexpr double kGU = -0.344136, kGV = -0.714136;
constexpr double kBU = 1.772;

}  // namespace

std::pair<LumaPlane, ChromaPlanes> rgb_to_yuv(const ImageRGB& image) {
    LumaPlane luma{image.width, image.height, std::vector<double>(image.count()), LumaRole::Original};
    ChromaPlanes chroma{image.width, image.height, std::vector<double>(image.count()),
                        std::vector<double>(image.count())};
    for (int64_t i = 0; i < image.count(); ++i) {
        const double r = image.pixels[i * 3], g = image.pixels[i * 3 + 1], b = image.pixels[i * 3 + 2];
        luma.values[i] = kYR * r + kYG * g + kYB * b;
        chroma.u[i] = kUR * r + kUG * g + kUB * b;
        chroma.v[i] = kVR * r + kVG * g + kVB * b;
    }
    return {std::move(luma), std::move(chroma)};
}

ImageRGB yuv_to_rgb(const LumaPlane& luma, const ChromaPlanes& chroma, int64_t* out_of_gamut) {
    if (luma.width != chroma.width || luma.height != chroma.height)
        throw std::invalid_argument("yuv_to_rgb: luma and chroma dimensions differ");
    ImageRGB image{luma.width, luma.height, std::vector<double>(luma.pixels() * 3)};
    int64_t clipped = 0;
    for (int64_t i = 0; i < luma.pixels(); ++i) {
        const double y = luma.values[i], u = chroma.u[i], v = chroma.v[i];
        double rgb[3] = {y + kRV * v, y + kGU * u + kGV * v, y + kBU * u};
        bool out = false;
        for (double& c : rgb) {
            if (c < 0.0 || c > 1.0) {
                out = true;
                c = std::clamp(c, 0.0, 1.0);
            }
        }
        if (out) ++clipped;
        image.pixels[i * 3] = rgb[0];
        image.pixels[i * 3 + 1] = rgb[1];
        image.pixels[i * 3 + 2] = rgb[2];
    }
    if (out_of_gamut) *out_of_gamut = clipped;
    return image;
}

double tdp_luma(const LumaPlane& luma, const PanelModel& panel) {
    double acc = 0.0;
    for (double y : luma.values) acc += std::pow(y, panel.gamma);
    return acc;
}

double tdp_rgb(const ImageRGB& image, const PanelModel& panel) {
    double acc = 0.0;
    for (int64_t i = 0; i < image.count(); ++i) {
        const double* p = image.pixels.data() + i * 3;
        acc += panel.w0 + panel.wr * std::pow(p[0], panel.gamma) + panel.wg * std::pow(p[1], panel.gamma) +
               panel.wb * std::pow(p[2], panel.gamma);
    }
    return acc;
}

double dim_ratio(double rate, const PanelModel& panel) {
    if (!(rate >= 0.0 && rate < 1.0))
        throw std::invalid_argument("dim_ratio: rate must lie in [0, 1), got " + std::to_string(rate));
    return std::pow(1.0 - rate, 1.0 / panel.gamma);
}

LumaPlane apply_dim(const LumaPlane& luma, double ratio) {
    if (!(ratio > 0.0 && ratio <= 1.0))
        throw std::invalid_argument("apply_dim: ratio must lie in (0, 1], got " + std::to_string(ratio));
    LumaPlane dimmed = luma;
    dimmed.role = LumaRole::Dimmed;
    for (double& v : dimmed.values) v *= ratio;
    return dimmed;
}

double achieved_rate(const LumaPlane& input, const LumaPlane& output, const PanelModel& panel) {
    const double p_in = tdp_luma(input, panel);
    if (p_in <= 0.0) throw std::invalid_argument("achieved_rate: input plane has zero power");
    return 1.0 - tdp_luma(output, panel) / p_in;
}

DimSpec plan_dim(const LumaPlane& luma, double rate, const PanelModel& panel) {
    DimSpec spec;
    spec.rate = rate;
    spec.ratio = dim_ratio(rate, panel);
    spec.p_in = tdp_luma(luma, panel);
    LumaPlane dimmed = apply_dim(luma, spec.ratio);
    spec.p_dim = tdp_luma(dimmed, panel);
    spec.achieved = spec.p_in > 0.0 ? 1.0 - spec.p_dim / spec.p_in : 0.0;
    return spec;
}

double video_rate(const LumaPlane& luma, const VideoPolicy& policy) {
    double mean = 0.0;
    for (double v : luma.values) mean += v;
    mean /= static_cast<double>(luma.pixels());
    return std::clamp(std::pow(mean, policy.rho), policy.clamp_lo, policy.clamp_hi);
}

}  // namespace pcce::color
