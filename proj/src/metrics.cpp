// Copyright 2026 the pcce authors
// SPDX-License-Identifier: Apache-2.0

#include "pcce/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <stdexcept>

namespace pcce::metrics {

namespace {

std::vector<double> gaussian_window(int size, double sigma) {
    std::vector<double> w(size);
    const double c = (size - 1) / 2.0;
    double total = 0.0;
    for (int i = 0; i < size; ++i) {
        w[i] = std::exp(-((i - c) * (i - c)) / (2.0 * sigma * sigma));
        total += w[i];
    }
    for (double& v : w) v /= total;
    return w;
}

// separable valid-region filter: out is (H-win+1) x (W-win+1)
void filter_valid(const std::vector<double>& src, int64_t h, int64_t w, const std::vector<double>& win,
                  std::vector<double>& tmp, std::vector<double>& out) {
    const int64_t k = static_cast<int64_t>(win.size());
    const int64_t ow = w - k + 1, oh = h - k + 1;
    tmp.assign(h * ow, 0.0);
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int64_t i = 0; i < k; ++i) acc += win[i] * src[y * w + x + i];
            tmp[y * ow + x] = acc;
        }
    out.assign(oh * ow, 0.0);
    for (int64_t y = 0; y < oh; ++y)
        for (int64_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int64_t i = 0; i < k; ++i) acc += win[i] * tmp[(y + i) * ow + x];
            out[y * ow + x] = acc;
        }
}

int quantize8(double v) {
    return static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

double ssim(const color::LumaPlane& a, const color::LumaPlane& b, const SsimParams& params) {
    if (a.width != b.width || a.height != b.height)
        throw std::invalid_argument("ssim: plane dimensions differ");
    if (a.width < params.window || a.height < params.window)
        throw std::invalid_argument("ssim: plane smaller than the " + std::to_string(params.window) + "x" +
                                    std::to_string(params.window) + " window");

    const int64_t h = a.height, w = a.width;
    const std::vector<double> win = gaussian_window(params.window, params.sigma);

    std::vector<double> aa(a.pixels()), bb(a.pixels()), ab(a.pixels());
    for (int64_t i = 0; i < a.pixels(); ++i) {
        aa[i] = a.values[i] * a.values[i];
        bb[i] = b.values[i] * b.values[i];
        ab[i] = a.values[i] * b.values[i];
    }

    std::vector<double> tmp, mu1, mu2, m11, m22, m12;
    filter_valid(a.values, h, w, win, tmp, mu1);
    filter_valid(b.values, h, w, win, tmp, mu2);
    filter_valid(aa, h, w, win, tmp, m11);
    filter_valid(bb, h, w, win, tmp, m22);
    filter_valid(ab, h, w, win, tmp, m12);

    const double c1 = params.c1(), c2 = params.c2();
    double acc = 0.0;
    for (size_t i = 0; i < mu1.size(); ++i) {
        const double s11 = m11[i] - mu1[i] * mu1[i];
        const double s22 = m22[i] - mu2[i] * mu2[i];
        const double s12 = m12[i] - mu1[i] * mu2[i];
        acc += ((2.0 * mu1[i] * mu2[i] + c1) * (2.0 * s12 + c2)) /
               ((mu1[i] * mu1[i] + mu2[i] * mu2[i] + c1) * (s11 + s22 + c2));
    }
    return acc / static_cast<double>(mu1.size());
}

double eme(const color::LumaPlane& image, int block) {
    if (block < 1) throw std::invalid_argument("eme: block size must be positive");
    if (image.width < block || image.height < block)
        throw std::invalid_argument("eme: image smaller than one " + std::to_string(block) + "x" +
                                    std::to_string(block) + " block");
    const int64_t by = image.height / block, bx = image.width / block;
    double acc = 0.0;
    for (int64_t yb = 0; yb < by; ++yb)
        for (int64_t xb = 0; xb < bx; ++xb) {
            int lo = 255, hi = 0;
            for (int64_t y = yb * block; y < (yb + 1) * block; ++y)
                for (int64_t x = xb * block; x < (xb + 1) * block; ++x) {
                    const int q = quantize8(image.at(y, x));
                    lo = std::min(lo, q);
                    hi = std::max(hi, q);
                }
            acc += 20.0 * std::log10(static_cast<double>(hi + 1) / static_cast<double>(lo + 1));
        }
    return acc / static_cast<double>(by * bx);
}

double nde(const color::LumaPlane& image) {
    if (image.pixels() == 0) throw std::invalid_argument("nde: empty plane");
    int64_t hist[256] = {};
    for (double v : image.values) hist[quantize8(v)]++;
    const double n = static_cast<double>(image.pixels());
    double de = 0.0;
    for (int64_t c : hist)
        if (c > 0) {
            const double p = c / n;
            de -= p * std::log2(p);
        }
    return de / 8.0;
}

MetricsReport report(std::vector<MetricsRow> rows) {
    if (rows.empty()) throw std::invalid_argument("report: no rows");
    MetricsReport rep;
    rep.rows = std::move(rows);

    auto mean_of = [](const std::vector<const MetricsRow*>& group, const std::string& label) {
        MetricsRow m;
        m.image = label;
        for (const MetricsRow* r : group) {
            m.r_requested += r->r_requested;
            m.r_measured += r->r_measured;
            m.eme += r->eme;
            m.nde += r->nde;
            m.ssim += r->ssim;
        }
        const double n = static_cast<double>(group.size());
        m.r_requested /= n;
        m.r_measured /= n;
        m.eme /= n;
        m.nde /= n;
        m.ssim /= n;
        return m;
    };

    std::map<double, std::vector<const MetricsRow*>> by_rate;
    std::vector<const MetricsRow*> all;
    for (const MetricsRow& r : rep.rows) {
        by_rate[r.r_requested].push_back(&r);
        all.push_back(&r);
    }
    for (const auto& [rate, group] : by_rate) {
        char label[32];
        std::snprintf(label, sizeof(label), "avg(R=%.2f)", rate);
        rep.per_rate.push_back(mean_of(group, label));
    }
    rep.overall = mean_of(all, "avg");
    return rep;
}

void MetricsReport::write_csv(std::ostream& os) const {
    os << "image,R_requested,R_measured,EME,NDE,SSIM\n";
    auto emit = [&os](const MetricsRow& r) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.image.c_str(), r.r_requested,
                      r.r_measured, r.eme, r.nde, r.ssim);
        os << buf;
    };
    for (const MetricsRow& r : rows) emit(r);
    for (const MetricsRow& r : per_rate) emit(r);
    emit(overall);
}

}  // namespace pcce::metrics
