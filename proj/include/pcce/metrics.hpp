// Copyright 2026 the pcce authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "pcce/color.hpp"

// Non-differentiable evaluation metrics: mean SSIM against a reference,
// EME block contrast, and normalized discrete entropy. These are scoring
// functions only; the differentiable similarity loss has its own
// implementation and is cross-checked against ssim() in the tests.

namespace pcce::metrics {

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01, k2 = 0.03;
    double dynamic_range = 1.0;

    double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
    double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
};

/// Mean SSIM over the valid region (Gaussian-weighted local moments, no
/// padding). Symmetric in (a, b); 1.0 iff a == b.
double ssim(const color::LumaPlane& a, const color::LumaPlane& b, const SsimParams& params = {});

/// Mean over complete 8-bit blocks of 20*log10((max+1)/(min+1)); partial edge
/// blocks are discarded. 0 for a constant image.
double eme(const color::LumaPlane& image, int block = 8);

/// Discrete entropy of the 8-bit histogram divided by 8, in [0, 1].
double nde(const color::LumaPlane& image);

struct MetricsRow {
    std::string image;
    double r_requested = 0.0;
    double r_measured = 0.0;
    double eme = 0.0;
    double nde = 0.0;
    double ssim = 0.0;
};

/// Per-image rows plus per-R means and an overall mean row.
struct MetricsReport {
    std::vector<MetricsRow> rows;        // as given
    std::vector<MetricsRow> per_rate;    // mean per distinct requested R
    MetricsRow overall;                  // mean over all rows

    void write_csv(std::ostream& os) const;
};

/// Aggregates rows into a report; rejects an empty input.
MetricsReport report(std::vector<MetricsRow> rows);

}  // namespace pcce::metrics
