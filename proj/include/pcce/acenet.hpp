// Copyright 2026 the pcce authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcce/tensor.hpp"

// The contrast-enhancement network: a compact context-aggregation CNN over a
// single dimmed luminance channel, conditioned on the requested power-saving
// rate R through a constant-valued plane concatenated at configurable layer
// inputs. Resolution is halved once by a 2x2 average pool after the head conv
// and restored with a sub-pixel (pixel shuffle) stage.

namespace pcce::ace {

/// Architecture hyperparameters. Layer-input indices for `injection`:
/// 0 = head conv, 1..d-4 = dilated convs, d-3 = sub-pixel conv,
/// d-2 = penultimate conv, d-1 = final 1x1 conv.
struct AceConfig {
    int depth = 7;
    int channels = 32;
    int kernel = 3;
    float lrelu_slope = 0.2f;
    std::vector<int> dilations = {4, 8, 16};  // one per intermediate conv (depth - 4 of them)
    std::vector<int> injection = {0, 1, 2, 3, 4};

    int intermediate_layers() const { return depth - 4; }
    bool injects(int layer_input) const;
    void validate() const;
};

/// Learned tensors in forward order; tensors are shared handles, so the
/// vectors returned by all() alias the stored parameters.
struct AceParams {
    AceConfig config;
    std::vector<nd::Tensor<float>> weights;  // one conv per layer
    std::vector<nd::Tensor<float>> biases;

    std::vector<nd::Tensor<float>> all() const;
    void zero_grad();
};

/// Canonical layer names: head, dil1..dilN, subpix, pen, out.
std::vector<std::string> layer_names(const AceConfig& config);

/// Closed-form parameter count for a config.
int64_t parameter_count(const AceConfig& config);

/// Conservative full-resolution receptive-field radius of the network.
int64_t receptive_field_radius(const AceConfig& config);

/// Smallest H/W the padded input is grown to so every reflect-same conv is
/// valid at pooled resolution.
int64_t min_padded_extent(const AceConfig& config);

/// Fan-in-scaled normal init (LReLU gain; unit gain for the linear output
/// conv), zero biases. Deterministic for a given seed.
AceParams build(const AceConfig& config, uint64_t seed);

/// Runs the network. Input must be 1x1xHxW (values in [0, 1]); output has the
/// same shape, clamped to [0, 1]. Odd or undersized inputs are reflection-
/// padded internally and cropped back.
nd::Tensor<float> forward(const AceParams& params, const nd::Tensor<float>& dimmed, double rate);

/// Binary weights file errors, distinguished per failure mode.
class WeightsError : public std::runtime_error {
public:
    enum class Kind { BadMagic, BadVersion, Truncated, ShapeMismatch, Io };
    WeightsError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// "ACEW" little-endian container: magic, format version, embedded config,
/// then a table of (name, rank, dims, f32 data). Round-trips bit-exactly.
void save_params(const AceParams& params, const std::string& path);
AceParams load_params(const std::string& path);

}  // namespace pcce::ace
