// Copyright 2026 the pcce authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "pcce/tensor.hpp"

namespace pcce::nd {

/// First/second moment buffers for a fixed parameter set, in parameter order.
template <typename T>
struct AdamState {
    struct Slot {
        std::vector<T> m, v;
    };
    std::vector<Slot> slots;
    int64_t t = 0;

    static AdamState init(std::span<const Tensor<T>> params) {
        AdamState st;
        st.slots.reserve(params.size());
        for (const auto& p : params)
            st.slots.push_back({std::vector<T>(p.numel(), T(0)), std::vector<T>(p.numel(), T(0))});
        return st;
    }
};

/// Standard Adam update with bias correction. Every parameter must carry a
/// populated gradient; zero gradients leave parameters unchanged.
template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state, T lr, T beta1, T beta2, T eps) {
    if (params.size() != state.slots.size())
        throw std::invalid_argument("adam_step: state was initialized for a different parameter set");
    for (const auto& p : params)
        if (!p.has_grad()) throw std::invalid_argument("adam_step: parameter is missing its gradient");

    state.t += 1;
    const T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta1), static_cast<double>(state.t)));
    const T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta2), static_cast<double>(state.t)));
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto& slot = state.slots[pi];
        if (slot.m.size() != static_cast<size_t>(params[pi].numel()))
            throw std::invalid_argument("adam_step: parameter shape changed since state init");
        std::span<T> w = params[pi].data();
        std::span<const T> g = params[pi].grad();
        for (size_t i = 0; i < w.size(); ++i) {
            slot.m[i] = beta1 * slot.m[i] + (T(1) - beta1) * g[i];
            slot.v[i] = beta2 * slot.v[i] + (T(1) - beta2) * g[i] * g[i];
            const T mhat = slot.m[i] / bc1;
            const T vhat = slot.v[i] / bc2;
            w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

}  // namespace pcce::nd
