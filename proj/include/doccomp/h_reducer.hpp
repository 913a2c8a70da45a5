// Copyright 2026 The doccomp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "doccomp/encoder.hpp"
#include "doccomp/ops.hpp"
#include "doccomp/params.hpp"

namespace doccomp {

/// Horizontal 4x token reducer: a 1x4 stride-4 convolution mixing all d
/// channels, then a fully connected d -> d_out projection. Both carry a bias
/// and there is no activation, so the map is affine.
template <typename T>
class HReducer {
public:
    static constexpr std::size_t kWindow = 4;

    HReducer(std::size_t d_in, std::size_t d_out, ParameterStore<T>& store, Rng& rng) : d_in_(d_in), d_out_(d_out) {
        if (d_in == 0 || d_out == 0) throw ConfigError("h-reducer", "d_in and d_out must be positive");
        conv_w_ = store.add("reducer.conv.weight", "reducer", {1, kWindow, d_in, d_in}, rng);
        conv_b_ = store.add("reducer.conv.bias", "reducer", {d_in}, InitSpec::zeros(), rng);
        fc_w_ = store.add("reducer.fc.weight", "reducer", {d_in, d_out}, rng);
        fc_b_ = store.add("reducer.fc.bias", "reducer", {d_out}, InitSpec::zeros(), rng);
    }

    std::size_t d_in() const { return d_in_; }
    std::size_t d_out() const { return d_out_; }

    /// [h, w, d_in] -> [h, w/4, d_out].
    FeatureMap<T> reduce(const FeatureMap<T>& in) const {
        if (in.d != d_in_) {
            throw DimensionError("h-reducer", "feature dim " + std::to_string(in.d) + ", expected " +
                                                  std::to_string(d_in_));
        }
        if (in.w % kWindow != 0) {
            throw ConfigError("h-reducer", "map width " + std::to_string(in.w) + " is not divisible by 4");
        }
        const std::size_t wq = in.w / kWindow;
        auto c = conv2d(in.values, conv_w_, 1, kWindow);
        auto flat = add_bias(reshape(c, {in.h * wq, d_in_}), conv_b_);
        auto y = add_bias(matmul(flat, fc_w_), fc_b_);
        return FeatureMap<T>{in.h, wq, d_out_, reshape(y, {in.h, wq, d_out_}), in.provenance};
    }

private:
    std::size_t d_in_, d_out_;
    Tensor<T> conv_w_, conv_b_, fc_w_, fc_b_;
};

}  // namespace doccomp
