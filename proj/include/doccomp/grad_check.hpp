// Copyright 2026 The doccomp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "doccomp/errors.hpp"
#include "doccomp/rng.hpp"
#include "doccomp/tensor.hpp"

namespace doccomp {

struct GradCheckOptions {
    double eps = 1e-6;
    double tol = 1e-5;
    // Relative error uses max(|analytic|, |numeric|, denom_floor) as the
    // denominator so coordinates with vanishing gradient compare absolutely.
    double denom_floor = 1e-4;
    // 0 checks every coordinate; otherwise at most this many per tensor.
    std::size_t max_coords_per_tensor = 0;
    std::uint64_t seed = 0;
    // Central stencil width: 2 uses f(x +- eps), error O(eps^2); 4 adds
    // f(x +- 2 eps), error O(eps^4), for graphs with large curvature.
    int stencil = 2;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_location;
    std::size_t coords_checked = 0;
    bool passed = false;
};

struct NamedTensor {
    std::string name;
    Tensor<double> tensor;
};

/// Compares reverse-mode gradients of a scalar function against central
/// differences. `f` must rebuild its graph from the current tensor values on
/// every call. Only available in 64-bit precision.
inline GradCheckReport grad_check(const std::function<Tensor<double>()>& f, std::vector<NamedTensor> params,
                                  const GradCheckOptions& opt = {}) {
    if (opt.stencil != 2 && opt.stencil != 4) throw ArgumentError("grad-check", "stencil must be 2 or 4");
    if (!(opt.eps > 0)) throw ArgumentError("grad-check", "eps must be positive");
    for (auto& p : params) {
        p.tensor.zero_grad();
        p.tensor.set_requires_grad(true);
    }
    Tensor<double> loss = f();
    if (!std::isfinite(loss.item())) throw NumericalError("grad-check", "non-finite loss at the base point");
    loss.backward();

    GradCheckReport rep;
    Rng rng(opt.seed);
    for (auto& p : params) {
        std::vector<double> analytic(p.tensor.size(), 0.0);
        if (p.tensor.has_grad()) std::copy(p.tensor.grad().begin(), p.tensor.grad().end(), analytic.begin());
        for (std::size_t i = 0; i < analytic.size(); ++i) {
            if (!std::isfinite(analytic[i])) {
                throw NumericalError("grad-check", "non-finite analytic gradient at " + p.name + "[" +
                                                       std::to_string(i) + "]");
            }
        }
        std::vector<std::size_t> coords(p.tensor.size());
        for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
        if (opt.max_coords_per_tensor && coords.size() > opt.max_coords_per_tensor) {
            for (std::size_t i = 0; i < opt.max_coords_per_tensor; ++i)
                std::swap(coords[i], coords[i + rng.below(coords.size() - i)]);
            coords.resize(opt.max_coords_per_tensor);
        }
        auto data = p.tensor.mutable_data();
        for (auto i : coords) {
            const double orig = data[i];
            auto at = [&](double x) {
                NoGradGuard ng;
                data[i] = x;
                const double v = f().item();
                data[i] = orig;
                if (!std::isfinite(v)) {
                    throw NumericalError("grad-check", "non-finite loss when perturbing " + p.name + "[" +
                                                           std::to_string(i) + "]");
                }
                return v;
            };
            const double h = opt.eps;
            double numeric = (at(orig + h) - at(orig - h)) / (2.0 * h);
            if (opt.stencil == 4) numeric = (4.0 * numeric - (at(orig + 2 * h) - at(orig - 2 * h)) / (4.0 * h)) / 3.0;
            const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), opt.denom_floor});
            const double err = std::abs(analytic[i] - numeric) / denom;
            ++rep.coords_checked;
            if (err > rep.max_rel_error) {
                rep.max_rel_error = err;
                rep.worst_location = p.name + "[" + std::to_string(i) + "]";
            }
        }
    }
    rep.passed = rep.max_rel_error <= opt.tol;
    return rep;
}

}  // namespace doccomp
