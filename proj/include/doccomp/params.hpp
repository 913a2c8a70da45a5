// Copyright 2026 The doccomp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "doccomp/errors.hpp"
#include "doccomp/rng.hpp"
#include "doccomp/tensor.hpp"

namespace doccomp {

/// Owns every named parameter of one model instance, in creation order.
template <typename T>
class ParameterStore {
public:
    /// Default initializer: uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)), fan_in
    /// being the product of all extents except the last.
    static InitSpec default_init(const Shape& shape) {
        std::size_t fan_in = 1;
        for (std::size_t i = 0; i + 1 < shape.size(); ++i) fan_in *= shape[i];
        const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
        return InitSpec::uniform(-a, a);
    }

    Tensor<T> add(const std::string& name, const std::string& group, Shape shape, Rng& rng) {
        auto init = default_init(shape);
        return add(name, group, std::move(shape), init, rng);
    }

    Tensor<T> add(const std::string& name, const std::string& group, Shape shape, InitSpec init, Rng& rng) {
        if (index_.count(name)) throw ConfigError("numeric-kernel", "duplicate parameter name '" + name + "'");
        Tensor<T> t = Tensor<T>::zeros(shape, true);
        auto data = t.mutable_data();
        switch (init.kind) {
            case InitSpec::Kind::Uniform:
                for (auto& v : data) v = static_cast<T>(rng.uniform(init.lo, init.hi));
                break;
            case InitSpec::Kind::Zeros:
                break;
            case InitSpec::Kind::Ones:
                for (auto& v : data) v = T(1);
                break;
            case InitSpec::Kind::IdentityLike: {
                // View as [rows, cols] with cols = last extent and set the main diagonal.
                const std::size_t cols = shape.empty() ? 1 : shape.back();
                const std::size_t rows = data.size() / cols;
                for (std::size_t i = 0; i < std::min(rows, cols); ++i) data[i * cols + i] = T(1);
                break;
            }
        }
        index_[name] = params_.size();
        params_.push_back(Parameter<T>{name, group, init, t});
        return t;
    }

    std::size_t size() const { return params_.size(); }
    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    Parameter<T>& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ArgumentError("numeric-kernel", "no parameter named '" + name + "'");
        return params_[it->second];
    }
    const Parameter<T>& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ArgumentError("numeric-kernel", "no parameter named '" + name + "'");
        return params_[it->second];
    }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.tensor.size();
        return n;
    }

    void zero_grad() {
        for (auto& p : params_) p.tensor.zero_grad();
    }

    /// Enables gradients only for the listed groups; the rest become constants.
    void set_trainable_groups(const std::vector<std::string>& groups) {
        for (auto& p : params_) {
            bool on = std::find(groups.begin(), groups.end(), p.group) != groups.end();
            p.tensor.set_requires_grad(on);
        }
    }

    /// Copies values by name from a store of possibly different precision.
    template <typename U>
    void copy_values_from(const ParameterStore<U>& other) {
        for (auto& p : params_) {
            const auto& src = other.at(p.name);
            if (src.tensor.shape() != p.tensor.shape()) {
                throw DimensionError("numeric-kernel", "parameter '" + p.name + "' shape " +
                                                           shape_str(src.tensor.shape()) + " vs " +
                                                           shape_str(p.tensor.shape()));
            }
            auto dst = p.tensor.mutable_data();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(src.tensor[i]);
        }
    }

private:
    std::deque<Parameter<T>> params_;
    std::map<std::string, std::size_t> index_;
};

}  // namespace doccomp
