// Copyright 2026 The doccomp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>

#include "doccomp/ops.hpp"
#include "doccomp/params.hpp"

namespace doccomp {

/// Pre-norm transformer block: x + Attn(LN(x)), then x + MLP(LN(x)).
/// Attention visibility comes from the caller's key sets (full or causal).
/// With `rotary` set, queries and keys are rotated by their row position.
template <typename T>
struct TransformerBlock {
    std::size_t heads = 1;
    bool rotary = false;
    Tensor<T> ln1_gain, ln1_bias, wq, wk, wv, wo;
    Tensor<T> ln2_gain, ln2_bias, w1, b1, w2, b2;

    static TransformerBlock create(ParameterStore<T>& store, const std::string& prefix, const std::string& group,
                                   std::size_t d, std::size_t d_ff, std::size_t heads, Rng& rng) {
        TransformerBlock b;
        b.heads = heads;
        b.ln1_gain = store.add(prefix + ".ln1.gain", group, {d}, InitSpec::ones(), rng);
        b.ln1_bias = store.add(prefix + ".ln1.bias", group, {d}, InitSpec::zeros(), rng);
        b.wq = store.add(prefix + ".attn.wq", group, {d, d}, rng);
        b.wk = store.add(prefix + ".attn.wk", group, {d, d}, rng);
        b.wv = store.add(prefix + ".attn.wv", group, {d, d}, rng);
        b.wo = store.add(prefix + ".attn.wo", group, {d, d}, rng);
        b.ln2_gain = store.add(prefix + ".ln2.gain", group, {d}, InitSpec::ones(), rng);
        b.ln2_bias = store.add(prefix + ".ln2.bias", group, {d}, InitSpec::zeros(), rng);
        b.w1 = store.add(prefix + ".mlp.w1", group, {d, d_ff}, rng);
        b.b1 = store.add(prefix + ".mlp.b1", group, {d_ff}, InitSpec::zeros(), rng);
        b.w2 = store.add(prefix + ".mlp.w2", group, {d_ff, d}, rng);
        b.b2 = store.add(prefix + ".mlp.b2", group, {d}, InitSpec::zeros(), rng);
        return b;
    }

    Tensor<T> forward(const Tensor<T>& x, const std::shared_ptr<const KeySets>& sets) const {
        auto h = layer_norm(x, ln1_gain, ln1_bias);
        auto q = matmul(h, wq), k = matmul(h, wk);
        if (rotary) {
            q = rotary_rows(q);
            k = rotary_rows(k);
        }
        auto att = attention(q, k, matmul(h, wv), sets, heads);
        auto y = add(x, matmul(att, wo));
        auto h2 = layer_norm(y, ln2_gain, ln2_bias);
        auto m = add_bias(matmul(gelu(add_bias(matmul(h2, w1), b1)), w2), b2);
        return add(y, m);
    }

private:
    Tensor<T> rotary_rows(const Tensor<T>& x) const { return doccomp::rotary(x, heads); }
};

}  // namespace doccomp
