// Copyright 2026 The doccomp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "doccomp/ops.hpp"
#include "doccomp/params.hpp"
#include "doccomp/sequencer.hpp"
#include "doccomp/transformer.hpp"

namespace doccomp {

/// Small pre-norm causal transformer over assembled sequences.
///
/// Token slots are embedded from a learned table and visual slots take the
/// compressed image tokens as they are. Positions enter either as rotary
/// phases on queries and keys or as learned absolute embeddings added to
/// the inputs. Every position attends to itself and all earlier
/// positions, so image tokens are visible to everything after them.
template <typename T>
class ToyDecoder {
public:
    ToyDecoder(const DecoderConfig& cfg, ParameterStore<T>& store, Rng& rng) : cfg_(cfg) {
        cfg_.validate();
        const std::size_t d = cfg_.d_model, V = cfg_.vocab_size;
        embed_ = store.add("decoder.embed", "decoder", {V, d}, InitSpec::uniform(-0.1, 0.1), rng);
        if (!cfg_.rotary) {
            pos_ = store.add("decoder.pos", "decoder", {std::size_t(cfg_.max_seq), d}, InitSpec::uniform(-0.1, 0.1),
                             rng);
        }
        for (int i = 0; i < cfg_.depth; ++i) {
            blocks_.push_back(TransformerBlock<T>::create(store, "decoder.block" + std::to_string(i), "decoder", d,
                                                          std::size_t(cfg_.d_ff), std::size_t(cfg_.heads), rng));
            blocks_.back().rotary = cfg_.rotary;
        }
        lnf_gain_ = store.add("decoder.lnf.gain", "decoder", {d}, InitSpec::ones(), rng);
        lnf_bias_ = store.add("decoder.lnf.bias", "decoder", {d}, InitSpec::zeros(), rng);
        head_ = store.add("decoder.head.weight", "decoder", {d, V}, rng);
        head_bias_ = store.add("decoder.head.bias", "decoder", {V}, InitSpec::zeros(), rng);
    }

    const DecoderConfig& config() const { return cfg_; }

    /// Input rows for `seq` followed by `extra` token ids: [len, d].
    Tensor<T> embed_inputs(const AssembledSequence& seq, const std::vector<Tensor<T>>& visuals,
                           const std::vector<std::size_t>& extra) const {
        if (visuals.size() != seq.images) {
            throw ConsistencyError("toy-decoder", std::to_string(visuals.size()) + " visual blocks for " +
                                                      std::to_string(seq.images) + " images");
        }
        const std::size_t len = seq.total_len() + extra.size();
        if (len > std::size_t(cfg_.max_seq)) {
            throw ConfigError("toy-decoder", "max_seq: sequence of " + std::to_string(len) + " exceeds " +
                                                 std::to_string(cfg_.max_seq));
        }
        std::vector<Tensor<T>> parts;
        std::vector<std::size_t> ids;
        auto flush = [&] {
            if (!ids.empty()) parts.push_back(embedding(embed_, ids));
            ids.clear();
        };
        std::size_t i = 0;
        while (i < seq.slots.size()) {
            const auto& s = seq.slots[i];
            if (s.kind == SequenceSlot::Kind::Token) {
                ids.push_back(s.id);
                ++i;
                continue;
            }
            flush();
            const auto& v = visuals[s.image];
            std::size_t n = 0;
            while (i + n < seq.slots.size() && seq.slots[i + n].kind == SequenceSlot::Kind::Visual &&
                   seq.slots[i + n].image == s.image)
                ++n;
            if (v.rank() != 2 || v.extent(1) != std::size_t(cfg_.d_model) || v.extent(0) != n || s.index != 0) {
                throw DimensionError("toy-decoder", "visual block for image " + std::to_string(s.image + 1) + " is " +
                                                        shape_str(v.shape()) + ", expected [" + std::to_string(n) +
                                                        "x" + std::to_string(cfg_.d_model) + "]");
            }
            parts.push_back(v);
            i += n;
        }
        ids.insert(ids.end(), extra.begin(), extra.end());
        flush();
        auto x = parts.size() == 1 ? parts[0] : concat_rows(parts);
        return cfg_.rotary ? x : add(x, slice_rows(pos_, 0, len));
    }

    /// Hidden states after the final norm for every input row.
    Tensor<T> hidden(const Tensor<T>& x) const {
        auto sets = std::make_shared<KeySets>(KeySets::causal(x.extent(0)));
        Tensor<T> h = x;
        for (const auto& b : blocks_) h = b.forward(h, sets);
        return h;
    }

    /// Logits for every position: [len, V].
    Tensor<T> logits(const AssembledSequence& seq, const std::vector<Tensor<T>>& visuals,
                     const std::vector<std::size_t>& extra) const {
        auto h = hidden(embed_inputs(seq, visuals, extra));
        return project(h);
    }

    /// Mean cross-entropy of `target` given the sequence, teacher forced.
    Tensor<T> decode_loss(const AssembledSequence& seq, const std::vector<Tensor<T>>& visuals,
                          const std::vector<std::size_t>& target) const {
        if (target.empty()) return Tensor<T>::scalar(T(0));
        const std::size_t prefix = seq.total_len();
        std::vector<std::size_t> fed(target.begin(), target.end() - 1);
        auto h = hidden(embed_inputs(seq, visuals, fed));
        return cross_entropy(project(slice_rows(h, prefix - 1, target.size())), target);
    }

    /// Greedy decoding with a key/value cache; stops at <eos> or after max_new tokens.
    /// The returned ids exclude <eos>.
    std::vector<std::size_t> generate(const AssembledSequence& seq, const std::vector<Tensor<T>>& visuals,
                                      std::size_t max_new) const {
        Cache cache(blocks_.size());
        std::vector<T> logit;
        {
            NoGradGuard ng;
            auto x = embed_inputs(seq, visuals, {});
            const std::size_t d = cfg_.d_model;
            for (std::size_t r = 0; r < x.extent(0); ++r) logit = step(cache, x.data().data() + r * d);
        }
        std::vector<std::size_t> out;
        for (std::size_t t = 0; t < max_new; ++t) {
            std::size_t best = 0;
            for (std::size_t v = 1; v < logit.size(); ++v)
                if (logit[v] > logit[best]) best = v;
            if (best == vocab::kEos) break;
            out.push_back(best);
            const std::size_t p = cache.len;
            if (p >= std::size_t(cfg_.max_seq) || t + 1 == max_new) break;
            std::vector<T> row(embed_.data().begin() + best * cfg_.d_model,
                               embed_.data().begin() + (best + 1) * cfg_.d_model);
            if (!cfg_.rotary)
                for (std::size_t j = 0; j < row.size(); ++j) row[j] += pos_[p * cfg_.d_model + j];
            logit = step(cache, row.data());
        }
        return out;
    }

    /// Per-position logits computed incrementally through the cache, for
    /// consistency checks against the graph forward.
    std::vector<std::vector<T>> cached_logits(const Tensor<T>& inputs) const {
        Cache cache(blocks_.size());
        std::vector<std::vector<T>> out;
        for (std::size_t r = 0; r < inputs.extent(0); ++r)
            out.push_back(step(cache, inputs.data().data() + r * std::size_t(cfg_.d_model)));
        return out;
    }

private:
    struct Cache {
        explicit Cache(std::size_t layers) : k(layers), v(layers) {}
        std::vector<std::vector<T>> k, v;  // per layer, [len, d]
        std::size_t len = 0;
    };

    Tensor<T> project(const Tensor<T>& h) const {
        return add_bias(matmul(layer_norm(h, lnf_gain_, lnf_bias_), head_), head_bias_);
    }

    static void ln_row(const T* x, const Tensor<T>& g, const Tensor<T>& b, std::size_t d, T* out) {
        T mean = T(0);
        for (std::size_t j = 0; j < d; ++j) mean += x[j];
        mean /= T(d);
        T var = T(0);
        for (std::size_t j = 0; j < d; ++j) var += (x[j] - mean) * (x[j] - mean);
        var /= T(d);
        const T inv = T(1) / std::sqrt(var + T(1e-5));
        for (std::size_t j = 0; j < d; ++j) out[j] = (x[j] - mean) * inv * g[j] + b[j];
    }

    static void row_matmul(const T* x, const Tensor<T>& w, std::size_t k, std::size_t n, T* out) {
        std::fill(out, out + n, T(0));
        kernel::gemm_acc(1, k, n, x, w.data().data(), out);
    }

    /// Runs one position through every block and returns its logits.
    std::vector<T> step(Cache& cache, const T* in) const {
        const std::size_t d = cfg_.d_model, ff = cfg_.d_ff, heads = cfg_.heads, dh = d / heads;
        std::vector<T> x(in, in + d), h(d), q(d), k(d), v(d), att(d), o(d), m1(ff), m2(d);
        const std::size_t pos = cache.len;
        for (std::size_t l = 0; l < blocks_.size(); ++l) {
            const auto& b = blocks_[l];
            ln_row(x.data(), b.ln1_gain, b.ln1_bias, d, h.data());
            row_matmul(h.data(), b.wq, d, d, q.data());
            row_matmul(h.data(), b.wk, d, d, k.data());
            row_matmul(h.data(), b.wv, d, d, v.data());
            if (cfg_.rotary) {
                std::vector<T> tmp(dh);
                for (std::size_t hh = 0; hh < heads; ++hh) {
                    detail::rotate_pairs(q.data() + hh * dh, tmp.data(), dh, pos, T(1));
                    std::copy(tmp.begin(), tmp.end(), q.begin() + hh * dh);
                    detail::rotate_pairs(k.data() + hh * dh, tmp.data(), dh, pos, T(1));
                    std::copy(tmp.begin(), tmp.end(), k.begin() + hh * dh);
                }
            }
            auto& K = cache.k[l];
            auto& Vc = cache.v[l];
            K.insert(K.end(), k.begin(), k.end());
            Vc.insert(Vc.end(), v.begin(), v.end());
            const T scale = T(1) / std::sqrt(T(dh));
            std::vector<T> s(pos + 1);
            for (std::size_t hh = 0; hh < heads; ++hh) {
                T mx = -std::numeric_limits<T>::infinity();
                for (std::size_t t = 0; t <= pos; ++t) {
                    s[t] = kernel::dot(q.data() + hh * dh, K.data() + t * d + hh * dh, dh) * scale;
                    mx = std::max(mx, s[t]);
                }
                T z = T(0);
                for (std::size_t t = 0; t <= pos; ++t) z += (s[t] = std::exp(s[t] - mx));
                for (std::size_t j = 0; j < dh; ++j) att[hh * dh + j] = T(0);
                for (std::size_t t = 0; t <= pos; ++t) {
                    const T p = s[t] / z;
                    for (std::size_t j = 0; j < dh; ++j) att[hh * dh + j] += p * Vc[t * d + hh * dh + j];
                }
            }
            row_matmul(att.data(), b.wo, d, d, o.data());
            for (std::size_t j = 0; j < d; ++j) x[j] += o[j];
            ln_row(x.data(), b.ln2_gain, b.ln2_bias, d, h.data());
            row_matmul(h.data(), b.w1, d, ff, m1.data());
            constexpr T c = T(0.7978845608028654), a = T(0.044715);
            for (std::size_t j = 0; j < ff; ++j) {
                const T u = m1[j] + b.b1[j];
                m1[j] = T(0.5) * u * (T(1) + std::tanh(c * (u + a * u * u * u)));
            }
            row_matmul(m1.data(), b.w2, ff, d, m2.data());
            for (std::size_t j = 0; j < d; ++j) x[j] += m2[j] + b.b2[j];
        }
        cache.len = pos + 1;
        ln_row(x.data(), lnf_gain_, lnf_bias_, d, h.data());
        const std::size_t V = cfg_.vocab_size;
        std::vector<T> logit(V);
        row_matmul(h.data(), head_, d, V, logit.data());
        for (std::size_t j = 0; j < V; ++j) logit[j] += head_bias_[j];
        return logit;
    }

    DecoderConfig cfg_;
    Tensor<T> embed_, pos_, lnf_gain_, lnf_bias_, head_, head_bias_;
    std::vector<TransformerBlock<T>> blocks_;
};

}  // namespace doccomp
