// Copyright 2026 The doccomp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "doccomp/config.hpp"
#include "doccomp/pipeline.hpp"
#include "doccomp/synthetic.hpp"

namespace doccomp {

/// Adam with bias correction and global-norm gradient clipping. Parameters
/// without a gradient buffer (frozen or unused) are left untouched.
template <typename T>
class Adam {
public:
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip = 1.0;  // 0 disables clipping

    void step(ParameterStore<T>& store, double lr) {
        ++t_;
        double norm2 = 0.0;
        for (auto& p : store)
            if (p.tensor.requires_grad() && p.tensor.has_grad())
                for (auto g : p.tensor.grad()) norm2 += double(g) * double(g);
        if (!std::isfinite(norm2)) throw NumericalError("toy-decoder", "non-finite gradient norm");
        const double scale = (clip > 0 && std::sqrt(norm2) > clip) ? clip / std::sqrt(norm2) : 1.0;
        const double c1 = 1.0 - std::pow(beta1, double(t_)), c2 = 1.0 - std::pow(beta2, double(t_));
        for (auto& p : store) {
            if (!p.tensor.requires_grad() || !p.tensor.has_grad()) continue;
            auto& st = state_[p.name];
            if (st.m.empty()) {
                st.m.assign(p.tensor.size(), 0.0);
                st.v.assign(p.tensor.size(), 0.0);
            }
            auto w = p.tensor.mutable_data();
            auto g = p.tensor.grad();
            for (std::size_t i = 0; i < w.size(); ++i) {
                const double gi = double(g[i]) * scale;
                st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * gi;
                st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * gi * gi;
                w[i] = T(double(w[i]) - lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + eps));
            }
        }
    }

private:
    struct Moments {
        std::vector<double> m, v;
    };
    std::map<std::string, Moments> state_;
    std::int64_t t_ = 0;
};

struct TrainStage {
    std::string name;
    std::vector<std::pair<TaskKind, double>> mix{{TaskKind::SingleParse, 1.0}};
    std::size_t steps = 100;
    double lr = 1e-3;
    std::size_t batch = 8;
    std::vector<std::string> train_groups{"encoder", "reducer", "compressor", "decoder"};
    int min_pages = 2;  // page range for multi-page kinds
    int max_pages = 10;
    std::size_t samples = 0;  // fixed corpus size; 0 draws a fresh sample each time
};

struct TrainPlan {
    std::vector<TrainStage> stages;

    /// Reads [stage.N] sections (N = 1, 2, ...). Keys: mix (kind:weight list),
    /// steps, lr, batch, train (group list), pages (A-B), samples.
    static TrainPlan from(const KeyValueFile& f) {
        TrainPlan plan;
        for (int n = 1;; ++n) {
            const std::string pre = "stage." + std::to_string(n) + ".";
            bool any = false;
            for (const auto& [k, v] : f.values()) any = any || k.rfind(pre, 0) == 0;
            if (!any) break;
            TrainStage s;
            s.name = f.str(pre + "name", "stage" + std::to_string(n));
            if (f.has(pre + "mix")) {
                s.mix.clear();
                for (const auto& item : KeyValueFile::split(f.str(pre + "mix", ""), ',')) {
                    const auto colon = item.find(':');
                    const double w = colon == std::string::npos ? 1.0 : std::stod(item.substr(colon + 1));
                    s.mix.emplace_back(parse_task_kind(KeyValueFile::trim(item.substr(0, colon))), w);
                }
            }
            s.steps = std::size_t(f.integer(pre + "steps", long(s.steps)));
            s.lr = f.real(pre + "lr", s.lr);
            s.batch = std::size_t(f.integer(pre + "batch", long(s.batch)));
            if (f.has(pre + "train")) s.train_groups = KeyValueFile::split(f.str(pre + "train", ""), ',');
            if (f.has(pre + "pages")) {
                const auto r = parse_page_range(f.str(pre + "pages", ""));
                s.min_pages = r.first;
                s.max_pages = r.second;
            }
            s.samples = std::size_t(f.integer(pre + "samples", long(s.samples)));
            if (s.steps == 0 || s.batch == 0 || !(s.lr > 0) || s.mix.empty()) {
                throw ConfigError("toy-decoder", pre + "steps/batch/lr/mix must be positive and nonempty");
            }
            plan.stages.push_back(std::move(s));
        }
        if (plan.stages.empty()) throw ConfigError("toy-decoder", "plan has no [stage.N] sections");
        return plan;
    }

    /// "P" or "A-B".
    static std::pair<int, int> parse_page_range(const std::string& s) {
        try {
            const auto dash = s.find('-');
            if (dash == std::string::npos) return {std::stoi(s), std::stoi(s)};
            return {std::stoi(s.substr(0, dash)), std::stoi(s.substr(dash + 1))};
        } catch (const std::exception&) {
            throw ConfigError("toy-decoder", "pages: expected P or A-B, got '" + s + "'");
        }
    }
};

/// Draws the sample with index i of a stage's task stream.
inline TaskSample stage_sample(const TrainStage& stage, std::uint64_t seed, std::size_t i, const TaskOptions& opt) {
    Rng rng(mix_seed(seed, 0x5a11 + i));
    double total = 0.0;
    for (const auto& [k, w] : stage.mix) total += w;
    double pick = rng.uniform() * total;
    TaskKind kind = stage.mix.back().first;
    for (const auto& [k, w] : stage.mix) {
        if (pick < w) {
            kind = k;
            break;
        }
        pick -= w;
    }
    const int pages = kind == TaskKind::SingleParse
                          ? 1
                          : stage.min_pages + int(rng.below(std::size_t(stage.max_pages - stage.min_pages + 1)));
    return gen_task(rng.next_u64(), kind, pages, opt);
}

struct StepRecord {
    std::size_t stage = 0;
    std::size_t step = 0;
    double loss = 0.0;
};

struct TrainLog {
    std::vector<StepRecord> steps;
};

/// Learning rate at step s of n: linear warmup over the first 5% then cosine
/// decay to 10% of the peak.
inline double scheduled_lr(double peak, std::size_t s, std::size_t n) {
    const double warm = std::max(1.0, 0.05 * double(n));
    if (double(s) < warm) return peak * (double(s) + 1.0) / warm;
    const double t = (double(s) - warm) / std::max(1.0, double(n) - warm);
    return peak * (0.1 + 0.9 * 0.5 * (1.0 + std::cos(3.141592653589793 * t)));
}

/// Seed of stage `index` within a run.
inline std::uint64_t stage_seed(std::uint64_t seed, std::size_t index) { return mix_seed(seed, 0x57a9e + index); }

/// The fixed training corpus of a stage; empty when the stage draws fresh samples.
inline std::vector<TaskSample> stage_corpus(const TrainStage& stage, std::uint64_t seed, std::size_t index,
                                            const TaskOptions& opt) {
    std::vector<TaskSample> corpus;
    const auto s = stage_seed(seed, index);
    for (std::size_t i = 0; i < stage.samples; ++i) corpus.push_back(stage_sample(stage, s, i, opt));
    return corpus;
}

/// Trains one stage. With a nonempty corpus, batches walk shuffled epochs of
/// it; otherwise every batch element is a fresh sample of the stage's mix.
/// Only the stage's parameter groups are trainable while it runs.
template <typename T>
void run_stage(Model<T>& model, const TrainStage& stage, std::size_t index, const std::vector<TaskSample>& corpus,
               std::uint64_t seed, const TaskOptions& opt, TrainLog& log,
               const std::function<void(const StepRecord&)>& on_step = nullptr) {
    auto& store = model.params();
    store.set_trainable_groups(stage.train_groups);
    Adam<T> adam;
    const std::uint64_t sseed = stage_seed(seed, index);
    std::vector<std::size_t> order(corpus.size());
    Rng shuffle_rng(mix_seed(sseed, 0x5f));
    std::size_t cursor = order.size();
    std::size_t drawn = 0;
    for (std::size_t step = 0; step < stage.steps; ++step) {
        store.zero_grad();
        double total = 0.0;
        for (std::size_t b = 0; b < stage.batch; ++b) {
            TaskSample fresh;
            const TaskSample* s;
            if (corpus.empty()) {
                fresh = stage_sample(stage, sseed, drawn++, opt);
                s = &fresh;
            } else {
                if (cursor == order.size()) {
                    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
                    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);
                    cursor = 0;
                }
                s = &corpus[order[cursor++]];
            }
            std::vector<RawImage> pages;
            for (const auto& p : s->pages) pages.push_back(p.image);
            auto loss = model.loss(pages, s->instruction, s->target);
            const double value = double(loss.item());
            if (!std::isfinite(value)) {
                store.set_trainable_groups({"encoder", "reducer", "compressor", "decoder"});
                throw NumericalError("toy-decoder", "non-finite loss at stage " + std::to_string(index + 1) + " step " +
                                                        std::to_string(step));
            }
            total += value;
            scale(loss, T(1) / T(stage.batch)).backward();
        }
        adam.step(store, scheduled_lr(stage.lr, step, stage.steps));
        StepRecord rec{index, step, total / double(stage.batch)};
        log.steps.push_back(rec);
        if (on_step) on_step(rec);
    }
    store.set_trainable_groups({"encoder", "reducer", "compressor", "decoder"});
}

/// Runs every stage in order. Each stage trains only its listed parameter
/// groups; the others are constants and are never written.
template <typename T>
TrainLog train(Model<T>& model, const TrainPlan& plan, std::uint64_t seed, const TaskOptions& opt,
               const std::function<void(const StepRecord&)>& on_step = nullptr) {
    TrainLog log;
    for (std::size_t si = 0; si < plan.stages.size(); ++si)
        run_stage(model, plan.stages[si], si, stage_corpus(plan.stages[si], seed, si, opt), seed, opt, log, on_step);
    return log;
}

/// Accuracy of greedy answers on a corpus, split by task kind and page count.
struct EvalMetrics {
    struct Cell {
        double sum = 0.0;
        std::size_t count = 0;
        double mean() const { return count ? sum / double(count) : 0.0; }
    };
    // key: "<kind>/<bucket>", bucket "1" or "2-10" (or "11-12")
    std::map<std::string, Cell> cells;
    Cell lookup_chance;  // mean of 1/n over lookup samples

    static std::string bucket(std::size_t pages) {
        if (pages <= 1) return "1";
        return pages <= 10 ? "2-10" : "11-12";
    }
    double get(TaskKind kind, const std::string& b) const {
        auto it = cells.find(to_string(kind) + "/" + b);
        return it == cells.end() ? 0.0 : it->second.mean();
    }
};

/// Position-wise character matches over the longer of prediction and target,
/// so both missing and surplus characters cost accuracy.
inline double char_accuracy(const std::string& pred, const std::string& target) {
    const std::size_t n = std::max(pred.size(), target.size());
    if (n == 0) return 1.0;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < std::min(pred.size(), target.size()); ++i) hit += pred[i] == target[i];
    return double(hit) / double(n);
}

template <typename T>
EvalMetrics evaluate(const Model<T>& model, const std::vector<TaskSample>& corpus,
                     std::vector<std::string>* predictions = nullptr) {
    EvalMetrics m;
    for (const auto& s : corpus) {
        std::vector<RawImage> pages;
        for (const auto& p : s.pages) pages.push_back(p.image);
        const std::string pred = model.answer(pages, s.instruction, 80);
        if (predictions) predictions->push_back(pred);
        const double score = s.kind == TaskKind::MultipageLookup ? double(pred == s.target) : char_accuracy(pred, s.target);
        auto& c = m.cells[to_string(s.kind) + "/" + EvalMetrics::bucket(s.pages.size())];
        c.sum += score;
        ++c.count;
        if (s.kind == TaskKind::MultipageLookup) {
            m.lookup_chance.sum += 1.0 / double(s.pages.size());
            ++m.lookup_chance.count;
        }
    }
    return m;
}

}  // namespace doccomp
