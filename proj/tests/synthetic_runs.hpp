#pragma once

// Per-seed reproduction of the command-line pipeline on the synthetic
// benchmark, in memory. Seeds follow the same labels as the CLI phases, so
// a run here matches `fairkd --seed s` with the same config.

#include "fairkd/experiment.hpp"
#include "fairkd/training.hpp"

#include <cstdint>

namespace bench {

// Weights tuned for the synthetic benchmark, where group 1 is the
// disadvantaged group: distill T1 on its own group, lightly pull group 0
// toward T1, and keep T0 on group 1 as a counterweight.
inline const fairkd::LossWeights kSyntheticWeights{1.0, 0.0, 0.99, 0.2, 0.5, 5.0};

inline fairkd::ExperimentConfig default_config(std::uint64_t seed, double bias_strength = 0.8) {
    fairkd::ExperimentConfig cfg;
    cfg.seed = seed;
    cfg.synthetic = fairkd::SynthConfig{};
    cfg.synthetic->bias_strength = bias_strength;
    return cfg;
}

struct Split {
    fairkd::Dataset train;
    fairkd::Dataset test;
};

inline Split make_split(const fairkd::ExperimentConfig& cfg) {
    auto synth = *cfg.synthetic;
    synth.seed = fairkd::phase_seed(cfg, "data");
    auto [train, test] = fairkd::stratified_split(fairkd::generate_synthetic(synth), cfg.test_fraction,
                                                  fairkd::phase_seed(cfg, "split"));
    return {std::move(train), std::move(test)};
}

inline fairkd::TrainConfig phase_config(const fairkd::ExperimentConfig& cfg, const char* phase) {
    auto tc = cfg.train;
    tc.seed = fairkd::phase_seed(cfg, phase);
    return tc;
}

struct Teachers {
    fairkd::DenseNet base;
    fairkd::DenseNet t0;
    fairkd::DenseNet t1;
};

inline Teachers make_teachers(const fairkd::ExperimentConfig& cfg, const Split& s) {
    const auto base_cfg = phase_config(cfg, "base");
    auto base = fairkd::train_base(s.train, base_cfg, fairkd::teacher_dims(base_cfg, s.train)).net;
    auto t0 = fairkd::finetune_teacher(base, s.train, 0, phase_config(cfg, "teacher0")).net;
    auto t1 = fairkd::finetune_teacher(base, s.train, 1, phase_config(cfg, "teacher1")).net;
    return {std::move(base), std::move(t0), std::move(t1)};
}

inline fairkd::EvalSnapshot student_snapshot(const fairkd::ExperimentConfig& cfg, const Split& s,
                                             const Teachers& t, const fairkd::LossWeights& w,
                                             fairkd::DenseNet* net_out = nullptr) {
    auto tc = phase_config(cfg, "student");
    tc.weights = w;
    auto r = fairkd::train_student(s.train, t.t0, t.t1, tc);
    auto snap = fairkd::evaluate_snapshot(r.net, s.test);
    if (net_out != nullptr) {
        *net_out = std::move(r.net);
    }
    return snap;
}

// Single distillation term at `weight`, lambda = 1.
inline fairkd::LossWeights single_term(fairkd::LossTerm term, double weight, double tau = 5.0) {
    auto w = fairkd::LossWeights::cross_entropy_only(tau);
    switch (term) {
        case fairkd::LossTerm::bias0: w.alpha = weight; break;
        case fairkd::LossTerm::bias1: w.beta = weight; break;
        case fairkd::LossTerm::debias0: w.gamma = weight; break;
        case fairkd::LossTerm::debias1: w.delta = weight; break;
    }
    return w;
}

}  // namespace bench
