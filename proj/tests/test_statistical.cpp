#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "synthetic_runs.hpp"

#include <cstdio>
#include <map>

using namespace fairkd;

// Train-and-measure checks on the synthetic benchmark over five seeds.

namespace {

EvalSnapshot baseline(const ExperimentConfig& cfg, const bench::Split& s) {
    const auto tc = bench::phase_config(cfg, "student");
    return evaluate_snapshot(train_base(s.train, tc, student_dims(tc, s.train)).net, s.test);
}

}  // namespace

TEST_CASE("baseline group gap grows with bias strength") {
    std::map<double, double> mean_gap;
    std::map<double, double> mean_abs_gap;
    for (const double bias : {0.0, 0.4, 0.8}) {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto cfg = bench::default_config(seed, bias);
            const auto snap = baseline(cfg, bench::make_split(cfg));
            const double gap = snap.f1_group0 - snap.f1_group1;
            mean_gap[bias] += gap / 5.0;
            mean_abs_gap[bias] += std::abs(gap) / 5.0;
        }
        std::printf("bias %.1f: mean F1(0)-F1(1) %.4f, mean |gap| %.4f\n", bias, mean_gap[bias],
                    mean_abs_gap[bias]);
    }
    CHECK(mean_abs_gap[0.0] < 0.05);
    CHECK(mean_gap[0.8] > 0.05);
    CHECK(mean_gap[0.0] <= mean_gap[0.4]);
    CHECK(mean_gap[0.4] <= mean_gap[0.8]);
}

TEST_CASE("teachers, ablation and distillation on the biased benchmark") {
    double base_own0 = 0, base_own1 = 0, t0_own = 0, t1_own = 0;
    int gap_reduced = 0;
    int bias0_majority = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto cfg = bench::default_config(seed);
        const auto split = bench::make_split(cfg);
        const auto teachers = bench::make_teachers(cfg, split);
        const auto b = evaluate_snapshot(teachers.base, split.test);
        base_own0 += b.f1_group0 / 5.0;
        base_own1 += b.f1_group1 / 5.0;
        t0_own += evaluate_snapshot(teachers.t0, split.test).f1_group0 / 5.0;
        t1_own += evaluate_snapshot(teachers.t1, split.test).f1_group1 / 5.0;

        const auto ce = bench::student_snapshot(cfg, split, teachers, LossWeights::cross_entropy_only(5.0));
        const auto tuned = bench::student_snapshot(cfg, split, teachers, bench::kSyntheticWeights);
        gap_reduced += std::abs(tuned.f1_group0 - tuned.f1_group1) < std::abs(ce.f1_group0 - ce.f1_group1);

        int raised = 0;
        for (const double w : {0.6, 0.8, 1.0}) {
            const auto snap = bench::student_snapshot(cfg, split, teachers, bench::single_term(LossTerm::bias0, w));
            raised += snap.f1_group0 >= ce.f1_group0;
        }
        bias0_majority += raised >= 2;
        std::printf("seed %llu: CE gap %.4f, tuned gap %.4f, bias0 rows raising F(0): %d/3\n",
                    static_cast<unsigned long long>(seed), ce.f1_group0 - ce.f1_group1,
                    tuned.f1_group0 - tuned.f1_group1, raised);
    }
    std::printf("own-group F1: base (%.4f, %.4f), T0 %.4f, T1 %.4f\n", base_own0, base_own1, t0_own, t1_own);
    CHECK(t0_own >= base_own0);
    CHECK(t1_own >= base_own1);
    CHECK(gap_reduced >= 3);
    CHECK(bias0_majority >= 3);
}
