// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include "fairkd/experiment.hpp"
#include "fairkd/fairness.hpp"
#include "fairkd/losses.hpp"
#include "fairkd/nn.hpp"
#include "fairkd/rng.hpp"
#include "fairkd/training.hpp"
#include "metric_oracles.hpp"
#include "oracles.hpp"
#include "synthetic_runs.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

using namespace fairkd;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
    std::printf("criterion %d: %s  %s\n", criterion, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

// ---- 1. gradients ---------------------------------------------------------

struct Batch {
    std::vector<std::vector<double>> x;
    std::vector<std::size_t> y;
    std::vector<int> k;
    Matrix t0;
    Matrix t1;
};

// Loss recomputed from scratch in extended precision per sample.
double oracle_loss(const DenseNet& net, const Batch& b, const LossWeights& w) {
    const std::size_t n = b.x.size();
    double ce = 0.0;
    std::array<double, 4> kl{};  // bias0, bias1, debias0, debias1
    std::array<std::size_t, 2> count{};
    for (std::size_t i = 0; i < n; ++i) {
        const auto z = oracle::forward(net, b.x[i]);
        ce += oracle::cross_entropy_ld(z, b.y[i]);
        const std::vector<double> z0(b.t0.row(i).begin(), b.t0.row(i).end());
        const std::vector<double> z1(b.t1.row(i).begin(), b.t1.row(i).end());
        if (b.k[i] == 0) {
            kl[0] += oracle::kl_distill_ld(z0, z, w.tau);
            kl[2] += oracle::kl_distill_ld(z1, z, w.tau);
            ++count[0];
        } else {
            kl[1] += oracle::kl_distill_ld(z1, z, w.tau);
            kl[3] += oracle::kl_distill_ld(z0, z, w.tau);
            ++count[1];
        }
    }
    const auto mean = [](double s, std::size_t m) { return m == 0 ? 0.0 : s / double(m); };
    return w.lambda * ce / double(n) + w.alpha * mean(kl[0], count[0]) + w.beta * mean(kl[1], count[1]) +
           w.gamma * mean(kl[2], count[0]) + w.delta * mean(kl[3], count[1]);
}

GradientBundle analytic_gradient(const DenseNet& net, const Batch& b, const LossWeights& w) {
    const std::size_t n = b.x.size();
    Matrix logits(n, net.output_dim());
    std::vector<ForwardTrace> traces(n);
    for (std::size_t i = 0; i < n; ++i) {
        forward_trace(net, b.x[i], traces[i]);
        std::copy(traces[i].logits().begin(), traces[i].logits().end(), logits.row(i).begin());
    }
    const auto res = batch_total_loss(logits, &b.t0, &b.t1, b.y, b.k, w);
    auto grads = zero_gradients(net);
    std::vector<double> scratch;
    for (std::size_t i = 0; i < n; ++i) {
        accumulate_backward(net, traces[i], res.logit_grads.row(i), grads, scratch);
    }
    return grads;
}

void criterion_gradients() {
    const auto t0 = Clock::now();
    Rng rng(1001);
    const int draws = 24;
    double worst = 0.0;
    int checks = 0;
    for (int d = 0; d < draws; ++d) {
        const std::size_t in = 2 + rng.below(4);
        const std::size_t classes = 2 + rng.below(4);
        std::vector<std::size_t> dims{in};
        for (std::size_t h = 0, layers = 1 + rng.below(2); h < layers; ++h) dims.push_back(3 + rng.below(5));
        dims.push_back(classes);
        const auto net = init_network(dims, 5000 + static_cast<std::uint64_t>(d));

        Batch b;
        const std::size_t n = 4 + rng.below(6);
        b.t0 = Matrix(n, classes);
        b.t1 = Matrix(n, classes);
        for (std::size_t i = 0; i < n; ++i) {
            b.x.push_back(oracle::random_vector(rng, in));
            b.y.push_back(rng.below(classes));
            b.k.push_back(i < 2 ? int(i) : int(rng.below(2)));
            for (std::size_t c = 0; c < classes; ++c) {
                b.t0.row(i)[c] = 2.0 * rng.normal();
                b.t1.row(i)[c] = 2.0 * rng.normal();
            }
        }
        const double tau = rng.uniform(1.0, 6.0);
        LossWeights random_w{rng.uniform(0.1, 1.0), rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0),
                             rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0), tau};
        std::vector<LossWeights> variants{
            LossWeights::cross_entropy_only(tau),
            {0.0, 1.0, 0.0, 0.0, 0.0, tau},
            {0.0, 0.0, 1.0, 0.0, 0.0, tau},
            {0.0, 0.0, 0.0, 1.0, 0.0, tau},
            {0.0, 0.0, 0.0, 0.0, 1.0, tau},
            random_w,
        };
        for (const auto& w : variants) {
            const auto analytic = analytic_gradient(net, b, w);
            const auto numeric = oracle::finite_difference(
                net, [&](const DenseNet& probe) { return oracle_loss(probe, b, w); }, 1e-5);
            worst = std::max(worst, oracle::max_relative_error(analytic, numeric));
            ++checks;
        }
    }
    const double elapsed = seconds_since(t0);
    report(1, worst < 1e-4 && elapsed < 60.0,
           std::to_string(draws) + " draws, " + std::to_string(checks) +
               " gradients (CE, 4 KL terms, total); max rel err " + fmt("%.3e", worst) + " (< 1e-4); " +
               fmt("%.1f s", elapsed));
}

// ---- 2. metric oracles ----------------------------------------------------

void criterion_metrics() {
    const auto t0 = Clock::now();
    Rng rng(2002);
    bool counts_exact = true;
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t C = 2 + rng.below(9);
        const std::size_t n = 2 + rng.below(999);
        const auto s = oracle::random_samples(rng, n, C, rng.uniform());
        const auto conf = confusion_from_predictions(s.pred, s.truth, s.groups, C);
        for (std::size_t c = 0; c < C; ++c) {
            for (int k = 0; k < 2; ++k) {
                counts_exact = counts_exact && conf.at(c, k) == oracle::brute_cell(s, c, k);
            }
        }
        const auto r = evaluate_fairness(s.pred, s.truth, s.groups, C);
        const auto m = oracle::brute_metrics(s, C);
        for (const auto& [a, b] : {std::pair{r.eopp0, m.eopp0}, std::pair{r.eopp1, m.eopp1},
                                   std::pair{r.eodd, m.eodd}}) {
            worst = std::max(worst, std::abs(a - b));
        }
        for (std::size_t k = 0; k < 2; ++k) {
            worst = std::max({worst, std::abs(r.accuracy.group[k].precision - m.rows[k].precision),
                              std::abs(r.accuracy.group[k].recall - m.rows[k].recall),
                              std::abs(r.accuracy.group[k].f1 - m.rows[k].f1)});
        }
    }
    const double elapsed = seconds_since(t0);
    report(2, counts_exact && worst <= 1e-12 && elapsed < 30.0,
           std::string("100 prediction sets; counts ") + (counts_exact ? "exact" : "MISMATCH") +
               "; max metric diff " + fmt("%.2e", worst) + " (<= 1e-12); " + fmt("%.1f s", elapsed));
}

// ---- 4-6 (and 3). statistical runs on the default synthetic benchmark -----

struct SeedResult {
    EvalSnapshot baseline;
    std::array<EvalSnapshot, 4> single;  // bias0, bias1, debias0, debias1 at weight 1.0
    EvalSnapshot tuned;
    EvalSnapshot t0;
    EvalSnapshot t1;
};

void criteria_statistical() {
    const auto t0 = Clock::now();
    std::vector<SeedResult> results;
    bool reduction_exact = false;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto cfg = bench::default_config(seed);
        const auto split = bench::make_split(cfg);
        const auto teachers = bench::make_teachers(cfg, split);
        SeedResult r;
        DenseNet baseline_net;
        r.baseline = bench::student_snapshot(cfg, split, teachers,
                                             LossWeights::cross_entropy_only(cfg.train.weights.tau),
                                             &baseline_net);
        if (seed == 0) {
            const auto tc = bench::phase_config(cfg, "student");
            const auto ce = train_base(split.train, tc, student_dims(tc, split.train));
            reduction_exact = ce.net == baseline_net;
        }
        int i = 0;
        for (const auto term : {LossTerm::bias0, LossTerm::bias1, LossTerm::debias0, LossTerm::debias1}) {
            r.single[static_cast<std::size_t>(i++)] =
                bench::student_snapshot(cfg, split, teachers, bench::single_term(term, 1.0));
        }
        r.tuned = bench::student_snapshot(cfg, split, teachers, bench::kSyntheticWeights);
        r.t0 = evaluate_snapshot(teachers.t0, split.test);
        r.t1 = evaluate_snapshot(teachers.t1, split.test);
        std::printf("  seed %llu: baseline F=(%.4f, %.4f) | bias0 F0=%.4f bias1 F1=%.4f debias0 F0=%.4f "
                    "debias1 F1=%.4f | tuned F=(%.4f, %.4f) | T0=(%.4f, %.4f) T1=(%.4f, %.4f)\n",
                    static_cast<unsigned long long>(seed), r.baseline.f1_group0, r.baseline.f1_group1,
                    r.single[0].f1_group0, r.single[1].f1_group1, r.single[2].f1_group0,
                    r.single[3].f1_group1, r.tuned.f1_group0, r.tuned.f1_group1, r.t0.f1_group0,
                    r.t0.f1_group1, r.t1.f1_group0, r.t1.f1_group1);
        std::fflush(stdout);
        results.push_back(r);
    }
    const double elapsed = seconds_since(t0);

    report(3, reduction_exact,
           std::string("zero distillation weights vs CE training, 200 epochs: parameters ") +
               (reduction_exact ? "bit-identical" : "DIFFER"));

    int a = 0, b = 0, c = 0, d = 0;
    for (const auto& r : results) {
        a += r.single[0].f1_group0 > r.baseline.f1_group0;
        d += r.single[2].f1_group0 < r.baseline.f1_group0;
        b += r.single[1].f1_group1 > r.baseline.f1_group1;
        c += r.single[3].f1_group1 < r.baseline.f1_group1;
    }
    report(4, a >= 4 && b >= 4 && c >= 4 && d >= 4 && elapsed < 900.0,
           "bias0 raises F(0) " + std::to_string(a) + "/5, debias0 lowers F(0) " + std::to_string(d) +
               "/5, bias1 raises F(1) " + std::to_string(b) + "/5, debias1 lowers F(1) " +
               std::to_string(c) + "/5 (need >= 4 each); " + fmt("%.0f s", elapsed));

    int gap = 0, eopp1 = 0, eodd = 0;
    double worst_drop = -1e9, mean_drop = 0.0;
    for (const auto& r : results) {
        gap += std::abs(r.tuned.f1_group0 - r.tuned.f1_group1) <
               std::abs(r.baseline.f1_group0 - r.baseline.f1_group1);
        eopp1 += r.tuned.eopp1 < r.baseline.eopp1;
        eodd += r.tuned.eodd < r.baseline.eodd;
        const double drop = r.baseline.f1_avg - r.tuned.f1_avg;
        worst_drop = std::max(worst_drop, drop);
        mean_drop += drop / 5.0;
    }
    report(5, gap >= 4 && eopp1 >= 4 && eodd >= 4 && worst_drop <= 0.02,
           "gap smaller " + std::to_string(gap) + "/5, Eopp1 lower " + std::to_string(eopp1) +
               "/5, Eodd lower " + std::to_string(eodd) + "/5; avg F1 drop worst seed " +
               fmt("%+.4f", worst_drop) + ", mean " + fmt("%+.4f", mean_drop) + " (<= 0.02)");

    int own0 = 0, own1 = 0;
    for (const auto& r : results) {
        own0 += r.t0.f1_group0 > r.t0.f1_group1;
        own1 += r.t1.f1_group1 > r.t1.f1_group0;
    }
    report(6, own0 >= 4 && own1 >= 4,
           "T0 better on group 0 in " + std::to_string(own0) + "/5, T1 better on group 1 in " +
               std::to_string(own1) + "/5 (need >= 4 each)");
}

// ---- 7. determinism -------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void criterion_determinism() {
    auto cfg = bench::default_config(7);
    cfg.synthetic->n = 1200;
    cfg.train.epochs = 12;
    cfg.train.weights = bench::kSyntheticWeights;
    const auto root = fs::temp_directory_path() / "fairkd_acceptance_determinism";
    fs::remove_all(root);
    const auto run = [&](const fs::path& out) {
        cmd_gen_data(cfg, out);
        for (const auto phase : {Phase::base, Phase::teacher0, Phase::teacher1, Phase::student}) {
            cmd_train(cfg, out, phase);
        }
        cmd_eval(cfg, out, out / "student.ckpt", out / "test.csv");
        cmd_ablate(cfg, out);
    };
    run(root / "a");
    run(root / "b");
    std::size_t files = 0;
    std::vector<std::string> differing;
    for (const auto& entry : fs::directory_iterator(root / "a")) {
        const auto name = entry.path().filename();
        ++files;
        if (!fs::exists(root / "b" / name) || slurp(entry.path()) != slurp(root / "b" / name)) {
            differing.push_back(name.string());
        }
    }
    const bool has_all = fs::exists(root / "a" / "ablation.csv") && fs::exists(root / "a" / "student_report.json") &&
                         fs::exists(root / "a" / "student.ckpt");
    fs::remove_all(root);
    std::string detail = std::to_string(files) + " output files (checkpoints, reports, ablation) compared: ";
    if (differing.empty()) {
        detail += "byte-identical";
    } else {
        for (const auto& f : differing) detail += f + " ";
        detail += "differ";
    }
    report(7, differing.empty() && has_all && files >= 15, detail);
}

// ---- 8. softmax / KL properties ------------------------------------------

void criterion_kl_properties() {
    Rng rng(8008);
    double worst_sum = 0.0, worst_shift = 0.0, min_kl = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const std::size_t C = 2 + rng.below(15);
        const double scale = rng.uniform(0.1, 20.0);
        const double tau = rng.uniform(0.5, 10.0);
        const auto zs = oracle::random_vector(rng, C, scale);
        const auto zt = oracle::random_vector(rng, C, scale);
        const auto p = softened_probs(zs, tau);
        double sum = 0.0;
        for (const double v : p) sum += v;
        worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
        min_kl = std::min(min_kl, kl_distill(zt, zs, tau));
        auto shifted = zs;
        const double shift = rng.uniform(-50.0, 50.0);
        for (auto& v : shifted) v += shift;
        worst_shift = std::max(worst_shift, std::abs(kl_distill(zs, shifted, tau)));
    }
    report(8, worst_sum <= 1e-12 && min_kl >= 0.0 && worst_shift <= 1e-12,
           "10000 draws; max |sum p - 1| " + fmt("%.2e", worst_sum) + ", min KL " + fmt("%.2e", min_kl) +
               ", max KL under shift " + fmt("%.2e", worst_shift));
}

}  // namespace

int main() {
    criterion_gradients();
    criterion_metrics();
    criteria_statistical();
    criterion_determinism();
    criterion_kl_properties();
    std::printf("%s: %d criterion failure(s)\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
    return failures == 0 ? 0 : 1;
}
