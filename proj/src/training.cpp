#include "fairkd/training.hpp"

#include "fairkd/fairness.hpp"
#include "fairkd/rng.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace fairkd {

namespace {

struct FrozenLogits {
    Matrix teacher0;
    Matrix teacher1;
};

Matrix logits_for(const DenseNet& net, const Dataset& data) {
    Matrix out(data.size(), net.output_dim());
    ForwardTrace trace;
    for (std::size_t i = 0; i < data.size(); ++i) {
        forward_trace(net, data.examples[i].x, trace);
        const auto z = trace.logits();
        std::copy(z.begin(), z.end(), out.row(i).begin());
    }
    return out;
}

bool finite(const BatchLossBreakdown& b) {
    return std::isfinite(b.l_ce) && std::isfinite(b.l_bias0) && std::isfinite(b.l_bias1) &&
           std::isfinite(b.l_debias0) && std::isfinite(b.l_debias1) && std::isfinite(b.l_total);
}

// Shared SGD loop. Teacher logits are precomputed once because the
// teachers never change during a run.
void run_epochs(DenseNet& net, const Dataset& train, std::size_t epochs, const TrainConfig& cfg,
                const LossWeights& weights, const FrozenLogits* frozen,
                std::uint64_t shuffle_seed, const Dataset* held_out, RunRecord& record) {
    if (train.empty()) {
        throw std::invalid_argument("training set is empty");
    }
    if (net.input_dim() != train.dim || net.output_dim() != train.num_classes) {
        throw std::invalid_argument("network dims do not match the training set");
    }
    const std::size_t n = train.size();
    const std::size_t classes = net.output_dim();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(shuffle_seed);

    std::vector<ForwardTrace> traces(std::min(cfg.batch_size, n));
    GradientBundle grads = zero_gradients(net);
    std::vector<double> scratch;

    for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
        if (cfg.shuffle) {
            rng.shuffle(std::span<std::size_t>(order));
        }
        BatchLossBreakdown epoch_loss;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t m = std::min(cfg.batch_size, n - start);
            Matrix student(m, classes);
            Matrix t0;
            Matrix t1;
            if (frozen != nullptr) {
                t0 = Matrix(m, classes);
                t1 = Matrix(m, classes);
            }
            std::vector<std::size_t> labels(m);
            std::vector<int> groups(m);
            for (std::size_t b = 0; b < m; ++b) {
                const std::size_t idx = order[start + b];
                const auto& e = train.examples[idx];
                forward_trace(net, e.x, traces[b]);
                const auto z = traces[b].logits();
                std::copy(z.begin(), z.end(), student.row(b).begin());
                if (frozen != nullptr) {
                    const auto r0 = frozen->teacher0.row(idx);
                    const auto r1 = frozen->teacher1.row(idx);
                    std::copy(r0.begin(), r0.end(), t0.row(b).begin());
                    std::copy(r1.begin(), r1.end(), t1.row(b).begin());
                }
                labels[b] = e.y;
                groups[b] = e.k;
            }
            const auto result =
                batch_total_loss(student, frozen ? &t0 : nullptr, frozen ? &t1 : nullptr, labels,
                                 groups, weights);
            if (!finite(result.breakdown)) {
                throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) +
                                         ", batch " + std::to_string(batches));
            }
            grads.set_zero();
            for (std::size_t b = 0; b < m; ++b) {
                accumulate_backward(net, traces[b], result.logit_grads.row(b), grads, scratch);
            }
            if (cfg.lr > 0.0) {
                apply_sgd(net, grads, cfg.lr);
            }

            const auto& bl = result.breakdown;
            epoch_loss.l_ce += bl.l_ce;
            epoch_loss.l_bias0 += bl.l_bias0;
            epoch_loss.l_bias1 += bl.l_bias1;
            epoch_loss.l_debias0 += bl.l_debias0;
            epoch_loss.l_debias1 += bl.l_debias1;
            epoch_loss.l_total += bl.l_total;
            epoch_loss.n_group0 += bl.n_group0;
            epoch_loss.n_group1 += bl.n_group1;
            ++batches;
        }
        const double inv = 1.0 / static_cast<double>(batches);
        epoch_loss.l_ce *= inv;
        epoch_loss.l_bias0 *= inv;
        epoch_loss.l_bias1 *= inv;
        epoch_loss.l_debias0 *= inv;
        epoch_loss.l_debias1 *= inv;
        epoch_loss.l_total *= inv;

        EpochLog log;
        log.epoch = epoch;
        log.loss = epoch_loss;
        if (held_out != nullptr && !held_out->empty()) {
            log.eval = evaluate_snapshot(net, *held_out);
        }
        record.epochs.push_back(log);
    }
}

RunRecord make_record(std::string phase, const TrainConfig& cfg) {
    RunRecord r;
    r.phase = std::move(phase);
    r.config = cfg;
    r.seed = cfg.seed;
    return r;
}

std::vector<std::size_t> with_io(const std::vector<std::size_t>& hidden, const Dataset& data) {
    std::vector<std::size_t> dims;
    dims.push_back(data.dim);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(data.num_classes);
    return dims;
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs == 0) {
        throw std::invalid_argument("epochs must be positive");
    }
    if (batch_size == 0) {
        throw std::invalid_argument("batch_size must be positive");
    }
    // lr = 0 is accepted and leaves parameters untouched.
    if (!(lr >= 0.0) || !std::isfinite(lr)) {
        throw std::invalid_argument("lr must be finite and non-negative");
    }
    for (const auto h : student_hidden) {
        if (h == 0) {
            throw std::invalid_argument("student hidden widths must be positive");
        }
    }
    for (const auto h : teacher_hidden) {
        if (h == 0) {
            throw std::invalid_argument("teacher hidden widths must be positive");
        }
    }
    weights.validate();
}

std::vector<std::size_t> student_dims(const TrainConfig& cfg, const Dataset& data) {
    return with_io(cfg.student_hidden, data);
}

std::vector<std::size_t> teacher_dims(const TrainConfig& cfg, const Dataset& data) {
    return with_io(cfg.teacher_hidden, data);
}

EvalSnapshot evaluate_snapshot(const DenseNet& net, const Dataset& data) {
    const auto log = predict(net, data);
    const auto report = evaluate_fairness(log.pred, log.truth, log.groups, data.num_classes);
    EvalSnapshot s;
    s.f1_group0 = report.accuracy.group[0].f1;
    s.f1_group1 = report.accuracy.group[1].f1;
    s.f1_avg = report.accuracy.avg.f1;
    s.eopp0 = report.eopp0;
    s.eopp1 = report.eopp1;
    s.eodd = report.eodd;
    return s;
}

TrainResult train_base(const Dataset& train, const TrainConfig& cfg,
                       std::span<const std::size_t> layer_dims, const Dataset* held_out) {
    cfg.validate();
    if (train.empty()) {
        throw std::invalid_argument("train_base: empty training set");
    }
    TrainResult result{init_network(layer_dims, derive_seed(cfg.seed, "init")),
                       make_record("base", cfg)};
    run_epochs(result.net, train, cfg.epochs, cfg, LossWeights::cross_entropy_only(cfg.weights.tau),
               nullptr, derive_seed(cfg.seed, "shuffle"), held_out, result.record);
    return result;
}

TrainResult finetune_teacher(const DenseNet& base, const Dataset& train, int k,
                             const TrainConfig& cfg, const Dataset* held_out) {
    cfg.validate();
    if (k != 0 && k != 1) {
        throw std::invalid_argument("finetune_teacher: group must be 0 or 1");
    }
    const Dataset subset = filter_group(train, k);
    if (subset.empty()) {
        throw std::invalid_argument("finetune_teacher: no group-" + std::to_string(k) +
                                    " samples in the training set");
    }
    TrainResult result{base, make_record(k == 0 ? "teacher0" : "teacher1", cfg)};
    const std::size_t epochs = cfg.effective_finetune_epochs();
    if (epochs > 0) {
        run_epochs(result.net, subset, epochs, cfg,
                   LossWeights::cross_entropy_only(cfg.weights.tau), nullptr,
                   derive_seed(cfg.seed, k == 0 ? "finetune0" : "finetune1"), held_out,
                   result.record);
    }
    return result;
}

TrainResult train_student(const Dataset& train, const DenseNet& teacher0,
                          const DenseNet& teacher1, const TrainConfig& cfg,
                          const Dataset* held_out) {
    cfg.validate();
    if (train.empty()) {
        throw std::invalid_argument("train_student: empty training set");
    }
    const auto dims = student_dims(cfg, train);
    for (const DenseNet* t : {&teacher0, &teacher1}) {
        if (t->input_dim() != dims.front() || t->output_dim() != dims.back()) {
            throw std::invalid_argument(
                "train_student: teacher input/output dims differ from the student's");
        }
    }
    const FrozenLogits frozen{logits_for(teacher0, train), logits_for(teacher1, train)};
    TrainResult result{init_network(dims, derive_seed(cfg.seed, "init")),
                       make_record("student", cfg)};
    run_epochs(result.net, train, cfg.epochs, cfg, cfg.weights, &frozen,
               derive_seed(cfg.seed, "shuffle"), held_out, result.record);
    return result;
}

std::string_view loss_term_name(LossTerm term) {
    switch (term) {
        case LossTerm::bias0:
            return "bias0";
        case LossTerm::bias1:
            return "bias1";
        case LossTerm::debias0:
            return "debias0";
        case LossTerm::debias1:
            return "debias1";
    }
    return "unknown";
}

AblationTable run_ablation(const Dataset& train, const Dataset& test, const DenseNet& teacher0,
                           const DenseNet& teacher1, const TrainConfig& base_cfg,
                           std::span<const double> grid) {
    base_cfg.validate();
    for (const double w : grid) {
        if (!std::isfinite(w) || w < 0.0) {
            throw std::invalid_argument("ablation grid weights must be finite and non-negative");
        }
    }
    const double tau = base_cfg.weights.tau;

    const auto run = [&](std::string kind, double weight, const LossWeights& w) {
        TrainConfig cfg = base_cfg;
        cfg.weights = w;
        const auto trained = train_student(train, teacher0, teacher1, cfg);
        const auto snap = evaluate_snapshot(trained.net, test);
        return AblationRow{std::move(kind), weight, w, snap.f1_group0, snap.f1_group1};
    };

    AblationTable table;
    table.rows.push_back(run("baseline", 0.0, LossWeights::cross_entropy_only(tau)));
    for (const auto term : {LossTerm::bias0, LossTerm::bias1, LossTerm::debias0, LossTerm::debias1}) {
        for (const double weight : grid) {
            LossWeights w = LossWeights::cross_entropy_only(tau);
            switch (term) {
                case LossTerm::bias0:
                    w.alpha = weight;
                    break;
                case LossTerm::bias1:
                    w.beta = weight;
                    break;
                case LossTerm::debias0:
                    w.gamma = weight;
                    break;
                case LossTerm::debias1:
                    w.delta = weight;
                    break;
            }
            table.rows.push_back(run(std::string(loss_term_name(term)), weight, w));
        }
    }
    table.rows.push_back(run("proposed", 1.0, base_cfg.weights));
    return table;
}

std::string ablation_to_table(const AblationTable& table) {
    std::ostringstream out;
    out << "row,weight,l_ce,l_bias0,l_bias1,l_debias0,l_debias1,f0,f1\n";
    char buf[64];
    const auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.4g", v);
        return std::string(buf);
    };
    const auto fixed = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.4f", v);
        return std::string(buf);
    };
    for (const auto& r : table.rows) {
        out << r.kind << ',' << num(r.weight) << ',' << num(r.weights.lambda) << ','
            << num(r.weights.alpha) << ',' << num(r.weights.beta) << ','
            << num(r.weights.gamma) << ',' << num(r.weights.delta) << ',' << fixed(r.f0) << ','
            << fixed(r.f1) << '\n';
    }
    return out.str();
}

}  // namespace fairkd
