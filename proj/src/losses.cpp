#include "fairkd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fairkd {

namespace {

void check_finite(std::span<const double> z, const char* what) {
    for (const double v : z) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument(std::string(what) + ": non-finite logit");
        }
    }
}

void check_tau(double tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) {
        throw std::invalid_argument("temperature must be positive and finite");
    }
}

void check_same_length(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty()) {
        throw std::invalid_argument("teacher and student logits must have equal, nonzero length");
    }
}

}  // namespace

void LossWeights::validate() const {
    for (const double v : {lambda, alpha, beta, gamma, delta}) {
        if (!std::isfinite(v) || v < 0.0) {
            throw std::invalid_argument("loss weights must be finite and non-negative");
        }
    }
    check_tau(tau);
}

std::vector<double> log_softened_probs(std::span<const double> z, double tau) {
    check_tau(tau);
    check_finite(z, "softened_probs");
    if (z.empty()) {
        throw std::invalid_argument("softened_probs: empty logit vector");
    }
    const double zmax = *std::max_element(z.begin(), z.end());
    std::vector<double> out(z.size());
    double sum = 0.0;
    for (std::size_t c = 0; c < z.size(); ++c) {
        out[c] = (z[c] - zmax) / tau;
        sum += std::exp(out[c]);
    }
    const double log_sum = std::log(sum);
    for (auto& v : out) {
        v -= log_sum;
    }
    return out;
}

std::vector<double> softened_probs(std::span<const double> z, double tau) {
    check_tau(tau);
    check_finite(z, "softened_probs");
    if (z.empty()) {
        throw std::invalid_argument("softened_probs: empty logit vector");
    }
    const double zmax = *std::max_element(z.begin(), z.end());
    std::vector<double> p(z.size());
    double sum = 0.0;
    for (std::size_t c = 0; c < z.size(); ++c) {
        p[c] = std::exp((z[c] - zmax) / tau);
        sum += p[c];
    }
    for (auto& v : p) {
        v /= sum;
    }
    return p;
}

double cross_entropy(std::span<const double> z, std::size_t label) {
    if (label >= z.size()) {
        throw std::invalid_argument("cross_entropy: label out of range");
    }
    const auto logp = log_softened_probs(z, 1.0);
    return std::max(0.0, -logp[label]);
}

double cross_entropy(std::span<const double> z, std::span<const double> y) {
    if (y.size() != z.size()) {
        throw std::invalid_argument("cross_entropy: target length differs from logits");
    }
    std::size_t hot = y.size();
    for (std::size_t c = 0; c < y.size(); ++c) {
        if (y[c] == 1.0 && hot == y.size()) {
            hot = c;
        } else if (y[c] != 0.0) {
            throw std::invalid_argument("cross_entropy: target is not one-hot");
        }
    }
    if (hot == y.size()) {
        throw std::invalid_argument("cross_entropy: target is not one-hot");
    }
    return cross_entropy(z, hot);
}

std::vector<double> cross_entropy_grad(std::span<const double> z, std::size_t label) {
    if (label >= z.size()) {
        throw std::invalid_argument("cross_entropy: label out of range");
    }
    auto g = softened_probs(z, 1.0);
    g[label] -= 1.0;
    return g;
}

double kl_distill(std::span<const double> z_teacher, std::span<const double> z_student,
                  double tau) {
    check_same_length(z_teacher, z_student);
    const auto log_pt = log_softened_probs(z_teacher, tau);
    const auto log_ps = log_softened_probs(z_student, tau);
    double kl = 0.0;
    for (std::size_t c = 0; c < log_pt.size(); ++c) {
        // exp() underflowing to 0 gives the 0 * log 0 = 0 convention.
        kl += std::exp(log_pt[c]) * (log_pt[c] - log_ps[c]);
    }
    return tau * tau * std::max(0.0, kl);
}

std::vector<double> kl_distill_grad(std::span<const double> z_teacher,
                                    std::span<const double> z_student, double tau) {
    check_same_length(z_teacher, z_student);
    const auto pt = softened_probs(z_teacher, tau);
    auto g = softened_probs(z_student, tau);
    for (std::size_t c = 0; c < g.size(); ++c) {
        g[c] = tau * (g[c] - pt[c]);
    }
    return g;
}

BatchLossResult batch_total_loss(const Matrix& student_logits, const Matrix* teacher0_logits,
                                 const Matrix* teacher1_logits,
                                 std::span<const std::size_t> labels,
                                 std::span<const int> groups, const LossWeights& w) {
    w.validate();
    const std::size_t n = student_logits.rows;
    const std::size_t classes = student_logits.cols;
    if (n == 0) {
        throw std::invalid_argument("batch_total_loss: empty batch");
    }
    if (labels.size() != n || groups.size() != n) {
        throw std::invalid_argument("batch_total_loss: labels/groups length differs from batch size");
    }
    for (const Matrix* t : {teacher0_logits, teacher1_logits}) {
        if (t != nullptr && (t->rows != n || t->cols != classes)) {
            throw std::invalid_argument("batch_total_loss: teacher logits shape differs from student");
        }
    }
    const bool have_teachers = teacher0_logits != nullptr && teacher1_logits != nullptr;
    if (w.uses_teachers() && !have_teachers) {
        throw std::invalid_argument("batch_total_loss: distillation weights set without teacher logits");
    }

    BatchLossResult result;
    auto& b = result.breakdown;
    for (std::size_t i = 0; i < n; ++i) {
        if (groups[i] == 0) {
            ++b.n_group0;
        } else if (groups[i] == 1) {
            ++b.n_group1;
        } else {
            throw std::invalid_argument("batch_total_loss: group " + std::to_string(groups[i]) +
                                        " at sample " + std::to_string(i) + " is not 0 or 1");
        }
    }

    const double tau = w.tau;
    const double inv_n = 1.0 / static_cast<double>(n);
    const double inv_n0 = b.n_group0 > 0 ? 1.0 / static_cast<double>(b.n_group0) : 0.0;
    const double inv_n1 = b.n_group1 > 0 ? 1.0 / static_cast<double>(b.n_group1) : 0.0;

    result.logit_grads = Matrix(n, classes);
    for (std::size_t i = 0; i < n; ++i) {
        const auto zs = student_logits.row(i);
        auto gi = result.logit_grads.row(i);

        b.l_ce += cross_entropy(zs, labels[i]);
        if (w.lambda != 0.0) {
            const auto g = cross_entropy_grad(zs, labels[i]);
            for (std::size_t c = 0; c < classes; ++c) {
                gi[c] = w.lambda * inv_n * g[c];
            }
        }
        if (!have_teachers) {
            continue;
        }

        // Group 0 learns from T0 (bias) and T1 (debias); group 1 the reverse.
        const bool g0 = groups[i] == 0;
        const auto z_same = g0 ? teacher0_logits->row(i) : teacher1_logits->row(i);
        const auto z_other = g0 ? teacher1_logits->row(i) : teacher0_logits->row(i);
        const double w_bias = g0 ? w.alpha : w.beta;
        const double w_debias = g0 ? w.gamma : w.delta;
        const double inv_group = g0 ? inv_n0 : inv_n1;

        const double kl_bias = kl_distill(z_same, zs, tau);
        const double kl_debias = kl_distill(z_other, zs, tau);
        (g0 ? b.l_bias0 : b.l_bias1) += kl_bias;
        (g0 ? b.l_debias0 : b.l_debias1) += kl_debias;

        if (w_bias != 0.0) {
            const auto g = kl_distill_grad(z_same, zs, tau);
            for (std::size_t c = 0; c < classes; ++c) {
                gi[c] += w_bias * inv_group * g[c];
            }
        }
        if (w_debias != 0.0) {
            const auto g = kl_distill_grad(z_other, zs, tau);
            for (std::size_t c = 0; c < classes; ++c) {
                gi[c] += w_debias * inv_group * g[c];
            }
        }
    }

    b.l_ce *= inv_n;
    b.l_bias0 *= inv_n0;
    b.l_debias0 *= inv_n0;
    b.l_bias1 *= inv_n1;
    b.l_debias1 *= inv_n1;
    b.l_total = w.lambda * b.l_ce + w.alpha * b.l_bias0 + w.beta * b.l_bias1 +
                w.gamma * b.l_debias0 + w.delta * b.l_debias1;
    return result;
}

}  // namespace fairkd
