#pragma once

#include "fairkd/nn.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace fairkd {

// Weights of the five loss terms and the distillation temperature.
// Defaults: lambda 1, alpha 0.99, beta 0.001, gamma 0.99, delta 0.01, tau 5.
struct LossWeights {
    double lambda = 1.0;   // cross-entropy
    double alpha = 0.99;   // bias_0:   T0 -> S on group 0
    double beta = 0.001;   // bias_1:   T1 -> S on group 1
    double gamma = 0.99;   // debias_0: T1 -> S on group 0
    double delta = 0.01;   // debias_1: T0 -> S on group 1
    double tau = 5.0;

    static LossWeights cross_entropy_only(double tau = 5.0) {
        return {1.0, 0.0, 0.0, 0.0, 0.0, tau};
    }
    bool uses_teachers() const { return alpha != 0.0 || beta != 0.0 || gamma != 0.0 || delta != 0.0; }
    void validate() const;

    bool operator==(const LossWeights&) const = default;
};

struct BatchLossBreakdown {
    double l_ce = 0.0;
    double l_bias0 = 0.0;
    double l_bias1 = 0.0;
    double l_debias0 = 0.0;
    double l_debias1 = 0.0;
    double l_total = 0.0;
    std::size_t n_group0 = 0;  // samples contributing to bias_0 / debias_0
    std::size_t n_group1 = 0;  // samples contributing to bias_1 / debias_1
};

struct BatchLossResult {
    BatchLossBreakdown breakdown;
    Matrix logit_grads;  // d l_total / d student logits, one row per sample
};

// Temperature-softened softmax, max-shifted.
std::vector<double> softened_probs(std::span<const double> z, double tau);

// log of softened_probs, computed with log-sum-exp.
std::vector<double> log_softened_probs(std::span<const double> z, double tau);

// -sum_c y_c log softmax(z)_c at temperature 1. `y` must be one-hot.
double cross_entropy(std::span<const double> z, std::span<const double> y);
double cross_entropy(std::span<const double> z, std::size_t label);
// softmax(z) - onehot(label)
std::vector<double> cross_entropy_grad(std::span<const double> z, std::size_t label);

// tau^2 * KL(P_teacher || P_student), both softened at tau.
double kl_distill(std::span<const double> z_teacher, std::span<const double> z_student,
                  double tau);
// Gradient of kl_distill with respect to the student logits; the teacher is a constant.
std::vector<double> kl_distill_grad(std::span<const double> z_teacher,
                                    std::span<const double> z_student, double tau);

// Weighted five-term objective over a batch. Cross-entropy is averaged over
// the whole batch; each distillation term is averaged over the samples of
// the group it is routed to (and is 0 when that group is absent):
//   bias_0   = mean_{k=0} KL(T0 || S)     debias_0 = mean_{k=0} KL(T1 || S)
//   bias_1   = mean_{k=1} KL(T1 || S)     debias_1 = mean_{k=1} KL(T0 || S)
// Terms whose weight is exactly zero contribute nothing to the gradient.
// Teacher logits may be null only when every distillation weight is zero.
BatchLossResult batch_total_loss(const Matrix& student_logits, const Matrix* teacher0_logits,
                                 const Matrix* teacher1_logits,
                                 std::span<const std::size_t> labels,
                                 std::span<const int> groups, const LossWeights& w);

}  // namespace fairkd
