#pragma once

#include <string>

#include "gplab/matrix.hpp"

namespace gplab {

enum class SplitMode { accuracy, frequency, variance };

std::string to_string(SplitMode mode);
SplitMode split_mode_from_string(const std::string& s);

// Running per-class statistics maintained over training batches.
// acc_ema starts at 0.5, var_ema at 0 (cold start); counts are fixed from
// the dataset.
struct ClassStats {
    std::vector<std::size_t> counts;  // N_c
    Vec acc_ema;                      // running accuracy q̄_c
    Vec var_ema;                      // running intra-class logit-grad variance
};

ClassStats make_class_stats(const std::vector<std::size_t>& counts);

// EMA update from one batch. For every class present in the batch:
//   acc_ema[c] = beta * acc_ema[c] + (1 - beta) * batch accuracy of c
//   var_ema[c] = beta * var_ema[c] + (1 - beta) * (1/n_c) sum ||h_i - mean_c||^2
// Classes with no samples in the batch are left unchanged.
void update_class_stats(ClassStats& stats, const std::vector<int>& predictions,
                        const std::vector<int>& labels, const std::vector<Vec>& logit_grads,
                        double ema_beta);

// Class partitions. true marks membership in the positive-augmentation set.
std::vector<bool> split_by_accuracy(const Vec& acc, double tau);           // q̄_c <  tau -> positive
std::vector<bool> split_by_frequency(const std::vector<std::size_t>& counts,
                                     double tau);                          // N_c <  tau -> positive
std::vector<bool> split_by_variance(const Vec& var, double tau_v);         // Var  > tau_v -> negative

// eps_c = eps + delta_eps * |tau - sbar_c|, with sbar on the same scale as tau.
Vec epsilon_bounds(double eps, double delta_eps, double tau, const Vec& sbar);

// Count-weighted mean of the per-class bounds: sum_c (N_c / N) * eps_c.
double mean_epsilon(const Vec& eps_c, const std::vector<std::size_t>& counts);

struct PlanConfig {
    SplitMode mode = SplitMode::accuracy;
    double tau = -1.0;  // < 0 means auto: 0.5 for accuracy/variance, median
                        // class count (normalized) for frequency
    double eps = 0.1;
    double delta_eps = 0.2;
    double ema_beta = 0.9;
};

// Per-epoch class partition and perturbation budgets. The split statistic
// sbar is normalized to [0, 1] (accuracy as-is, counts / max count,
// variance / (max variance + 1e-12)) so one tau serves split and bounds in
// all modes.
struct PerturbationPlan {
    SplitMode mode = SplitMode::accuracy;
    std::vector<bool> positive;  // true -> P_a, false -> N_a
    Vec eps_c;
    Vec sbar;
    double tau = 0.5;  // on the normalized scale
    double eps = 0.0;
    double delta_eps = 0.0;

    std::size_t num_classes() const { return positive.size(); }
};

PerturbationPlan build_plan(const ClassStats& stats, const PlanConfig& config);

// Median with the even-count convention of averaging the two middle values.
double median_count(const std::vector<std::size_t>& counts);

}  // namespace gplab
