#include "gplab/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gplab/errors.hpp"

namespace gplab {

std::string to_string(SplitMode mode) {
    switch (mode) {
        case SplitMode::accuracy: return "accuracy";
        case SplitMode::frequency: return "frequency";
        case SplitMode::variance: return "variance";
    }
    return "?";
}

SplitMode split_mode_from_string(const std::string& s) {
    if (s == "accuracy") return SplitMode::accuracy;
    if (s == "frequency") return SplitMode::frequency;
    if (s == "variance") return SplitMode::variance;
    throw ConfigError("unknown split mode: " + s);
}

ClassStats make_class_stats(const std::vector<std::size_t>& counts) {
    ClassStats stats;
    stats.counts = counts;
    stats.acc_ema.assign(counts.size(), 0.5);
    stats.var_ema.assign(counts.size(), 0.0);
    return stats;
}

void update_class_stats(ClassStats& stats, const std::vector<int>& predictions,
                        const std::vector<int>& labels, const std::vector<Vec>& logit_grads,
                        double ema_beta) {
    if (predictions.size() != labels.size() || logit_grads.size() != labels.size()) {
        throw std::invalid_argument("update_class_stats: size mismatch");
    }
    if (ema_beta < 0.0 || ema_beta >= 1.0) {
        throw std::invalid_argument("update_class_stats: ema_beta must be in [0, 1)");
    }
    const std::size_t num_classes = stats.counts.size();
    std::vector<std::size_t> n(num_classes, 0);
    std::vector<std::size_t> correct(num_classes, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto c = static_cast<std::size_t>(labels[i]);
        if (c >= num_classes) throw std::invalid_argument("update_class_stats: label out of range");
        ++n[c];
        if (predictions[i] == labels[i]) ++correct[c];
    }
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (n[c] == 0) continue;

        const double acc = static_cast<double>(correct[c]) / static_cast<double>(n[c]);
        stats.acc_ema[c] = ema_beta * stats.acc_ema[c] + (1.0 - ema_beta) * acc;

        Vec mean;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (static_cast<std::size_t>(labels[i]) != c) continue;
            if (mean.empty()) mean.assign(logit_grads[i].size(), 0.0);
            axpy(1.0, logit_grads[i], mean);
        }
        for (double& x : mean) x /= static_cast<double>(n[c]);
        double var = 0.0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (static_cast<std::size_t>(labels[i]) != c) continue;
            const Vec d = sub(logit_grads[i], mean);
            var += dot(d, d);
        }
        var /= static_cast<double>(n[c]);
        stats.var_ema[c] = ema_beta * stats.var_ema[c] + (1.0 - ema_beta) * var;
    }
}

std::vector<bool> split_by_accuracy(const Vec& acc, double tau) {
    if (tau < 0.0 || tau > 1.0) throw std::invalid_argument("split_by_accuracy: tau outside [0, 1]");
    std::vector<bool> positive(acc.size());
    for (std::size_t c = 0; c < acc.size(); ++c) positive[c] = acc[c] < tau;
    return positive;
}

std::vector<bool> split_by_frequency(const std::vector<std::size_t>& counts, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("split_by_frequency: tau must be positive");
    std::vector<bool> positive(counts.size());
    for (std::size_t c = 0; c < counts.size(); ++c) {
        positive[c] = static_cast<double>(counts[c]) < tau;
    }
    return positive;
}

std::vector<bool> split_by_variance(const Vec& var, double tau_v) {
    if (tau_v < 0.0) throw std::invalid_argument("split_by_variance: negative tau_v");
    std::vector<bool> positive(var.size());
    for (std::size_t c = 0; c < var.size(); ++c) positive[c] = !(var[c] > tau_v);
    return positive;
}

Vec epsilon_bounds(double eps, double delta_eps, double tau, const Vec& sbar) {
    if (eps < 0.0 || delta_eps < 0.0) {
        throw std::invalid_argument("epsilon_bounds: eps and delta_eps must be nonnegative");
    }
    Vec out(sbar.size());
    for (std::size_t c = 0; c < sbar.size(); ++c) {
        out[c] = eps + delta_eps * std::fabs(tau - sbar[c]);
    }
    return out;
}

double mean_epsilon(const Vec& eps_c, const std::vector<std::size_t>& counts) {
    if (eps_c.size() != counts.size()) throw std::invalid_argument("mean_epsilon: size mismatch");
    std::size_t total = 0;
    for (std::size_t n : counts) total += n;
    if (total == 0) throw std::invalid_argument("mean_epsilon: empty dataset");
    double s = 0.0;
    for (std::size_t c = 0; c < eps_c.size(); ++c) {
        s += static_cast<double>(counts[c]) / static_cast<double>(total) * eps_c[c];
    }
    return s;
}

double median_count(const std::vector<std::size_t>& counts) {
    if (counts.empty()) throw std::invalid_argument("median_count: empty");
    std::vector<std::size_t> sorted = counts;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    if (n % 2 == 1) return static_cast<double>(sorted[n / 2]);
    return 0.5 * (static_cast<double>(sorted[n / 2 - 1]) + static_cast<double>(sorted[n / 2]));
}

PerturbationPlan build_plan(const ClassStats& stats, const PlanConfig& config) {
    const std::size_t num_classes = stats.counts.size();
    if (num_classes == 0) throw ConfigError("build_plan: no classes");

    PerturbationPlan plan;
    plan.mode = config.mode;
    plan.eps = config.eps;
    plan.delta_eps = config.delta_eps;
    plan.sbar.assign(num_classes, 0.0);

    switch (config.mode) {
        case SplitMode::accuracy: {
            plan.sbar = stats.acc_ema;
            plan.tau = config.tau < 0.0 ? 0.5 : config.tau;
            plan.positive = split_by_accuracy(plan.sbar, plan.tau);
            break;
        }
        case SplitMode::frequency: {
            const std::size_t max_count = *std::max_element(stats.counts.begin(), stats.counts.end());
            if (max_count == 0) throw ConfigError("build_plan: all class counts are zero");
            for (std::size_t c = 0; c < num_classes; ++c) {
                plan.sbar[c] = static_cast<double>(stats.counts[c]) / static_cast<double>(max_count);
            }
            plan.tau = config.tau < 0.0 ? median_count(stats.counts) / static_cast<double>(max_count)
                                        : config.tau;
            plan.positive.assign(num_classes, false);
            for (std::size_t c = 0; c < num_classes; ++c) plan.positive[c] = plan.sbar[c] < plan.tau;
            break;
        }
        case SplitMode::variance: {
            const double max_var = *std::max_element(stats.var_ema.begin(), stats.var_ema.end());
            for (std::size_t c = 0; c < num_classes; ++c) {
                plan.sbar[c] = stats.var_ema[c] / (max_var + 1e-12);
            }
            plan.tau = config.tau < 0.0 ? 0.5 : config.tau;
            plan.positive = split_by_variance(plan.sbar, plan.tau);
            break;
        }
    }
    plan.eps_c = epsilon_bounds(config.eps, config.delta_eps, plan.tau, plan.sbar);
    return plan;
}

}  // namespace gplab
