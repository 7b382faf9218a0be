#pragma once

#include <variant>

#include "gplab/matrix.hpp"
#include "gplab/mlp.hpp"
#include "gplab/rng.hpp"
#include "gplab/schedule.hpp"

namespace gplab {

enum class Direction { positive, negative };

struct NoPerturb {};
struct Clip {
    double tau = 1.0;  // > 0
};
struct Noise {
    double sigma = 0.01;  // >= 0
};
struct Sam {
    double rho = 0.05;  // > 0
};
struct LpgClosedForm {};
struct LpgPgd {
    int steps = 3;
    double kappa = 0.0;  // <= 0 means auto: eps_c / steps
};

using PerturbMethod = std::variant<NoPerturb, Clip, Noise, Sam, LpgClosedForm, LpgPgd>;

std::string method_name(const PerturbMethod& method);

// g * min(1, tau / ||g||); direction preserved, output norm <= tau.
Vec clip_grad(const Vec& g, double tau);

// g + N(0, sigma^2 I), drawn from the given (noise) substream. sigma == 0
// returns g unchanged without consuming the stream.
Vec noise_grad(const Vec& g, double sigma, Rng& rng);

// Two-pass sharpness-aware gradient: evaluate the batch-mean gradient g at
// W, recompute it at W + rho * g / ||g||, restore W bit-exactly (saved flat
// vector, not a negative step) and return the second gradient. A zero first
// gradient has no ascent direction; g is returned and *degenerate set.
Vec sam_grad(Mlp& net, const Matrix& features, const std::vector<int>& labels,
             const std::vector<std::size_t>& batch, double rho,
             bool* degenerate = nullptr);

// Scale the logit gradient along its own direction:
//   positive: h * (1 + alpha / ||h||)        (norm grows by exactly alpha)
//   negative: h * max(0, 1 - alpha / ||h||)  (norm shrinks by alpha, floored
//                                             at zero so dampening never
//                                             reverses the gradient)
// ||h|| == 0 has no direction to scale; h is returned unchanged.
Vec lpg_closed_form(const Vec& h, double alpha, Direction direction);

// || sum_i J_i (h_i + delta) || over one class's in-batch samples.
double perturbed_objective(const std::vector<Matrix>& jacobians,
                           const std::vector<Vec>& logit_grads, const Vec& delta);

// Projected gradient ascent (positive) or descent (negative) on the
// class-aggregate objective || G0 + A delta || with G0 = sum J_i h_i and
// A = sum J_i, over the eps_c ball. Each step moves by kappa along the
// normalized analytic gradient A^T (G0 + A delta) / ||G0 + A delta|| and
// projects back onto the ball; a zero gradient leaves the iterate fixed.
//
// The ascent problem is a quadratic maximized on the sphere, which has two
// basins and a hard case when G0 is nearly orthogonal to the top singular
// direction of A, so the positive direction runs three deterministic
// trajectories (from 0 and from +-eps_c * v1, v1 the power-iteration top
// right-singular vector of A) and returns the best endpoint. kappa <= 0
// selects the default: 10 * eps_c for ascent (each step then lands on the
// ball's best point along the current gradient), eps_c / steps for descent
// (the minimizer can be interior). Every iterate of every trajectory is
// recorded in trace (from-zero trajectory first) and stays inside the ball.
Vec lpg_pgd(const Mlp& net, const std::vector<const ForwardCache*>& caches,
            const std::vector<Vec>& logit_grads, double eps_c, double kappa, int steps,
            Direction direction, std::vector<Vec>* trace = nullptr);

// One training batch as seen by a perturbation rule.
struct BatchContext {
    Mlp& net;  // SAM moves and restores the parameters
    const Matrix& features;
    const std::vector<int>& labels;
    const std::vector<std::size_t>& batch;       // row indices into features
    const std::vector<ForwardCache>& caches;     // one per batch position
    const std::vector<Vec>& logit_grads;         // unperturbed h_i per position
    const PerturbationPlan* plan = nullptr;      // required by the LPG rules
    Rng* noise_rng = nullptr;                    // required by Noise
};

// Logit-space rules return per-sample seeds; parameter-space rules return
// the finished batch gradient.
struct PerturbOutcome {
    std::vector<Vec> seeds;
    Vec batch_grad;
    bool param_space = false;
};

// Batch-mean parameter gradient from per-sample logit seeds, accumulated in
// batch order then scaled by 1/n. Shared by the trainer and the
// parameter-space rules so equivalent configurations are bit-comparable.
Vec batch_mean_grad(const Mlp& net, const std::vector<ForwardCache>& caches,
                    const std::vector<Vec>& seeds);

PerturbOutcome apply_method(const PerturbMethod& method, const BatchContext& ctx);

}  // namespace gplab
