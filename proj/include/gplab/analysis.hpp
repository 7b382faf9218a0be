#pragma once

#include "gplab/matrix.hpp"
#include "gplab/mlp.hpp"
#include "gplab/perturb.hpp"

namespace gplab {

// Forward/backward duality of a logit shift: shifting the logits by delta
// changes the parameter gradient by J * (dh/du) * delta to first order.
// exact_norm is the true gradient change (both seeds backpropagated through
// the same cache), approx_norm the first-order prediction, error_ratio the
// relative error at delta/2 divided by the one at delta.
struct DualityReport {
    double delta_norm = 0.0;
    double exact_norm = 0.0;
    double approx_norm = 0.0;
    double rel_error = 0.0;
    double halved_rel_error = 0.0;
    double error_ratio = 0.0;
};

DualityReport duality_check(const Mlp& net, const Vec& x, int label, const Vec& delta_lpl);

// Central finite differences of cross_entropy_loss(forward(x), y) over every
// parameter; the independent oracle for the reverse pass. step must be in
// [1e-7, 1e-3].
ParamGrad finite_diff_param_grad(Mlp& net, const Vec& x, int label, double step);

struct GridOracleResult {
    Vec best_delta;
    double best_objective = 0.0;
};

// Exhaustive search of || J (h + delta) || over a grid_n x grid_n lattice on
// [-eps_c, eps_c]^2 intersected with the eps_c disk. Only defined for C = 2;
// grid_n must be >= 101.
GridOracleResult pgd_grid_oracle(const Matrix& jacobian, const Vec& h, double eps_c,
                                 int grid_n, Direction direction);

// error(rho) = || sam_grad(rho) - (g + rho * H g_hat) || with the
// Hessian-vector product taken by central differences of the batch gradient
// along g_hat. For a smooth loss the error scales as rho^2, so
// error(rho) / error(rho/2) is ideally 4.
struct SamTaylorRow {
    double rho = 0.0;
    double error = 0.0;
    double error_half = 0.0;
    double ratio = 0.0;  // error / error_half
};

std::vector<SamTaylorRow> sam_taylor_check(Mlp& net, const Matrix& features,
                                           const std::vector<int>& labels,
                                           const std::vector<std::size_t>& batch,
                                           const Vec& rho_list, double fd_step = 1e-5);

}  // namespace gplab
