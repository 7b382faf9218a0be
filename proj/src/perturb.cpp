#include "gplab/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gplab/core_math.hpp"
#include "gplab/errors.hpp"

namespace gplab {

std::string method_name(const PerturbMethod& method) {
    struct Visitor {
        std::string operator()(const NoPerturb&) const { return "none"; }
        std::string operator()(const Clip&) const { return "clip"; }
        std::string operator()(const Noise&) const { return "noise"; }
        std::string operator()(const Sam&) const { return "sam"; }
        std::string operator()(const LpgClosedForm&) const { return "lpg_closed_form"; }
        std::string operator()(const LpgPgd&) const { return "lpg_pgd"; }
    };
    return std::visit(Visitor{}, method);
}

Vec clip_grad(const Vec& g, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("clip_grad: tau must be positive");
    const double n = norm(g);
    if (n <= tau) return g;  // min(1, tau/||g||) = 1, including ||g|| = 0
    return scaled(g, tau / n);
}

Vec noise_grad(const Vec& g, double sigma, Rng& rng) {
    if (sigma < 0.0) throw std::invalid_argument("noise_grad: negative sigma");
    if (sigma == 0.0) return g;
    Vec out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i] + sigma * rng.normal();
    return out;
}

Vec batch_mean_grad(const Mlp& net, const std::vector<ForwardCache>& caches,
                    const std::vector<Vec>& seeds) {
    if (caches.empty() || caches.size() != seeds.size()) {
        throw std::invalid_argument("batch_mean_grad: empty or mismatched batch");
    }
    Vec grad(net.param_count(), 0.0);
    for (std::size_t i = 0; i < caches.size(); ++i) {
        const ParamGrad g = backward_from_logit_grad(net, caches[i], seeds[i]);
        axpy(1.0, g, grad);
    }
    const double inv = 1.0 / static_cast<double>(caches.size());
    for (double& x : grad) x *= inv;
    return grad;
}

namespace {
// batch-mean cross-entropy gradient at the current parameters
Vec ce_batch_grad(const Mlp& net, const Matrix& features, const std::vector<int>& labels,
                  const std::vector<std::size_t>& batch) {
    Vec grad(net.param_count(), 0.0);
    for (const std::size_t row : batch) {
        Vec x(features.data.begin() + row * features.cols,
              features.data.begin() + (row + 1) * features.cols);
        auto [u, cache] = forward(net, x);
        const Vec h = ce_logit_grad(u, labels[row]);
        const ParamGrad g = backward_from_logit_grad(net, cache, h);
        axpy(1.0, g, grad);
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (double& x : grad) x *= inv;
    return grad;
}
}  // namespace

Vec sam_grad(Mlp& net, const Matrix& features, const std::vector<int>& labels,
             const std::vector<std::size_t>& batch, double rho, bool* degenerate) {
    if (batch.empty()) throw std::invalid_argument("sam_grad: empty batch");
    if (rho <= 0.0) throw std::invalid_argument("sam_grad: rho must be positive");
    if (degenerate) *degenerate = false;

    const Vec g = ce_batch_grad(net, features, labels, batch);
    const double gn = norm(g);
    if (gn == 0.0) {
        if (degenerate) *degenerate = true;
        return g;
    }
    const Vec saved = net.flat_params();
    Vec moved = saved;
    axpy(rho / gn, g, moved);
    net.set_flat_params(moved);
    const Vec g_perturbed = ce_batch_grad(net, features, labels, batch);
    net.set_flat_params(saved);
    return g_perturbed;
}

Vec lpg_closed_form(const Vec& h, double alpha, Direction direction) {
    if (alpha < 0.0) throw std::invalid_argument("lpg_closed_form: negative alpha");
    const double n = norm(h);
    if (n == 0.0) return h;
    const double scale = direction == Direction::positive
                             ? 1.0 + alpha / n
                             : std::max(0.0, 1.0 - alpha / n);
    return scaled(h, scale);
}

double perturbed_objective(const std::vector<Matrix>& jacobians,
                           const std::vector<Vec>& logit_grads, const Vec& delta) {
    if (jacobians.empty() || jacobians.size() != logit_grads.size()) {
        throw std::invalid_argument("perturbed_objective: empty or mismatched sample set");
    }
    Vec total(jacobians.front().rows, 0.0);
    for (std::size_t i = 0; i < jacobians.size(); ++i) {
        const Vec seed = add(logit_grads[i], delta);
        axpy(1.0, matvec(jacobians[i], seed), total);
    }
    return norm(total);
}

namespace {
double pgd_objective(const Matrix& jac_sum, const Vec& g0, const Vec& delta) {
    Vec residual = g0;
    axpy(1.0, matvec(jac_sum, delta), residual);
    return norm(residual);
}

Vec pgd_trajectory(const Matrix& jac_sum, const Vec& g0, double eps_c, double kappa, int steps,
                   Direction direction, Vec delta, std::vector<Vec>* trace) {
    for (int t = 0; t < steps; ++t) {
        Vec residual = g0;
        axpy(1.0, matvec(jac_sum, delta), residual);
        const double obj = norm(residual);
        if (obj > 0.0) {
            const Vec grad = tmatvec(jac_sum, residual);
            const double gn = norm(grad);
            if (gn > 0.0) {
                axpy((direction == Direction::positive ? kappa : -kappa) / gn, grad, delta);
                delta = l2_project(delta, eps_c);
            }
        }
        if (trace) trace->push_back(delta);
    }
    return delta;
}

// top right-singular direction of A via power iteration on A^T A
Vec top_right_singular(const Matrix& jac_sum) {
    const std::size_t c = jac_sum.cols;
    Matrix gram(c, c);
    for (std::size_t i = 0; i < c; ++i) {
        for (std::size_t j = i; j < c; ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < jac_sum.rows; ++r) s += jac_sum(r, i) * jac_sum(r, j);
            gram(i, j) = s;
            gram(j, i) = s;
        }
    }
    std::size_t start = 0;
    for (std::size_t i = 1; i < c; ++i) {
        if (gram(i, i) > gram(start, start)) start = i;
    }
    Vec v(c, 0.0);
    v[start] = 1.0;
    for (int it = 0; it < 16; ++it) {
        v = matvec(gram, v);
        const double n = norm(v);
        if (n == 0.0) return Vec(c, 0.0);
        v = scaled(v, 1.0 / n);
    }
    return v;
}
}  // namespace

Vec lpg_pgd(const Mlp& net, const std::vector<const ForwardCache*>& caches,
            const std::vector<Vec>& logit_grads, double eps_c, double kappa, int steps,
            Direction direction, std::vector<Vec>* trace) {
    if (caches.empty() || caches.size() != logit_grads.size()) {
        throw std::invalid_argument("lpg_pgd: empty or mismatched sample set");
    }
    if (steps < 1) throw std::invalid_argument("lpg_pgd: need at least one step");
    if (eps_c < 0.0) throw std::invalid_argument("lpg_pgd: negative eps_c");

    const std::size_t num_classes = net.output_dim();
    if (eps_c == 0.0) return Vec(num_classes, 0.0);

    // A = sum_i J_i and G0 = sum_i J_i h_i; the objective is ||G0 + A delta||
    Matrix jac_sum(net.param_count(), num_classes);
    Vec g0(net.param_count(), 0.0);
    for (std::size_t i = 0; i < caches.size(); ++i) {
        const Matrix jac = assemble_jacobian(net, *caches[i]);
        for (std::size_t k = 0; k < jac.data.size(); ++k) jac_sum.data[k] += jac.data[k];
        axpy(1.0, matvec(jac, logit_grads[i]), g0);
    }

    if (direction == Direction::negative) {
        const double k = kappa > 0.0 ? kappa : eps_c / static_cast<double>(steps);
        return pgd_trajectory(jac_sum, g0, eps_c, k, steps, direction, Vec(num_classes, 0.0),
                              trace);
    }

    const double k = kappa > 0.0 ? kappa : 10.0 * eps_c;
    const Vec v1 = top_right_singular(jac_sum);
    std::vector<Vec> starts;
    starts.emplace_back(num_classes, 0.0);
    if (norm(v1) > 0.0) {
        starts.push_back(scaled(v1, eps_c));
        starts.push_back(scaled(v1, -eps_c));
    }
    Vec best;
    double best_obj = -1.0;
    for (const Vec& start : starts) {
        const Vec candidate =
            pgd_trajectory(jac_sum, g0, eps_c, k, steps, direction, start, trace);
        const double obj = pgd_objective(jac_sum, g0, candidate);
        if (obj > best_obj) {
            best_obj = obj;
            best = candidate;
        }
    }
    return best;
}

PerturbOutcome apply_method(const PerturbMethod& method, const BatchContext& ctx) {
    if (ctx.batch.empty()) throw std::invalid_argument("apply_method: empty batch");
    PerturbOutcome out;

    const auto require_plan = [&]() -> const PerturbationPlan& {
        if (!ctx.plan) throw ConfigError("apply_method: LPG rule without a plan");
        for (const std::size_t row : ctx.batch) {
            if (static_cast<std::size_t>(ctx.labels[row]) >= ctx.plan->num_classes()) {
                throw ConfigError("apply_method: class absent from plan");
            }
        }
        return *ctx.plan;
    };

    if (std::holds_alternative<NoPerturb>(method)) {
        out.seeds = ctx.logit_grads;
    } else if (const auto* clip = std::get_if<Clip>(&method)) {
        out.param_space = true;
        out.batch_grad = clip_grad(batch_mean_grad(ctx.net, ctx.caches, ctx.logit_grads), clip->tau);
    } else if (const auto* noise = std::get_if<Noise>(&method)) {
        if (!ctx.noise_rng) throw ConfigError("apply_method: noise rule without a noise stream");
        out.param_space = true;
        out.batch_grad =
            noise_grad(batch_mean_grad(ctx.net, ctx.caches, ctx.logit_grads), noise->sigma,
                       *ctx.noise_rng);
    } else if (const auto* sam = std::get_if<Sam>(&method)) {
        out.param_space = true;
        out.batch_grad = sam_grad(ctx.net, ctx.features, ctx.labels, ctx.batch, sam->rho);
    } else if (std::holds_alternative<LpgClosedForm>(method)) {
        const PerturbationPlan& plan = require_plan();
        out.seeds.reserve(ctx.batch.size());
        for (std::size_t i = 0; i < ctx.batch.size(); ++i) {
            const auto c = static_cast<std::size_t>(ctx.labels[ctx.batch[i]]);
            const Direction dir = plan.positive[c] ? Direction::positive : Direction::negative;
            out.seeds.push_back(lpg_closed_form(ctx.logit_grads[i], plan.eps_c[c], dir));
        }
    } else if (const auto* pgd = std::get_if<LpgPgd>(&method)) {
        const PerturbationPlan& plan = require_plan();
        out.seeds = ctx.logit_grads;
        // solve one delta per class present, in class-index order
        for (std::size_t c = 0; c < plan.num_classes(); ++c) {
            std::vector<const ForwardCache*> caches;
            std::vector<Vec> grads;
            std::vector<std::size_t> positions;
            for (std::size_t i = 0; i < ctx.batch.size(); ++i) {
                if (static_cast<std::size_t>(ctx.labels[ctx.batch[i]]) != c) continue;
                caches.push_back(&ctx.caches[i]);
                grads.push_back(ctx.logit_grads[i]);
                positions.push_back(i);
            }
            if (positions.empty() || plan.eps_c[c] == 0.0) continue;
            const Direction dir = plan.positive[c] ? Direction::positive : Direction::negative;
            const Vec delta =
                lpg_pgd(ctx.net, caches, grads, plan.eps_c[c], pgd->kappa, pgd->steps, dir);
            for (const std::size_t i : positions) out.seeds[i] = add(ctx.logit_grads[i], delta);
        }
    } else {
        throw std::logic_error("apply_method: unhandled method");
    }
    return out;
}

}  // namespace gplab
