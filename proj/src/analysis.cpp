#include "gplab/analysis.hpp"

#include <cmath>
#include <stdexcept>

#include "gplab/core_math.hpp"

namespace gplab {

namespace {
double rel_error_at(const Mlp& net, const ForwardCache& cache, const Vec& logits, int label,
                    const Vec& delta, double* exact_norm, double* approx_norm) {
    const Vec h0 = ce_logit_grad(logits, label);
    const Vec h1 = ce_logit_grad(add(logits, delta), label);
    const Vec exact = sub(backward_from_logit_grad(net, cache, h1),
                          backward_from_logit_grad(net, cache, h0));
    const Vec approx =
        backward_from_logit_grad(net, cache, matvec(ce_logit_hessian(logits), delta));
    const double en = norm(exact);
    if (exact_norm) *exact_norm = en;
    if (approx_norm) *approx_norm = norm(approx);
    if (en == 0.0) return 0.0;
    return norm(sub(exact, approx)) / en;
}
}  // namespace

DualityReport duality_check(const Mlp& net, const Vec& x, int label, const Vec& delta_lpl) {
    const auto [logits, cache] = forward(net, x);
    DualityReport report;
    report.delta_norm = norm(delta_lpl);
    if (report.delta_norm == 0.0) return report;  // exact and approx both zero

    report.rel_error =
        rel_error_at(net, cache, logits, label, delta_lpl, &report.exact_norm, &report.approx_norm);
    report.halved_rel_error =
        rel_error_at(net, cache, logits, label, scaled(delta_lpl, 0.5), nullptr, nullptr);
    report.error_ratio =
        report.rel_error > 0.0 ? report.halved_rel_error / report.rel_error : 0.0;
    return report;
}

ParamGrad finite_diff_param_grad(Mlp& net, const Vec& x, int label, double step) {
    if (step < 1e-7 || step > 1e-3) {
        throw std::invalid_argument("finite_diff_param_grad: step outside [1e-7, 1e-3]");
    }
    const Vec saved = net.flat_params();
    Vec w = saved;
    ParamGrad grad(saved.size(), 0.0);
    for (std::size_t k = 0; k < saved.size(); ++k) {
        w[k] = saved[k] + step;
        net.set_flat_params(w);
        const double up = cross_entropy_loss(forward_logits(net, x), label);
        w[k] = saved[k] - step;
        net.set_flat_params(w);
        const double down = cross_entropy_loss(forward_logits(net, x), label);
        w[k] = saved[k];
        grad[k] = (up - down) / (2.0 * step);
    }
    net.set_flat_params(saved);
    return grad;
}

GridOracleResult pgd_grid_oracle(const Matrix& jacobian, const Vec& h, double eps_c,
                                 int grid_n, Direction direction) {
    if (h.size() != 2 || jacobian.cols != 2) {
        throw std::invalid_argument("pgd_grid_oracle: only C = 2 is supported");
    }
    if (grid_n < 101) throw std::invalid_argument("pgd_grid_oracle: grid_n must be >= 101");
    if (eps_c < 0.0) throw std::invalid_argument("pgd_grid_oracle: negative eps_c");

    const Vec base = matvec(jacobian, h);
    GridOracleResult best;
    best.best_delta = Vec(2, 0.0);
    best.best_objective = norm(base);
    if (eps_c == 0.0) return best;

    const double step = 2.0 * eps_c / static_cast<double>(grid_n - 1);
    for (int i = 0; i < grid_n; ++i) {
        const double dx = -eps_c + step * static_cast<double>(i);
        for (int j = 0; j < grid_n; ++j) {
            const double dy = -eps_c + step * static_cast<double>(j);
            if (dx * dx + dy * dy > eps_c * eps_c) continue;
            double obj = 0.0;
            for (std::size_t r = 0; r < jacobian.rows; ++r) {
                const double t = base[r] + jacobian(r, 0) * dx + jacobian(r, 1) * dy;
                obj += t * t;
            }
            obj = std::sqrt(obj);
            const bool better = direction == Direction::positive ? obj > best.best_objective
                                                                 : obj < best.best_objective;
            if (better) {
                best.best_objective = obj;
                best.best_delta = Vec{dx, dy};
            }
        }
    }
    return best;
}

namespace {
Vec ce_batch_mean_grad(const Mlp& net, const Matrix& features, const std::vector<int>& labels,
                       const std::vector<std::size_t>& batch) {
    Vec grad(net.param_count(), 0.0);
    for (const std::size_t row : batch) {
        Vec x(features.data.begin() + row * features.cols,
              features.data.begin() + (row + 1) * features.cols);
        auto [u, cache] = forward(net, x);
        axpy(1.0, backward_from_logit_grad(net, cache, ce_logit_grad(u, labels[row])), grad);
    }
    for (double& v : grad) v /= static_cast<double>(batch.size());
    return grad;
}
}  // namespace

std::vector<SamTaylorRow> sam_taylor_check(Mlp& net, const Matrix& features,
                                           const std::vector<int>& labels,
                                           const std::vector<std::size_t>& batch,
                                           const Vec& rho_list, double fd_step) {
    if (batch.empty()) throw std::invalid_argument("sam_taylor_check: empty batch");
    const Vec g = ce_batch_mean_grad(net, features, labels, batch);
    const double gn = norm(g);
    std::vector<SamTaylorRow> rows;
    if (gn == 0.0) return rows;  // no ascent direction; nothing to check

    const Vec g_hat = scaled(g, 1.0 / gn);
    const Vec saved = net.flat_params();

    // H g_hat by central differences of the batch gradient
    Vec moved = saved;
    axpy(fd_step, g_hat, moved);
    net.set_flat_params(moved);
    const Vec g_up = ce_batch_mean_grad(net, features, labels, batch);
    moved = saved;
    axpy(-fd_step, g_hat, moved);
    net.set_flat_params(moved);
    const Vec g_down = ce_batch_mean_grad(net, features, labels, batch);
    net.set_flat_params(saved);
    const Vec hv = scaled(sub(g_up, g_down), 1.0 / (2.0 * fd_step));

    auto error_at = [&](double rho) {
        const Vec sam = sam_grad(net, features, labels, batch, rho);
        Vec predicted = g;
        axpy(rho, hv, predicted);
        return norm(sub(sam, predicted));
    };

    for (const double rho : rho_list) {
        if (rho <= 0.0) throw std::invalid_argument("sam_taylor_check: rho must be positive");
        SamTaylorRow row;
        row.rho = rho;
        row.error = error_at(rho);
        row.error_half = error_at(rho / 2.0);
        row.ratio = row.error_half > 0.0 ? row.error / row.error_half : 0.0;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace gplab
