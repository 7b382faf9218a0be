#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gplab/analysis.hpp"
#include "gplab/core_math.hpp"
#include "gplab/perturb.hpp"
#include "testutil.hpp"

using namespace gplab;

TEST_CASE("duality_check: zero perturbation is exactly zero") {
    Rng rng(1);
    auto inst = testutil::random_instance(rng, {4, 6, 3}, 1e-6);
    const DualityReport report = duality_check(inst.net, inst.x, inst.label, {0.0, 0.0, 0.0});
    CHECK(report.delta_norm == 0.0);
    CHECK(report.exact_norm == 0.0);
    CHECK(report.approx_norm == 0.0);
    CHECK(report.rel_error == 0.0);
}

TEST_CASE("duality_check: small shifts are first-order accurate and contract on halving") {
    Rng rng(2);
    int contracted = 0;
    for (int trial = 0; trial < 20; ++trial) {
        auto inst = testutil::random_instance(rng, {4, 6, 3}, 1e-6);
        Vec delta(3);
        for (double& v : delta) v = rng.normal();
        delta = scaled(delta, 1e-3 / norm(delta));
        const DualityReport report = duality_check(inst.net, inst.x, inst.label, delta);
        CHECK(report.rel_error <= 0.1);
        CHECK(report.exact_norm > 0.0);
        if (report.error_ratio <= 0.75) ++contracted;
    }
    CHECK(contracted >= 18);
}

TEST_CASE("finite_diff_param_grad: analytic linear net, step validation") {
    Rng rng(3);
    Mlp lin = init_mlp({3, 2}, rng);
    const Vec x{0.8, -1.1, 0.6};
    const int y = 1;
    const auto [u, cache] = forward(lin, x);
    const Vec h = ce_logit_grad(u, y);

    const ParamGrad fd = finite_diff_param_grad(lin, x, y, 1e-5);
    std::size_t k = 0;
    for (std::size_t j = 0; j < 2; ++j) {
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(fd[k++] == doctest::Approx(h[j] * x[i]).epsilon(1e-6));
        }
    }
    CHECK(fd[k++] == doctest::Approx(h[0]).epsilon(1e-6));
    CHECK(fd[k++] == doctest::Approx(h[1]).epsilon(1e-6));

    CHECK_THROWS_AS(finite_diff_param_grad(lin, x, y, 1e-8), std::invalid_argument);
    CHECK_THROWS_AS(finite_diff_param_grad(lin, x, y, 1e-2), std::invalid_argument);
}

TEST_CASE("finite_diff_param_grad: zero-weight net with symmetric logits") {
    Rng rng(4);
    Mlp net = init_mlp({2, 2}, rng);
    net.set_flat_params(Vec(net.param_count(), 0.0));
    // u = 0 -> p = (1/2, 1/2); dl/dW = h x^T with h = (1/2, -1/2) for y = 1
    const ParamGrad fd = finite_diff_param_grad(net, {1.0, 1.0}, 1, 1e-5);
    CHECK(fd[0] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(fd[1] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(fd[2] == doctest::Approx(-0.5).epsilon(1e-6));
    CHECK(fd[3] == doctest::Approx(-0.5).epsilon(1e-6));
}

TEST_CASE("pgd_grid_oracle: degenerate ball, rank-1 analytic optimum, validation") {
    Rng rng(5);
    auto inst = testutil::random_instance(rng, {3, 4, 2}, 1e-6);
    const auto [u, cache] = forward(inst.net, inst.x);
    const Vec h = ce_logit_grad(u, inst.label);
    const Matrix jac = assemble_jacobian(inst.net, cache);

    const auto zero = pgd_grid_oracle(jac, h, 0.0, 201, Direction::positive);
    CHECK(zero.best_delta == Vec{0.0, 0.0});
    CHECK(zero.best_objective == doctest::Approx(norm(matvec(jac, h))));

    // rank-1 Jacobian J = a w^T: the positive optimum aligns delta with w
    Matrix rank1(6, 2);
    const Vec a{1.0, -2.0, 0.5, 0.3, -1.1, 0.9};
    const Vec w{0.8, -0.6};
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t j = 0; j < 2; ++j) rank1(i, j) = a[i] * w[j];
    }
    const Vec h2{0.4, 0.2};
    const double eps = 0.5;
    const auto best = pgd_grid_oracle(rank1, h2, eps, 201, Direction::positive);
    // analytic: objective = |w.(h + delta)| ||a||, optimum delta = +-eps w/||w||
    const double analytic = (std::fabs(dot(w, h2)) + eps * norm(w)) * norm(a);
    CHECK(best.best_objective == doctest::Approx(analytic).epsilon(1e-3));
    const double cos = std::fabs(dot(best.best_delta, w)) / (norm(best.best_delta) * norm(w));
    CHECK(cos == doctest::Approx(1.0).epsilon(1e-3));

    CHECK_THROWS_AS(pgd_grid_oracle(jac, {0.1, 0.2, 0.3}, 0.5, 201, Direction::positive),
                    std::invalid_argument);
    CHECK_THROWS_AS(pgd_grid_oracle(jac, h, 0.5, 50, Direction::positive), std::invalid_argument);
}

TEST_CASE("pgd_grid_oracle contains the closed-form candidate up to resolution") {
    Rng rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        auto inst = testutil::random_instance(rng, {3, 5, 2}, 1e-6);
        const auto [u, cache] = forward(inst.net, inst.x);
        const Vec h = ce_logit_grad(u, inst.label);
        const Matrix jac = assemble_jacobian(inst.net, cache);
        const double eps = rng.uniform(0.1, 0.8);
        const auto grid = pgd_grid_oracle(jac, h, eps, 201, Direction::positive);
        const Vec closed = lpg_closed_form(h, eps, Direction::positive);
        const Vec delta_closed = sub(closed, h);
        const double closed_obj = perturbed_objective({jac}, {h}, delta_closed);
        // one grid cell of slack
        CHECK(grid.best_objective >= closed_obj - 2.0 * norm(matvec(jac, h)) * (eps / 100.0) -
                                         1e-9);
    }
}

TEST_CASE("lpg_pgd meets the grid within 5 percent on C = 2 instances") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        auto inst = testutil::random_instance(rng, {3, 5, 2}, 1e-6);
        const auto [u, cache] = forward(inst.net, inst.x);
        const Vec h = ce_logit_grad(u, inst.label);
        const Matrix jac = assemble_jacobian(inst.net, cache);
        const double eps = rng.uniform(0.05, 1.0);
        const Vec delta = lpg_pgd(inst.net, {&cache}, {h}, eps, 0.0, 3, Direction::positive);
        const double pgd_obj = perturbed_objective({jac}, {h}, delta);
        const auto grid = pgd_grid_oracle(jac, h, eps, 201, Direction::positive);
        CHECK(pgd_obj >= 0.95 * grid.best_objective);
    }
}

TEST_CASE("sam_taylor_check: ratios near 4, errors shrink with rho") {
    Rng rng(8);
    auto inst = testutil::random_instance(rng, {3, 6, 3}, 0.3);
    Matrix features(4, 3);
    std::vector<int> labels(4);
    for (std::size_t i = 0; i < 4; ++i) {
        auto s = testutil::random_instance(rng, {3, 6, 3}, 0.3);
        for (std::size_t k = 0; k < 3; ++k) features(i, k) = s.x[k];
        labels[i] = s.label;
    }
    const auto rows = sam_taylor_check(inst.net, features, labels, {0, 1, 2, 3},
                                       {2e-2, 1e-2, 5e-3});
    REQUIRE(rows.size() == 3);
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) CHECK(rows[i].error > rows[i + 1].error);
    for (const auto& row : rows) {
        CHECK(row.ratio >= 2.5);
        CHECK(row.ratio <= 6.0);
    }
}

TEST_CASE("sam two-pass on a quadratic loss is Taylor-exact") {
    // single linear layer with a squared-error head: the gradient is linear
    // in the parameters, so g(W + rho g_hat) = g + rho H g_hat exactly
    Rng rng(9);
    Mlp lin = init_mlp({3, 2}, rng);
    const Matrix features = [] {
        Matrix f(3, 3);
        f(0, 0) = 1.0; f(0, 1) = -0.5; f(0, 2) = 0.2;
        f(1, 0) = -0.3; f(1, 1) = 0.8; f(1, 2) = 1.1;
        f(2, 0) = 0.6; f(2, 1) = 0.4; f(2, 2) = -0.9;
        return f;
    }();
    const std::vector<Vec> targets{{1.0, 0.0}, {0.0, 1.0}, {0.5, 0.5}};

    auto quad_grad = [&](const Mlp& net) {
        Vec g(net.param_count(), 0.0);
        for (std::size_t i = 0; i < 3; ++i) {
            Vec x{features(i, 0), features(i, 1), features(i, 2)};
            auto [u, cache] = forward(net, x);
            axpy(1.0, backward_from_logit_grad(net, cache, sub(u, targets[i])), g);
        }
        for (double& v : g) v /= 3.0;
        return g;
    };

    const Vec g = quad_grad(lin);
    const Vec g_hat = scaled(g, 1.0 / norm(g));
    const Vec saved = lin.flat_params();

    const double t = 1e-5;
    Vec up = saved, down = saved;
    axpy(t, g_hat, up);
    axpy(-t, g_hat, down);
    lin.set_flat_params(up);
    const Vec gu = quad_grad(lin);
    lin.set_flat_params(down);
    const Vec gd = quad_grad(lin);
    lin.set_flat_params(saved);
    const Vec hv = scaled(sub(gu, gd), 1.0 / (2.0 * t));

    const double rho = 1e-2;
    Vec moved = saved;
    axpy(rho, g_hat, moved);
    lin.set_flat_params(moved);
    const Vec sam = quad_grad(lin);
    lin.set_flat_params(saved);

    Vec predicted = g;
    axpy(rho, hv, predicted);
    CHECK(norm(sub(sam, predicted)) <= 1e-8);
}
