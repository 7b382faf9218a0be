#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gplab/core_math.hpp"
#include "gplab/rng.hpp"
#include "testutil.hpp"

using namespace gplab;

TEST_CASE("softmax symmetry and analytic values") {
    CHECK(softmax({0.0, 0.0}) == Vec{0.5, 0.5});
    const Vec thirds = softmax({1.0, 1.0, 1.0});
    for (const double p : thirds) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    const Vec p = softmax({std::log(2.0), 0.0});
    CHECK(p[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("softmax rejects bad input") {
    CHECK_THROWS_AS(softmax({1.0}), std::invalid_argument);
    CHECK_THROWS_AS(softmax({1.0, std::nan("")}), std::invalid_argument);
    CHECK_THROWS_AS(softmax({1.0, HUGE_VAL}), std::invalid_argument);
}

TEST_CASE("softmax sums to one and is shift invariant (property)") {
    Rng rng(42);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t c = 2 + rng.uniform_int(8);
        Vec u(c);
        for (double& v : u) v = rng.uniform(-30.0, 30.0);
        const Vec p = softmax(u);
        double sum = 0.0;
        for (const double x : p) {
            CHECK(x > 0.0);
            sum += x;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

        const double shift = rng.uniform(-5.0, 5.0);
        Vec shifted = u;
        for (double& v : shifted) v += shift;
        const Vec q = softmax(shifted);
        for (std::size_t i = 0; i < c; ++i) CHECK(std::fabs(p[i] - q[i]) <= 1e-12);
    }
}

TEST_CASE("cross entropy analytic values") {
    CHECK(cross_entropy_loss({0.0, 0.0}, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK(cross_entropy_loss({10.0, 0.0}, 0) ==
          doctest::Approx(-std::log(1.0 / (1.0 + std::exp(-10.0)))).epsilon(1e-10));
    CHECK_THROWS_AS(cross_entropy_loss({0.0, 0.0}, 2), std::out_of_range);
    CHECK_THROWS_AS(cross_entropy_loss({0.0, 0.0}, -1), std::out_of_range);
}

TEST_CASE("cross entropy matches a long-double re-evaluation") {
    Rng rng(7);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t c = 2 + rng.uniform_int(10);
        Vec u(c);
        for (double& v : u) v = rng.uniform(-12.0, 12.0);
        const int y = static_cast<int>(rng.uniform_int(c));

        long double denom = 0.0L;
        for (const double v : u) denom += expl(static_cast<long double>(v));
        const long double expected = -logl(expl(static_cast<long double>(u[y])) / denom);
        const double got = cross_entropy_loss(u, y);
        CHECK(std::fabs(got - static_cast<double>(expected)) <=
              1e-12 * std::max(1.0, std::fabs(static_cast<double>(expected))));
    }
}

TEST_CASE("ce_logit_grad frozen finite-difference case and limits") {
    // central differences of cross_entropy_loss at u = [0, 0], y = 0 give
    // (-0.5, 0.5); frozen here
    const Vec g = ce_logit_grad({0.0, 0.0}, 0);
    CHECK(g[0] == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(g[1] == doctest::Approx(0.5).epsilon(1e-12));

    const Vec tiny = ce_logit_grad({20.0, 0.0}, 0);
    CHECK(std::fabs(tiny[0]) <= 1e-8);
    CHECK(std::fabs(tiny[1]) <= 1e-8);
}

TEST_CASE("ce_logit_grad matches finite differences (property)") {
    Rng rng(11);
    for (int trial = 0; trial < 120; ++trial) {
        const std::size_t c = 2 + rng.uniform_int(6);
        Vec u(c);
        for (double& v : u) v = rng.uniform(-4.0, 4.0);
        const int y = static_cast<int>(rng.uniform_int(c));
        const Vec g = ce_logit_grad(u, y);

        double sum = 0.0;
        for (const double x : g) sum += x;
        CHECK(std::fabs(sum) <= 1e-12);
        CHECK(g[y] < 0.0);

        const double step = 1e-6;
        for (std::size_t j = 0; j < c; ++j) {
            Vec up = u, down = u;
            up[j] += step;
            down[j] -= step;
            const double fd = (cross_entropy_loss(up, y) - cross_entropy_loss(down, y)) /
                              (2.0 * step);
            const double scale = std::max({std::fabs(fd), std::fabs(g[j]), 1e-6});
            CHECK(std::fabs(fd - g[j]) / scale <= 1e-6);
        }
    }
}

TEST_CASE("ce_logit_hessian analytic case, row sums, symmetry") {
    const Matrix h = ce_logit_hessian({0.0, 0.0});
    CHECK(h(0, 0) == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(h(0, 1) == doctest::Approx(-0.25).epsilon(1e-14));
    CHECK(h(1, 0) == doctest::Approx(-0.25).epsilon(1e-14));
    CHECK(h(1, 1) == doctest::Approx(0.25).epsilon(1e-14));

    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t c = 2 + rng.uniform_int(6);
        Vec u(c);
        for (double& v : u) v = rng.uniform(-5.0, 5.0);
        const Matrix hess = ce_logit_hessian(u);
        const Vec ones(c, 1.0);
        CHECK(norm_inf(matvec(hess, ones)) <= 1e-12);
        for (std::size_t i = 0; i < c; ++i) {
            for (std::size_t j = 0; j < c; ++j) CHECK(hess(i, j) == hess(j, i));
        }
    }
}

TEST_CASE("ce_logit_hessian matches second-order finite differences, C = 3") {
    Rng rng(17);
    for (int trial = 0; trial < 40; ++trial) {
        Vec u(3);
        for (double& v : u) v = rng.uniform(-3.0, 3.0);
        const int y = static_cast<int>(rng.uniform_int(3));
        const Matrix hess = ce_logit_hessian(u);
        const double step = 1e-4;
        for (std::size_t j = 0; j < 3; ++j) {
            Vec up = u, down = u;
            up[j] += step;
            down[j] -= step;
            const Vec fd = scaled(sub(ce_logit_grad(up, y), ce_logit_grad(down, y)),
                                  1.0 / (2.0 * step));
            for (std::size_t i = 0; i < 3; ++i) {
                const double scale = std::max({std::fabs(fd[i]), std::fabs(hess(i, j)), 1e-4});
                CHECK(std::fabs(fd[i] - hess(i, j)) / scale <= 1e-5);
            }
        }
    }
}

TEST_CASE("ce_logit_hessian is PSD (power iteration on the smallest eigenvalue)") {
    Rng rng(19);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t c = 2 + rng.uniform_int(5);
        Vec u(c);
        for (double& v : u) v = rng.uniform(-6.0, 6.0);
        const Matrix hess = ce_logit_hessian(u);

        // lambda_max via power iteration, then the smallest eigenvalue as
        // lambda_max - (largest eigenvalue of lambda_max*I - H)
        auto power = [&](auto&& mv) {
            Vec v(c);
            for (double& x : v) x = rng.normal();
            double lambda = 0.0;
            for (int it = 0; it < 300; ++it) {
                v = mv(v);
                const double n = norm(v);
                if (n == 0.0) return 0.0;
                v = scaled(v, 1.0 / n);
                lambda = dot(v, mv(v));
            }
            return lambda;
        };
        const double lmax = power([&](const Vec& v) { return matvec(hess, v); });
        const double shifted = power([&](const Vec& v) {
            Vec out = scaled(v, lmax);
            axpy(-1.0, matvec(hess, v), out);
            return out;
        });
        const double lmin = lmax - shifted;
        CHECK(lmin >= -1e-10);
    }
}

TEST_CASE("l2_project examples") {
    const Vec scaled_down = l2_project({3.0, 4.0}, 1.0);
    CHECK(scaled_down[0] == doctest::Approx(0.6).epsilon(1e-14));
    CHECK(scaled_down[1] == doctest::Approx(0.8).epsilon(1e-14));
    CHECK(l2_project({0.1, 0.0}, 1.0) == Vec{0.1, 0.0});
    CHECK(l2_project({5.0, -2.0, 1.0}, 0.0) == Vec{0.0, 0.0, 0.0});
    CHECK_THROWS_AS(l2_project({1.0}, -0.5), std::invalid_argument);
}

TEST_CASE("l2_project is idempotent bit-for-bit (property)") {
    Rng rng(23);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 1 + rng.uniform_int(12);
        Vec v(n);
        for (double& x : v) x = rng.uniform(-100.0, 100.0);
        const double r = rng.uniform(0.0, 20.0);
        const Vec once = l2_project(v, r);
        CHECK(norm(once) <= r + 1e-12);
        CHECK(l2_project(once, r) == once);
    }
}

TEST_CASE("rng determinism and substream independence") {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng parent(9);
    Rng s1 = parent.substream("data");
    Rng s2 = parent.substream("noise");
    CHECK(s1.seed() != s2.seed());
    // drawing from one substream does not shift a freshly derived sibling
    Rng p2(9);
    Rng t1 = p2.substream("data");
    for (int i = 0; i < 50; ++i) (void)p2.substream("noise").next_u64();
    for (int i = 0; i < 50; ++i) CHECK(s1.next_u64() == t1.next_u64());
}

TEST_CASE("rng normal moments sanity") {
    Rng rng(31);
    double sum = 0.0, sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        sq += x * x;
    }
    CHECK(std::fabs(sum / n) < 0.02);
    CHECK(sq / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("rng uniform_int is in range and hits all residues") {
    Rng rng(37);
    std::vector<int> hits(7, 0);
    for (int i = 0; i < 7000; ++i) ++hits[rng.uniform_int(7)];
    for (const int h : hits) CHECK(h > 800);
}
