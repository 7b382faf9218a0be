#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gplab/analysis.hpp"
#include "gplab/core_math.hpp"
#include "gplab/errors.hpp"
#include "gplab/perturb.hpp"
#include "testutil.hpp"

using namespace gplab;

TEST_CASE("clip_grad examples and properties") {
    const Vec clipped = clip_grad({3.0, 4.0}, 1.0);
    CHECK(clipped[0] == doctest::Approx(0.6).epsilon(1e-14));
    CHECK(clipped[1] == doctest::Approx(0.8).epsilon(1e-14));
    CHECK(clip_grad({3.0, 4.0}, 10.0) == Vec{3.0, 4.0});
    CHECK(clip_grad({0.0, 0.0}, 1.0) == Vec{0.0, 0.0});
    CHECK_THROWS_AS(clip_grad({1.0}, 0.0), std::invalid_argument);

    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.uniform_int(20);
        Vec g(n);
        for (double& v : g) v = rng.uniform(-50.0, 50.0);
        const double tau = rng.uniform(1e-3, 20.0);
        const Vec out = clip_grad(g, tau);
        CHECK(norm(out) <= tau + 1e-12);
        if (norm(g) > 0.0) {
            CHECK(testutil::cosine(out, g) == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("noise_grad: zero sigma identity, determinism, Monte Carlo scale") {
    Rng rng(6);
    const Vec g{1.0, -2.0, 0.5};
    CHECK(noise_grad(g, 0.0, rng) == g);

    Rng a(77), b(77);
    CHECK(noise_grad(g, 0.3, a) == noise_grad(g, 0.3, b));

    // E ||g~ - g||^2 / dim ~= sigma^2
    Rng mc(8);
    const std::size_t dim = 1000;
    const Vec zero(dim, 0.0);
    const double sigma = 0.1;
    double acc = 0.0;
    const int draws = 1000;
    for (int i = 0; i < draws; ++i) {
        const Vec noisy = noise_grad(zero, sigma, mc);
        acc += dot(noisy, noisy) / static_cast<double>(dim);
    }
    CHECK(acc / draws == doctest::Approx(sigma * sigma).epsilon(0.10));
}

namespace {
struct SamFixture {
    Mlp net;
    Matrix features{4, 3};
    std::vector<int> labels;
    std::vector<std::size_t> batch{0, 1, 2, 3};
};

SamFixture make_sam_fixture(Rng& rng, double margin) {
    SamFixture f;
    auto inst = testutil::random_instance(rng, {3, 6, 3}, margin);
    f.net = inst.net;
    f.labels.resize(4);
    for (std::size_t i = 0; i < 4; ++i) {
        auto s = testutil::random_instance(rng, {3, 6, 3}, margin);
        for (std::size_t k = 0; k < 3; ++k) f.features(i, k) = s.x[k];
        f.labels[i] = s.label;
    }
    return f;
}

Vec fixture_batch_grad(const SamFixture& f) {
    Vec g(f.net.param_count(), 0.0);
    for (const std::size_t row : f.batch) {
        Vec x{f.features(row, 0), f.features(row, 1), f.features(row, 2)};
        auto [u, cache] = forward(f.net, x);
        axpy(1.0, backward_from_logit_grad(f.net, cache, ce_logit_grad(u, f.labels[row])), g);
    }
    for (double& v : g) v /= 4.0;
    return g;
}
}  // namespace

TEST_CASE("sam_grad: rho -> 0 limit and bit-exact restore") {
    Rng rng(9);
    SamFixture f = make_sam_fixture(rng, 0.2);
    const Vec saved = f.net.flat_params();
    const Vec g = fixture_batch_grad(f);

    const Vec sam_tiny = sam_grad(f.net, f.features, f.labels, f.batch, 1e-8);
    CHECK(norm(sub(sam_tiny, g)) <= 1e-6 * norm(g));
    CHECK(f.net.flat_params() == saved);

    const Vec sam_big = sam_grad(f.net, f.features, f.labels, f.batch, 0.05);
    CHECK(f.net.flat_params() == saved);
    CHECK(norm(sub(sam_big, g)) > 0.0);
}

TEST_CASE("sam_grad: quadratic surrogate error shrinks ~4x when rho halves") {
    Rng rng(10);
    SamFixture f = make_sam_fixture(rng, 0.3);
    const auto rows = sam_taylor_check(f.net, f.features, f.labels, f.batch, {1e-2});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].ratio >= 2.5);
    CHECK(rows[0].ratio <= 6.0);
}

TEST_CASE("sam_grad: zero gradient is returned unchanged and flagged") {
    Rng rng(11);
    Mlp net = init_mlp({2, 2}, rng);
    net.set_flat_params(Vec(net.param_count(), 0.0));
    Matrix features(2, 2);
    features(0, 0) = features(0, 1) = 1.0;
    features(1, 0) = features(1, 1) = 1.0;
    // identical features with opposite labels at zero weights: the two
    // per-sample CE gradients cancel exactly
    const std::vector<int> labels{0, 1};
    bool degenerate = false;
    const Vec g = sam_grad(net, features, labels, {0, 1}, 0.05, &degenerate);
    CHECK(degenerate);
    CHECK(norm(g) == 0.0);
}

TEST_CASE("lpg_closed_form examples") {
    const Vec h{-0.5, 0.5};
    const Vec up = lpg_closed_form(h, 0.2, Direction::positive);
    const double scale = 1.0 + 0.2 / std::sqrt(0.5);
    CHECK(up[0] == doctest::Approx(-0.5 * scale).epsilon(1e-12));
    CHECK(up[1] == doctest::Approx(0.5 * scale).epsilon(1e-12));

    CHECK(lpg_closed_form(h, 0.0, Direction::positive) == h);
    CHECK(lpg_closed_form(h, 0.0, Direction::negative) == h);

    const Vec floored = lpg_closed_form({0.3, -0.3, 0.0}, norm(Vec{0.3, -0.3, 0.0}),
                                        Direction::negative);
    CHECK(floored == Vec{0.0, 0.0, 0.0});

    const Vec zero{0.0, 0.0};
    CHECK(lpg_closed_form(zero, 1.0, Direction::positive) == zero);
    CHECK_THROWS_AS(lpg_closed_form(h, -0.1, Direction::positive), std::invalid_argument);
}

TEST_CASE("lpg_closed_form norm change is exactly +-alpha (property, 1000 pairs)") {
    Rng rng(12);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t c = 2 + rng.uniform_int(9);
        Vec h(c);
        for (double& v : h) v = rng.uniform(-3.0, 3.0);
        const double hn = norm(h);
        double alpha = rng.uniform(0.0, 2.0);
        const bool force_floor = trial % 5 == 0;
        if (force_floor) alpha = hn * rng.uniform(1.0, 3.0);
        const Direction dir = trial % 2 == 0 ? Direction::positive : Direction::negative;
        const Vec out = lpg_closed_form(h, alpha, dir);

        if (dir == Direction::negative && alpha >= hn) {
            CHECK(out == Vec(c, 0.0));
            continue;
        }
        const double expected = dir == Direction::positive ? hn + alpha : hn - alpha;
        CHECK(std::fabs(norm(out) - expected) <= 1e-12 * std::max(1.0, expected));
        if (norm(out) > 0.0) {
            CHECK(std::fabs(testutil::cosine(out, h) - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("perturbed_objective: delta = 0, annihilation, backward consistency") {
    Rng rng(13);
    auto inst = testutil::random_instance(rng, {3, 5, 4}, 1e-6);
    const auto [u, cache] = forward(inst.net, inst.x);
    const Vec h = ce_logit_grad(u, inst.label);
    const Matrix jac = assemble_jacobian(inst.net, cache);

    const Vec zero(4, 0.0);
    CHECK(perturbed_objective({jac}, {h}, zero) ==
          doctest::Approx(norm(backward_from_logit_grad(inst.net, cache, h))).epsilon(1e-14));
    CHECK(perturbed_objective({jac}, {h}, scaled(h, -1.0)) <= 1e-12);

    Vec delta(4);
    for (double& v : delta) v = rng.normal();
    const double direct =
        norm(backward_from_logit_grad(inst.net, cache, add(h, delta)));
    CHECK(std::fabs(perturbed_objective({jac}, {h}, delta) - direct) <= 1e-10);

    CHECK_THROWS_AS(perturbed_objective({}, {}, zero), std::invalid_argument);
}

TEST_CASE("lpg_pgd: degenerate ball, sphere landing, iterate feasibility") {
    Rng rng(14);
    auto inst = testutil::random_instance(rng, {3, 5, 2}, 1e-6);
    const auto [u, cache] = forward(inst.net, inst.x);
    const Vec h = ce_logit_grad(u, inst.label);

    CHECK(lpg_pgd(inst.net, {&cache}, {h}, 0.0, 0.0, 3, Direction::positive) == Vec{0.0, 0.0});

    // T=1 with a large step lands on the eps sphere
    const Vec one_step = lpg_pgd(inst.net, {&cache}, {h}, 0.5, 100.0, 1, Direction::positive);
    CHECK(norm(one_step) == doctest::Approx(0.5).epsilon(1e-9));

    std::vector<Vec> trace;
    (void)lpg_pgd(inst.net, {&cache}, {h}, 0.7, 0.0, 3, Direction::positive, &trace);
    CHECK(!trace.empty());
    for (const Vec& d : trace) CHECK(norm(d) <= 0.7 + 1e-12);

    CHECK_THROWS_AS(lpg_pgd(inst.net, {&cache}, {h}, -1.0, 0.0, 3, Direction::positive),
                    std::invalid_argument);
    CHECK_THROWS_AS(lpg_pgd(inst.net, {&cache}, {h}, 1.0, 0.0, 0, Direction::positive),
                    std::invalid_argument);
}

TEST_CASE("lpg_pgd: first ascent step does not decrease the objective (>= 90/100)") {
    Rng rng(15);
    int non_decreasing = 0;
    for (int trial = 0; trial < 100; ++trial) {
        auto inst = testutil::random_instance(rng, {3, 5, 3}, 1e-6);
        const auto [u, cache] = forward(inst.net, inst.x);
        const Vec h = ce_logit_grad(u, inst.label);
        const Matrix jac = assemble_jacobian(inst.net, cache);
        const double eps = rng.uniform(0.1, 1.0);
        std::vector<Vec> trace;
        (void)lpg_pgd(inst.net, {&cache}, {h}, eps, eps / 10.0, 1, Direction::positive, &trace);
        // trace entry 0 is the first iterate of the from-zero trajectory
        const double before = perturbed_objective({jac}, {h}, Vec(3, 0.0));
        const double after = perturbed_objective({jac}, {h}, trace.at(0));
        if (after >= before) ++non_decreasing;
    }
    CHECK(non_decreasing >= 90);
}

TEST_CASE("lpg_pgd negative direction reduces the aggregate norm") {
    Rng rng(16);
    for (int trial = 0; trial < 20; ++trial) {
        auto inst = testutil::random_instance(rng, {3, 6, 4}, 1e-6);
        const auto [u, cache] = forward(inst.net, inst.x);
        const Vec h = ce_logit_grad(u, inst.label);
        const Matrix jac = assemble_jacobian(inst.net, cache);
        const double eps = rng.uniform(0.05, 0.5);
        const Vec delta = lpg_pgd(inst.net, {&cache}, {h}, eps, 0.0, 3, Direction::negative);
        CHECK(norm(delta) <= eps + 1e-12);
        CHECK(perturbed_objective({jac}, {h}, delta) <=
              perturbed_objective({jac}, {h}, Vec(4, 0.0)) + 1e-12);
    }
}

namespace {
struct BatchFixture {
    Mlp net;
    Matrix features;
    std::vector<int> labels;
    std::vector<std::size_t> batch;
    std::vector<ForwardCache> caches;
    std::vector<Vec> logit_grads;
    PerturbationPlan plan;

    BatchFixture(std::uint64_t seed, std::size_t n, double eps, double deps) : features(n, 3) {
        Rng rng(seed);
        Rng init = rng.substream("init");
        net = init_mlp({3, 6, 3}, init);
        labels.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < 3; ++k) features(i, k) = rng.normal();
            labels[i] = static_cast<int>(rng.uniform_int(3));
            batch.push_back(i);
        }
        for (std::size_t i = 0; i < n; ++i) {
            auto [u, cache] = forward(net, Vec{features(i, 0), features(i, 1), features(i, 2)});
            caches.push_back(std::move(cache));
            logit_grads.push_back(ce_logit_grad(u, labels[i]));
        }
        ClassStats stats = make_class_stats({n / 3 + 1, n / 3 + 1, n / 3 + 1});
        PlanConfig cfg;
        cfg.mode = SplitMode::accuracy;
        cfg.eps = eps;
        cfg.delta_eps = deps;
        plan = build_plan(stats, cfg);
    }

    BatchContext ctx(Rng* noise = nullptr) {
        return BatchContext{net,    features,    labels, batch,
                            caches, logit_grads, &plan,  noise};
    }
};
}  // namespace

TEST_CASE("apply_method: NoPerturb is the identity dispatch") {
    BatchFixture f(21, 9, 0.1, 0.2);
    const PerturbOutcome out = apply_method(NoPerturb{}, f.ctx());
    CHECK(!out.param_space);
    CHECK(out.seeds == f.logit_grads);
}

TEST_CASE("apply_method: closed form with all eps_c = 0 equals NoPerturb bit-exactly") {
    BatchFixture f(22, 9, 0.0, 0.0);
    const PerturbOutcome a = apply_method(NoPerturb{}, f.ctx());
    const PerturbOutcome b = apply_method(LpgClosedForm{}, f.ctx());
    CHECK(a.seeds == b.seeds);
}

TEST_CASE("apply_method: closed form scales per-sample norms by membership") {
    BatchFixture f(23, 12, 0.15, 0.1);
    const PerturbOutcome out = apply_method(LpgClosedForm{}, f.ctx());
    for (std::size_t i = 0; i < f.batch.size(); ++i) {
        const auto c = static_cast<std::size_t>(f.labels[i]);
        const double hn = norm(f.logit_grads[i]);
        if (hn == 0.0) continue;
        const double out_n = norm(out.seeds[i]);
        if (f.plan.positive[c]) {
            CHECK(out_n == doctest::Approx(hn + f.plan.eps_c[c]).epsilon(1e-12));
        } else {
            CHECK(out_n == doctest::Approx(std::max(0.0, hn - f.plan.eps_c[c])).epsilon(1e-12));
        }
    }
}

TEST_CASE("apply_method: clip with a huge threshold matches the unperturbed mean gradient") {
    BatchFixture f(24, 8, 0.1, 0.2);
    const PerturbOutcome none = apply_method(NoPerturb{}, f.ctx());
    const Vec plain = batch_mean_grad(f.net, f.caches, none.seeds);
    const PerturbOutcome clipped = apply_method(Clip{1e9}, f.ctx());
    CHECK(clipped.param_space);
    CHECK(clipped.batch_grad == plain);
}

TEST_CASE("apply_method: LPG without a plan and labels outside the plan are config errors") {
    BatchFixture f(25, 6, 0.1, 0.2);
    BatchContext no_plan = f.ctx();
    no_plan.plan = nullptr;
    CHECK_THROWS_AS(apply_method(LpgClosedForm{}, no_plan), ConfigError);

    f.plan.positive.resize(2);
    f.plan.eps_c.resize(2);
    CHECK_THROWS_AS(apply_method(LpgClosedForm{}, f.ctx()), ConfigError);
}

TEST_CASE("apply_method: conjecture instrumentation on one batch (closed form)") {
    // P_a classes must gain class-mean gradient norm, N_a classes must lose it
    BatchFixture f(26, 30, 0.2, 0.1);
    // force a nontrivial split: classes 0 and 2 positive, class 1 negative
    f.plan.positive = {true, false, true};
    const PerturbOutcome out = apply_method(LpgClosedForm{}, f.ctx());
    for (std::size_t c = 0; c < 3; ++c) {
        Vec base(f.net.param_count(), 0.0);
        Vec pert(f.net.param_count(), 0.0);
        std::size_t n_c = 0;
        for (std::size_t i = 0; i < f.batch.size(); ++i) {
            if (static_cast<std::size_t>(f.labels[i]) != c) continue;
            axpy(1.0, backward_from_logit_grad(f.net, f.caches[i], f.logit_grads[i]), base);
            axpy(1.0, backward_from_logit_grad(f.net, f.caches[i], out.seeds[i]), pert);
            ++n_c;
        }
        if (n_c == 0 || norm(base) <= 1e-12) continue;
        if (f.plan.positive[c]) {
            CHECK(norm(pert) >= norm(base));
        } else {
            CHECK(norm(pert) <= norm(base));
        }
    }
}
