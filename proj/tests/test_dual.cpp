#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <span>
#include <vector>

#include "sdsmlab/dual.hpp"
#include "sdsmlab/kernels.hpp"
#include "sdsmlab/measures.hpp"
#include "sdsmlab/particle.hpp"
#include "sdsmlab/quadrature.hpp"
#include "sdsmlab/rng.hpp"
#include "sdsmlab/stats.hpp"

using namespace sdsmlab;

namespace {

double rel_err(double got, double want) {
    return std::fabs(got - want) / std::max(1e-300, std::fabs(want));
}

double dist2(std::span<const double> x, std::span<const double> y) {
    double s = 0;
    for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - y[k]) * (x[k] - y[k]);
    return s;
}

// Plain product of densities, no log accumulation. Reference path for the
// fidelity checks: any simplification the engine performs must reproduce
// this value at every point.
double direct_value(const DualState& st, std::span<const double> points) {
    const auto d = static_cast<std::size_t>(st.dim);
    double v = std::exp(st.log_prefactor);
    for (std::size_t k = 0; k < st.coords.size(); ++k) {
        const auto x = points.subspan(k * d, d);
        for (const auto& f : st.coords[k]) v *= gaussian_density_r2(f.s, dist2(x, f.z), st.dim);
    }
    return v;
}

ProductFunction random_function(int dim, std::size_t m, RngStream& rng) {
    ProductFunction f;
    f.dim = dim;
    for (std::size_t k = 0; k < m; ++k) {
        GaussianFactor g;
        g.s = 0.1 + 3.0 * rng.uniform();
        g.z.resize(static_cast<std::size_t>(dim));
        for (auto& c : g.z) c = 4.0 * rng.uniform() - 2.0;
        f.factors.push_back(std::move(g));
    }
    return f;
}

std::vector<double> random_points(int dim, std::size_t count, RngStream& rng) {
    std::vector<double> pts(count * static_cast<std::size_t>(dim));
    for (auto& c : pts) c = 6.0 * rng.uniform() - 3.0;
    return pts;
}

double phi1d(double s, double x) { return gaussian_density_r2(s, x * x, 1); }

}  // namespace

TEST_CASE("apply_jump: closed-form merges of two factors") {
    for (int dim = 1; dim <= 3; ++dim) {
        CAPTURE(dim);
        const std::vector<double> c(static_cast<std::size_t>(dim), 0.37);

        // Same center: bandwidth uv/(u+v), prefactor (2*pi*(u+v))^(-d/2).
        const double u = 0.7, v = 1.3;
        ProductFunction f;
        f.dim = dim;
        f.factors = {GaussianFactor{u, c}, GaussianFactor{v, c}};
        auto merged = apply_jump(dual_from_function(f), 0, 1);
        REQUIRE(merged.count() == 1);
        REQUIRE(merged.coords[0].size() == 1);
        CHECK(rel_err(merged.coords[0][0].s, u * v / (u + v)) < 1e-14);
        for (int k = 0; k < dim; ++k)
            CHECK(rel_err(merged.coords[0][0].z[static_cast<std::size_t>(k)], 0.37) < 1e-14);
        const double want_pref = std::pow(2.0 * M_PI * (u + v), -0.5 * dim);
        CHECK(rel_err(std::exp(merged.log_prefactor), want_pref) < 1e-13);
        CHECK(merged.jumps.size() == 1);
        CHECK(merged.jumps[0] == 0.0);

        // Equal bandwidths: u/2 and (4*pi*u)^(-d/2).
        f.factors = {GaussianFactor{0.8, c}, GaussianFactor{0.8, c}};
        merged = apply_jump(dual_from_function(f), 1, 0);
        CHECK(rel_err(merged.coords[0][0].s, 0.4) < 1e-14);
        CHECK(rel_err(std::exp(merged.log_prefactor), std::pow(4.0 * M_PI * 0.8, -0.5 * dim)) <
              1e-13);

        // Distinct centers: center is the bandwidth-weighted completion and
        // the cross term lands in the prefactor. Degenerate limit v -> 0
        // pins the ordering of the weights.
        std::vector<double> z1(static_cast<std::size_t>(dim), 1.0);
        std::vector<double> z2(static_cast<std::size_t>(dim), -0.5);
        f.factors = {GaussianFactor{2.0, z1}, GaussianFactor{1e-9, z2}};
        merged = apply_jump(dual_from_function(f), 0, 1);
        for (int k = 0; k < dim; ++k)
            CHECK(std::fabs(merged.coords[0][0].z[static_cast<std::size_t>(k)] + 0.5) < 1e-8);
    }
}

TEST_CASE("apply_jump: represented function is preserved pointwise") {
    RngStream rng(derive_stream(404, 12, 0));
    for (int dim = 1; dim <= 3; ++dim) {
        const auto d = static_cast<std::size_t>(dim);
        for (int trial = 0; trial < 700; ++trial) {
            const std::size_t m = 2 + static_cast<std::size_t>(rng.uniform() * 4.0);
            auto state = dual_from_function(random_function(dim, m, rng));
            state = evolve(std::move(state), rng.uniform());

            while (state.count() >= 2) {
                const std::size_t J = state.count();
                auto i = static_cast<std::size_t>(rng.uniform() * static_cast<double>(J));
                auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(J - 1));
                if (j >= i) ++j;

                const auto post_pts = random_points(dim, J - 1, rng);
                // Lift to the pre-jump coordinates: slot j is a copy of slot i.
                std::vector<double> pre_pts(J * d);
                for (std::size_t k = 0; k < J; ++k) {
                    if (k == j) continue;
                    const std::size_t kk = k < j ? k : k - 1;
                    for (std::size_t p = 0; p < d; ++p) pre_pts[k * d + p] = post_pts[kk * d + p];
                }
                for (std::size_t p = 0; p < d; ++p) pre_pts[j * d + p] = pre_pts[i * d + p];

                const double before = direct_value(state, pre_pts);
                state = apply_jump(std::move(state), i, j);
                const double after = state.value(post_pts);
                REQUIRE(rel_err(after, before) < 1e-12);

                state = evolve(std::move(state), 0.5 * rng.uniform());
            }
            CHECK(state.jumps.size() == m - 1);
        }
    }
}

TEST_CASE("apply_jump: multi-factor coordinate collapses through pairwise merges") {
    RngStream rng(derive_stream(405, 12, 0));
    DualState st;
    st.dim = 2;
    st.coords = {{GaussianFactor{0.9, {0.1, -0.4}}, GaussianFactor{1.7, {0.8, 0.2}}},
                 {GaussianFactor{0.5, {-1.0, 0.6}}}};
    st.log_prefactor = -0.3;

    const auto post_pts = random_points(2, 1, rng);
    std::vector<double> pre_pts = {post_pts[0], post_pts[1], post_pts[0], post_pts[1]};
    const double before = direct_value(st, pre_pts);

    const auto merged = apply_jump(st, 0, 1);
    REQUIRE(merged.count() == 1);
    REQUIRE(merged.coords[0].size() == 1);
    CHECK(rel_err(merged.value(post_pts), before) < 1e-12);
}

TEST_CASE("dual_from_function mirrors the product function") {
    RngStream rng(derive_stream(406, 12, 0));
    for (int dim = 1; dim <= 3; ++dim) {
        for (int trial = 0; trial < 200; ++trial) {
            const std::size_t m = 1 + static_cast<std::size_t>(rng.uniform() * 4.0);
            const auto f = random_function(dim, m, rng);
            const auto st = dual_from_function(f);
            REQUIRE(st.count() == m);
            CHECK(st.log_prefactor == 0.0);
            CHECK(st.elapsed == 0.0);
            const auto pts = random_points(dim, m, rng);
            CHECK(rel_err(st.value(pts), f.value(pts)) < 1e-12);
        }
    }
}

TEST_CASE("validation and index guards") {
    ProductFunction f;
    f.dim = 1;
    CHECK_THROWS_AS(f.validate(), ConfigError);  // no factors
    f.factors = {GaussianFactor{1.0, {0.0}}};
    f.dim = 4;
    CHECK_THROWS_AS(f.validate(), ConfigError);
    f.dim = 1;
    f.factors[0].s = 0.0;
    CHECK_THROWS_AS(f.validate(), ConfigError);
    f.factors[0].s = 1.0;
    f.factors[0].z = {0.0, 0.0};
    CHECK_THROWS_AS(f.validate(), ConfigError);
    f.factors[0].z = {0.0};
    f.validate();
    CHECK_THROWS_AS(f.value(std::vector<double>{1.0, 2.0}), std::invalid_argument);

    auto st = dual_from_function(f);
    CHECK_THROWS_AS(apply_jump(st, 0, 0), std::logic_error);  // J = 1
    ProductFunction g;
    g.dim = 1;
    g.factors = {GaussianFactor{1.0, {0.0}}, GaussianFactor{1.0, {1.0}}};
    auto st2 = dual_from_function(g);
    CHECK_THROWS_AS(apply_jump(st2, 1, 1), std::logic_error);
    CHECK_THROWS_AS(apply_jump(st2, 0, 2), std::logic_error);
    CHECK_THROWS_AS(evolve(st2, -0.1), std::logic_error);
    CHECK_THROWS_AS(st2.value(std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("evolve: additive heat flow on bandwidths") {
    ProductFunction f;
    f.dim = 2;
    f.factors = {GaussianFactor{0.6, {0.3, -0.1}}, GaussianFactor{1.1, {0.0, 0.9}}};
    const auto st = dual_from_function(f);

    const auto same = evolve(st, 0.0);
    CHECK(same.coords[0][0].s == 0.6);
    CHECK(same.coords[1][0].s == 1.1);
    CHECK(same.elapsed == 0.0);

    const auto moved = evolve(st, 0.25);
    CHECK(moved.coords[0][0].s == 0.85);
    CHECK(moved.elapsed == 0.25);
    std::vector<double> pts = {0.5, 0.5, -0.2, 1.0};
    const double want = gaussian_density_r2(0.85, dist2(std::span(pts).subspan(0, 2),
                                                        std::span(f.factors[0].z)),
                                            2) *
                        gaussian_density_r2(1.35, dist2(std::span(pts).subspan(2, 2),
                                                        std::span(f.factors[1].z)),
                                            2);
    CHECK(rel_err(moved.value(pts), want) < 1e-13);

    // Semigroup property: two steps equal one combined step.
    const auto two = evolve(evolve(st, 0.25), 0.5);
    const auto one = evolve(st, 0.75);
    for (std::size_t k = 0; k < 2; ++k)
        CHECK(rel_err(two.coords[k][0].s, one.coords[k][0].s) < 1e-15);
    CHECK(rel_err(two.elapsed, one.elapsed) < 1e-15);
}

TEST_CASE("jump_times: stage rates, truncation, degenerate cases") {
    RngStream rng(derive_stream(407, 12, 0));

    for (int i = 0; i < 200; ++i) CHECK(jump_times(1, 2.0, 10.0, rng).empty());
    CHECK(jump_times(5, 0.0, 10.0, rng).empty());
    CHECK_THROWS_AS(jump_times(0, 1.0, 1.0, rng), ConfigError);
    CHECK_THROWS_AS(jump_times(2, -1.0, 1.0, rng), ConfigError);

    SUBCASE("m=2 wait is Exp(gamma_sigma2)") {
        StreamingMoments mean;
        for (int i = 0; i < 100000; ++i) {
            const auto ts = jump_times(2, 0.7, 1e9, rng);
            REQUIRE(ts.size() == 1);
            mean.add(ts[0]);
        }
        CHECK(std::fabs(mean.mean() - 1.0 / 0.7) < 3 * mean.se_mean());
    }

    SUBCASE("m=4 stage rates 12, 6, 2 at gamma_sigma2 = 2") {
        StreamingMoments total;
        for (int i = 0; i < 100000; ++i) {
            const auto ts = jump_times(4, 2.0, 1e9, rng);
            REQUIRE(ts.size() == 3);
            REQUIRE(ts[0] < ts[1]);
            REQUIRE(ts[1] < ts[2]);
            total.add(ts[2]);
        }
        const double want = 1.0 / 12 + 1.0 / 6 + 1.0 / 2;
        CHECK(std::fabs(total.mean() - want) < 3 * total.se_mean());
    }

    SUBCASE("truncation keeps only times within the horizon") {
        for (int i = 0; i < 2000; ++i) {
            const auto ts = jump_times(4, 2.0, 0.1, rng);
            CHECK(ts.size() <= 3);
            for (double t : ts) CHECK(t <= 0.1);
        }
    }
}

TEST_CASE("dual_weight_integral: exact piecewise-constant integration") {
    RngStream rng(derive_stream(408, 12, 0));
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t m = 1 + static_cast<std::size_t>(rng.uniform() * 6.0);
        const double t = 0.2 + 2.0 * rng.uniform();
        std::vector<double> jumps;
        double tau = 0;
        for (std::size_t k = 0; k + 1 < m; ++k) {
            tau += 0.4 * rng.uniform();  // may overrun t; overruns must be ignored
            jumps.push_back(tau);
        }

        // Reference: count jumps at segment midpoints over the breakpoint grid.
        std::vector<double> brk = {0.0};
        for (double s : jumps)
            if (s < t) brk.push_back(s);
        brk.push_back(t);
        double want = 0;
        for (std::size_t k = 0; k + 1 < brk.size(); ++k) {
            const double mid = 0.5 * (brk[k] + brk[k + 1]);
            std::size_t done = 0;
            for (double s : jumps)
                if (s <= mid) ++done;
            const double l = static_cast<double>(m - done);
            want += l * (l - 1.0) * (brk[k + 1] - brk[k]);
        }

        const double got = dual_weight_integral(m, jumps, t);
        CHECK(got >= 0.0);
        CHECK(std::fabs(got - want) <= 1e-12 * std::max(1.0, std::fabs(want)));
    }
    CHECK(dual_weight_integral(1, {}, 3.0) == 0.0);
    CHECK(dual_weight_integral(3, {}, 2.0) == 12.0);
}

TEST_CASE("run_dual: trajectory bookkeeping and the m=1 reduction") {
    RngStream rng(derive_stream(409, 12, 0));
    const auto mu0 = MeasureSpec::gaussian_mixture({1.0}, {{0.0}}, {1.0});

    SUBCASE("m=4 at high rate collapses fully") {
        const auto f = random_function(1, 4, rng);
        for (int i = 0; i < 50; ++i) {
            const auto res = run_dual(f, mu0, 1.0, 50.0, rng);
            CHECK(res.state.count() + res.state.jumps.size() == 4);
            CHECK(res.state.elapsed == doctest::Approx(1.0).epsilon(1e-12));
            for (double tj : res.state.jumps) CHECK(tj <= 1.0);
            const double integral = dual_weight_integral(4, res.state.jumps, 1.0);
            CHECK(rel_err(res.log_weight, 25.0 * integral) < 1e-10);
            CHECK(res.value() >= res.pairing);  // weight >= 1
        }
    }

    SUBCASE("m=1 is the deterministic heat pairing") {
        ProductFunction f;
        f.dim = 1;
        f.factors = {GaussianFactor{0.6, {0.4}}};
        const auto res = run_dual(f, mu0, 0.3, 5.0, rng);
        CHECK(res.log_weight == 0.0);
        CHECK(res.state.jumps.empty());
        const double want = pair(mu0, Field::gaussian(0.9, {0.4})).value();
        CHECK(rel_err(res.value(), want) < 1e-13);
    }
}

TEST_CASE("duality_rhs: m=1 deterministic for every measure variant") {
    RngStream rng(derive_stream(410, 12, 0));
    ProductFunction f;
    f.dim = 1;
    f.factors = {GaussianFactor{0.8, {-0.2}}};

    const auto mix = MeasureSpec::gaussian_mixture({0.6, 0.4}, {{0.1}, {-1.0}}, {0.5, 2.0});
    auto est = duality_rhs(f, mix, 0.7, 3.0, 1000, rng);
    CHECK(est.replicas == 1);
    CHECK(est.se == 0.0);
    CHECK(rel_err(est.estimate, pair(mix, Field::gaussian(1.5, {-0.2})).value()) < 1e-13);

    const auto point = MeasureSpec::dirac({0.3}, 2.0);
    est = duality_rhs(f, point, 0.7, 3.0, 1000, rng);
    CHECK(rel_err(est.estimate, 2.0 * phi1d(1.5, -0.5)) < 1e-13);

    // Heat flow preserves Lebesgue mass: the pairing is 1 at every horizon.
    const auto leb = MeasureSpec::lebesgue(1);
    for (double t : {0.0, 0.4, 2.0})
        CHECK(rel_err(duality_rhs(f, leb, t, 3.0, 1000, rng).estimate, 1.0) < 1e-12);
}

TEST_CASE("duality_rhs: m=2 limits and the one-jump quadrature oracle") {
    RngStream rng(derive_stream(411, 12, 0));
    const auto mu0 = MeasureSpec::gaussian_mixture({1.0}, {{0.0}}, {1.0});
    ProductFunction f;
    f.dim = 1;
    f.factors = {GaussianFactor{1.0, {0.3}}, GaussianFactor{1.0, {-0.4}}};

    CHECK_THROWS_AS(duality_rhs(f, mu0, 0.5, 1.0, 1, rng), ConfigError);

    SUBCASE("vanishing horizon recovers <f, mu0^2>") {
        const auto est = duality_rhs(f, mu0, 1e-12, 1.0, 100, rng);
        const double want = pair(mu0, Field::gaussian(1.0, {0.3})).value() *
                            pair(mu0, Field::gaussian(1.0, {-0.4})).value();
        CHECK(rel_err(est.estimate, want) < 1e-9);
        CHECK(est.se <= 1e-12 * std::fabs(est.estimate));
    }

    SUBCASE("t=0.5, gamma_sigma2=1 against deterministic quadrature") {
        // Conditioning on the single possible jump time: the exponential
        // weight cancels the jump density and the survival probability, so
        //   E = V_nojump + gs2 * int_0^t V_jump(tau) dtau.
        const double t = 0.5, gs2 = 1.0, z1 = 0.3, z2 = -0.4;
        const double v_nojump = phi1d(2.0 + t, z1) * phi1d(2.0 + t, z2);
        const double jump_int = integrate(
            [&](double tau) {
                const double merged_s = 0.5 * (1.0 + tau) + (t - tau);
                return phi1d(2.0 * (1.0 + tau), z1 - z2) *
                       phi1d(merged_s + 1.0, 0.5 * (z1 + z2));
            },
            0.0, t);
        const double oracle = v_nojump + gs2 * jump_int;

        const auto est = duality_rhs(f, mu0, t, gs2, 200000, rng);
        CHECK(est.se > 0.0);
        CHECK(std::fabs(est.estimate - oracle) < 3 * est.se);
        CHECK(rel_err(est.estimate, oracle) < 0.05);  // sanity on the scale
    }
}

TEST_CASE("duality_check: configuration guards") {
    ProductFunction f;
    f.dim = 1;
    f.factors = {GaussianFactor{1.0, {0.0}}, GaussianFactor{1.0, {0.5}}};

    RunConfig cfg;
    cfg.model = KernelModel::standard(1);
    cfg.mu0 = MeasureSpec::gaussian_mixture({1.0}, {{0.0}}, {1.0});
    cfg.particles = 50;
    cfg.dt = 1e-2;
    cfg.horizon = 0.1;

    {
        HSpec h;
        h.kind = HKind::Gaussian;
        h.bandwidth = 1.0;
        h.amplitude = {0.5};
        auto bad = cfg;
        bad.model = KernelModel::make(1, h, CKind::Identity);
        CHECK_THROWS_AS(duality_check(f, bad, 10, 10), ConfigError);
    }
    {
        auto bad = cfg;
        bad.model = KernelModel::make(1, HSpec{}, CKind::Constant,
                                      Eigen::MatrixXd::Identity(1, 1));
        CHECK_THROWS_AS(duality_check(f, bad, 10, 10), ConfigError);
    }
    {
        auto three = f;
        three.factors.push_back(GaussianFactor{1.0, {1.0}});
        CHECK_THROWS_AS(duality_check(three, cfg, 10, 10), ConfigError);
    }
    {
        ProductFunction f2;
        f2.dim = 2;
        f2.factors = {GaussianFactor{1.0, {0.0, 0.0}}};
        CHECK_THROWS_AS(duality_check(f2, cfg, 10, 10), ConfigError);
    }
    CHECK_THROWS_AS(duality_check(f, cfg, 1, 10), ConfigError);
}

TEST_CASE("duality_check: m=1 agrees with the exact heat pairing") {
    ProductFunction f;
    f.dim = 1;
    f.factors = {GaussianFactor{0.6, {0.4}}};

    RunConfig cfg;
    cfg.model = KernelModel::standard(1);
    cfg.mu0 = MeasureSpec::gaussian_mixture({1.0}, {{0.0}}, {1.0});
    cfg.particles = 400;
    cfg.dt = 1e-3;
    cfg.horizon = 0.15;
    cfg.gamma = 0.3;  // per-particle branch probability 0.12
    cfg.keep_steps = false;
    cfg.seed = 515151;

    const auto rep = duality_check(f, cfg, 150, 10);
    CHECK(rep.rhs_se == 0.0);
    CHECK(rep.dual_replicas == 1);
    CHECK(rep.particle_replicas == 150);
    CHECK(rel_err(rep.rhs, pair(cfg.mu0, Field::gaussian(0.75, {0.4})).value()) < 1e-13);
    CHECK(rep.lhs_se > 0.0);
    CHECK(std::isfinite(rep.z_score));
    CHECK(rep.pass);
}

TEST_CASE("duality_check: gamma=0, m=2 reduces to products of heat pairings") {
    ProductFunction f;
    f.dim = 1;
    f.factors = {GaussianFactor{1.0, {0.2}}, GaussianFactor{1.0, {-0.3}}};

    RunConfig cfg;
    cfg.model = KernelModel::standard(1);
    cfg.mu0 = MeasureSpec::gaussian_mixture({1.0}, {{0.0}}, {1.0});
    cfg.particles = 500;
    cfg.dt = 2.5e-3;
    cfg.horizon = 0.25;
    cfg.gamma = 0.0;
    cfg.keep_steps = false;
    cfg.seed = 626262;

    const auto rep = duality_check(f, cfg, 150, 50);
    const double want = pair(cfg.mu0, Field::gaussian(1.25, {0.2})).value() *
                        pair(cfg.mu0, Field::gaussian(1.25, {-0.3})).value();
    CHECK(rel_err(rep.rhs, want) < 1e-12);
    CHECK(rep.rhs_se == 0.0);
    CHECK(rep.pass);
}

TEST_CASE("duality_check: m=2 with branching against the dual Monte Carlo") {
    ProductFunction f;
    f.dim = 1;
    f.factors = {GaussianFactor{1.0, {0.3}}, GaussianFactor{1.0, {-0.4}}};

    RunConfig cfg;
    cfg.model = KernelModel::standard(1);
    cfg.mu0 = MeasureSpec::gaussian_mixture({1.0}, {{0.0}}, {1.0});
    cfg.particles = 500;
    cfg.dt = 5e-4;
    cfg.horizon = 0.25;
    cfg.gamma = 1.0;  // per-particle branch probability 0.25
    cfg.sigma2 = 1.0;
    cfg.keep_steps = false;
    cfg.seed = 737373;

    const auto rep = duality_check(f, cfg, 150, 20000);
    CHECK(rep.lhs_se > 0.0);
    CHECK(rep.rhs_se > 0.0);
    CHECK(std::isfinite(rep.z_score));
    CHECK(rep.pass);
}
