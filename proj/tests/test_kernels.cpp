#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "sdsmlab/kernels.hpp"
#include "sdsmlab/quadrature.hpp"
#include "sdsmlab/rng.hpp"

using namespace sdsmlab;

namespace {

double rel_err(double got, double want) {
    return std::fabs(got - want) / std::max(1e-300, std::fabs(want));
}

KernelModel gaussian_h_model(int dim, double bandwidth = 1.0) {
    HSpec h;
    h.kind = HKind::Gaussian;
    h.bandwidth = bandwidth;
    return KernelModel::make(dim, h, CKind::Identity);
}

KernelModel triangle_table_model() {
    HSpec h;
    h.kind = HKind::Table;
    h.grid_lo = -1.0;
    h.grid_hi = 1.0;
    h.table = {0.0, 0.25, 0.5, 0.75, 1.0, 0.75, 0.5, 0.25, 0.0};
    return KernelModel::make(1, h, CKind::Identity);
}

}  // namespace

TEST_CASE("gaussian density: point values and normalization") {
    const double x0[1] = {0.0};
    CHECK(rel_err(gaussian_density(1.0, x0), 0.39894228040143267794) < 1e-15);

    // mass 1 over R^2, via the nested adaptive rule as an independent route
    const double mass = integrate_box(
        [](const double* p) {
            const double y[2] = {p[0], p[1]};
            return gaussian_density(0.5, y);
        },
        {-20.0, -20.0}, {20.0, 20.0});
    CHECK(std::fabs(mass - 1.0) < 1e-10);

    CHECK_THROWS_AS((void)gaussian_density(0.0, x0), std::invalid_argument);
    CHECK_THROWS_AS((void)gaussian_density(-1.0, x0), std::invalid_argument);
}

TEST_CASE("gaussian product: closed form parameters and pointwise identity") {
    const auto g = gaussian_product(1.0, 1.0, 1);
    CHECK(g.z == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(g.w == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(rel_err(g.scale, std::exp(-0.5 * std::log(4.0 * M_PI))) < 1e-15);

    RngStream rng(12345);
    for (int trial = 0; trial < 2000; ++trial) {
        const double u = 0.01 + 5.0 * rng.uniform();
        const double v = 0.01 + 5.0 * rng.uniform();
        const int dim = 1 + static_cast<int>(rng.uniform() * 3.0);
        const auto p = gaussian_product(u, v, dim);
        // variance bracketing
        CHECK(p.z <= std::min(u, v) + 1e-15);
        CHECK(p.z >= 0.5 * std::min(u, v) - 1e-15);
        CHECK(p.z <= 0.5 * std::max(u, v) + 1e-15);
        std::vector<double> y(static_cast<std::size_t>(dim));
        for (auto& c : y) c = 3.0 * rng.normal();
        const double lhs = gaussian_density(u, y) * gaussian_density(v, y);
        const double rhs = p.scale * gaussian_density(p.z, y);
        if (rhs > 1e-280) CHECK(rel_err(lhs, rhs) < 1e-12);
    }
}

TEST_CASE("rho: gaussian h closed form, fast path, and Cauchy-Schwarz") {
    const auto m1 = gaussian_h_model(1);
    const double x[1] = {0.8};
    const double want = 0.24038532470982694696;  // phi_2(0.8)
    CHECK(rel_err(m1.rho(x)(0, 0), want) < 1e-8);
    CHECK(rel_err(m1.rho_fast(x)(0, 0), want) < 1e-14);

    const auto m2 = gaussian_h_model(2, 0.7);
    RngStream rng(99);
    const double bound = m2.rho_fast(std::vector<double>{0.0, 0.0})(0, 0);
    for (int trial = 0; trial < 25; ++trial) {
        std::vector<double> p{4.0 * rng.normal(), 4.0 * rng.normal()};
        const auto slow = m2.rho(p);
        const auto fast = m2.rho_fast(p);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                CHECK(std::fabs(slow(i, j) - fast(i, j)) < 1e-8 * std::max(1.0, bound));
                CHECK(std::fabs(slow(i, j)) <= bound * (1.0 + 1e-9));
            }
    }
}

TEST_CASE("rho: tabulated triangle kernel") {
    const auto m = triangle_table_model();
    // int (1-|u|)^2 du over [-1,1] = 2/3; at offset 1 the overlap gives 1/6
    const double zero[1] = {0.0}, one[1] = {1.0}, far[1] = {2.5};
    CHECK(rel_err(m.rho_fast(zero)(0, 0), 2.0 / 3.0) < 1e-12);
    CHECK(rel_err(m.rho_fast(one)(0, 0), 1.0 / 6.0) < 1e-12);
    CHECK(rel_err(m.rho(zero)(0, 0), 2.0 / 3.0) < 1e-8);
    CHECK(rel_err(m.rho(one)(0, 0), 1.0 / 6.0) < 1e-8);
    CHECK(m.rho_fast(far)(0, 0) == 0.0);
    const double half[1] = {0.5}, mhalf[1] = {-0.5};
    CHECK(rel_err(m.rho_fast(half)(0, 0), m.rho_fast(mhalf)(0, 0)) < 1e-14);
}

TEST_CASE("tabulated h is rejected outside dimension 1") {
    HSpec h;
    h.kind = HKind::Table;
    h.grid_lo = -1;
    h.grid_hi = 1;
    h.table = {0.0, 1.0, 0.0};
    CHECK_THROWS_AS((void)KernelModel::make(2, h, CKind::Identity), ConfigError);
}

TEST_CASE("gamma_matrix: block structure") {
    const auto standard = KernelModel::standard(2);
    const auto g1 = gamma_matrix(standard, {{0.3, -0.4}});
    CHECK(g1.rows() == 2);
    CHECK((g1 - Eigen::MatrixXd::Identity(2, 2)).norm() < 1e-12);

    const auto full = gaussian_h_model(1);
    const double dx = 0.9;
    const auto g2 = gamma_matrix(full, {{0.0}, {dx}});
    const double rho0 = gaussian_density_r2(2.0, 0.0, 1);
    const double rhod = gaussian_density_r2(2.0, dx * dx, 1);
    CHECK(rel_err(g2(0, 0), 1.0 + rho0) < 1e-8);
    CHECK(rel_err(g2(1, 1), 1.0 + rho0) < 1e-8);
    CHECK(rel_err(g2(0, 1), rhod) < 1e-8);
    CHECK(rel_err(g2(1, 0), rhod) < 1e-8);

    // distant points decouple
    const auto g3 = gamma_matrix(full, {{0.0}, {500.0}});
    CHECK(std::fabs(g3(0, 1)) < 1e-15);
}

TEST_CASE("check_ellipticity: standard passes, degenerate c is rejected") {
    const auto standard = KernelModel::standard(1);
    const auto rep = check_ellipticity(standard, {{{0.0}}, {{1.0}, {2.0}}});
    CHECK(rep.valid);
    CHECK(rep.lambda_min == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.lambda_max == doctest::Approx(1.0).epsilon(1e-12));

    const auto full = gaussian_h_model(1);
    const auto rep2 = check_ellipticity(full, {{{0.0}, {0.5}}, {{0.0}, {0.1}}});
    CHECK(rep2.valid);
    CHECK(rep2.lambda_min > 0.9);  // 1 + rho0 - rho(dx) >= 1 - rho0 > 0.9 at bandwidth 1

    const auto degenerate =
        KernelModel::make(1, HSpec{}, CKind::Constant, Eigen::MatrixXd::Zero(1, 1));
    const auto rep3 = check_ellipticity(degenerate, {{{0.0}, {1.0}}});
    CHECK_FALSE(rep3.valid);
}

TEST_CASE("green_Q: quadrature matches the elementary forms in d = 1 and 3") {
    CHECK(rel_err(green_Q_closed(1.0, 1.0, 1), 0.17190949153836189182) < 1e-15);
    CHECK(rel_err(green_Q_closed(0.5, 0.25, 1), 0.77880078307140486825) < 1e-15);
    CHECK(rel_err(green_Q_closed(2.0, 3.0, 1), 0.0012393760883331792115) < 1e-15);
    CHECK(rel_err(green_Q_closed(1.0, 1.0, 3), 0.038693230033564793912) < 1e-15);
    CHECK(rel_err(green_Q_closed(2.0, 0.7, 3), 0.056067322518229358489) < 1e-15);

    for (double lambda : {0.5, 1.0, 2.0}) {
        for (int dim : {1, 3}) {
            for (double r = 0.01; r <= 10.0; r *= 2.3) {
                CHECK(rel_err(green_Q_radial(lambda, r, dim),
                              green_Q_closed(lambda, r, dim)) < 1e-8);
            }
        }
        // d = 2 Bessel route
        for (double r : {0.05, 0.3, 1.0, 4.0})
            CHECK(rel_err(green_Q_radial(lambda, r, 2), green_Q_closed(lambda, r, 2)) < 1e-8);
    }

    CHECK_THROWS_AS((void)green_Q_radial(1.0, 0.0, 2), std::domain_error);
    CHECK_THROWS_AS((void)green_Q_radial(0.0, 1.0, 1), std::invalid_argument);
    CHECK(green_Q_radial(1.0, 0.0, 1) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-8));
}

TEST_CASE("green_Q: whitened general model agrees with the radial reduction") {
    // c = diag(2, 1) and gaussian h: Sigma = diag(4,1) + rho0 * ones
    Eigen::MatrixXd c(2, 2);
    c << 2, 0, 0, 1;
    HSpec h;
    h.kind = HKind::Gaussian;
    h.bandwidth = 1.0;
    const auto model = KernelModel::make(2, h, CKind::Constant, c);
    const Eigen::MatrixXd S = model.sigma();
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    const double x[2] = {0.7, -0.4};
    Eigen::Vector2d xv(0.7, -0.4);
    const double r = llt.matrixL().solve(xv).norm();
    const double detfac = 1.0 / std::sqrt(S.determinant());
    CHECK(rel_err(green_Q(1.0, x, model), detfac * green_Q_closed(1.0, r, 2)) < 1e-8);
}

TEST_CASE("grad_green: finite differences, sign, and vanishing components") {
    const auto m1 = KernelModel::standard(1);
    for (double lambda : {0.5, 2.0}) {
        for (double x : {0.05, 0.4, 2.0}) {
            const double xp[1] = {x};
            const double got = grad_green(lambda, xp, m1, 0);
            const double want = -std::exp(-std::sqrt(2.0 * lambda) * x);
            CHECK(rel_err(got, want) < 1e-8);
            const double step = 1e-5 * std::max(1.0, x);
            const double hi[1] = {x + step}, lo[1] = {x - step};
            const double fd = (green_Q(lambda, hi, m1) - green_Q(lambda, lo, m1)) / (2 * step);
            CHECK(rel_err(got, fd) < 1e-4);
            CHECK(got * x < 0);  // sign opposite to x
        }
    }
    const auto m2 = KernelModel::standard(2);
    const double onaxis[2] = {0.0, 1.3};
    CHECK(std::fabs(grad_green(1.0, onaxis, m2, 0)) < 1e-12);
    CHECK(grad_green(1.0, onaxis, m2, 1) < 0.0);
    const double at0[2] = {0.0, 0.0};
    CHECK_THROWS_AS((void)grad_green(1.0, at0, m2, 0), std::domain_error);
}

TEST_CASE("g_tilde: Bessel closed forms, brute Riemann oracle, monotonicity, domain") {
    CHECK(rel_err(g_tilde_radial(1.0, 1.0, 1), 0.19080787777460553937) < 1e-8);
    CHECK(rel_err(g_tilde_radial(1.0, 1.0, 2), 0.096989544438934929023) < 1e-8);
    CHECK(rel_err(g_tilde_radial(1.0, 1.0, 3), 0.056425844851214119276) < 1e-8);
    CHECK(rel_err(g_tilde_radial(2.0, 0.3, 3), 1.1029563646367010241) < 1e-8);

    // brute log-spaced Riemann sum (midpoint in log-s), 1e6 nodes
    {
        const double lambda = 1.0, r = 1.0;
        const int n = 1000000;
        const double lo = std::log(1e-8), hi = std::log(60.0);
        const double du = (hi - lo) / n;
        double acc = 0;
        for (int i = 0; i < n; ++i) {
            const double s = std::exp(lo + (i + 0.5) * du);
            acc += std::exp(-lambda * s) / std::sqrt(s) * gaussian_density_r2(s, r * r, 3) * s * du;
        }
        CHECK(rel_err(g_tilde_radial(lambda, r, 3), acc) < 1e-6);
    }

    double prev = std::numeric_limits<double>::infinity();
    for (double lambda : {0.25, 0.5, 1.0, 2.0, 4.0}) {
        const double v = g_tilde_radial(lambda, 0.8, 2);
        CHECK(v < prev);
        prev = v;
    }

    for (int dim : {1, 2, 3}) {
        CHECK_THROWS_AS((void)g_tilde_radial(1.0, 0.0, dim), std::domain_error);
    }
    const double x[2] = {0.6, -0.8};
    CHECK(rel_err(g_tilde(1.0, x), g_tilde_radial(1.0, 1.0, 2)) < 1e-12);
}

TEST_CASE("square of Q vs G: bounded ratio on a punctured grid") {
    std::vector<double> radii;
    for (double r = 1e-3; r <= 10.0; r *= 1.25) radii.push_back(r);
    for (int dim : {1, 2, 3}) {
        const auto rep = check_square_vs_gtilde(1.0, dim, radii);
        CHECK(rep.part_i_holds);
        CHECK(rep.ratio_max <= 1.0);
        CHECK(std::isfinite(rep.K_sup));
        CHECK(rep.K_sup > 0.0);
        CHECK(rep.no_growth_trend);
    }
    // lambda < 1 exercises the 1/sqrt(lambda) branch of part (i)
    const auto rep = check_square_vs_gtilde(0.25, 2, radii);
    CHECK(rep.part_i_holds);
}

TEST_CASE("exp_poly_bound: sweep has no violations and the regimes differ") {
    RngStream rng(777);
    int below_one = 0;
    for (int trial = 0; trial < 100000; ++trial) {
        const double gamma = 0.01 + 5.0 * rng.uniform();
        const double beta = 5.0 * rng.uniform();
        const double v = -std::log(1.0 - 0.9999 * rng.uniform());  // heavy tail
        const auto r = exp_poly_bound(gamma, beta, v);
        CHECK(r.holds);
        if (r.bound == 1.0) ++below_one;
    }
    CHECK(below_one > 0);

    const auto tight = exp_poly_bound(0.5, 2.0, 3.0);  // v = beta/gamma - 1: maximizer
    CHECK(tight.value <= tight.bound);
    // at the maximizer the ratio is exactly e^{gamma - beta} = e^{-1.5}
    CHECK(rel_err(tight.value, tight.bound * std::exp(-1.5)) < 1e-12);
    CHECK_THROWS_AS((void)exp_poly_bound(0.0, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("mollifier: values and the shifted comparison") {
    const double zero[2] = {0.0, 0.0};
    CHECK(mollifier_Ia(3.0, zero) == 1.0);
    const double x[1] = {2.0};
    CHECK(rel_err(mollifier_Ia(2.0, x), 1.0 / 5.0) < 1e-15);
    CHECK(mollifier_Ia(0.0, x) == 1.0);

    // I_a(x + w) <= 2^{a/2} I_a(w)^{-1} I_a(x)
    RngStream rng(31415);
    for (int trial = 0; trial < 100000; ++trial) {
        const double a = 4.0 * rng.uniform();
        const int dim = 1 + static_cast<int>(rng.uniform() * 3.0);
        std::vector<double> xv(static_cast<std::size_t>(dim)), wv(static_cast<std::size_t>(dim)),
            sum(static_cast<std::size_t>(dim));
        for (int k = 0; k < dim; ++k) {
            xv[static_cast<std::size_t>(k)] = 6.0 * rng.normal();
            wv[static_cast<std::size_t>(k)] = 6.0 * rng.normal();
            sum[static_cast<std::size_t>(k)] =
                xv[static_cast<std::size_t>(k)] + wv[static_cast<std::size_t>(k)];
        }
        const double lhs = mollifier_Ia(a, sum);
        const double rhs =
            std::exp2(0.5 * a) / mollifier_Ia(a, wv) * mollifier_Ia(a, xv);
        CHECK(lhs <= rhs * (1.0 + 1e-12));
    }
}

TEST_CASE("derivative bounds of the Gaussian kernel") {
    std::vector<double> ts, ys;
    for (double t = 1e-3; t <= 4.0; t *= 1.6) ts.push_back(t);
    for (double y = -6.0; y <= 6.0; y += 0.25) ys.push_back(y);

    for (int dim : {1, 2, 3}) {
        const auto f00 = lsu_gaussian_check(0, 0, dim, ts, ys);
        CHECK(f00.holds);
        CHECK(f00.a2 == 0.5);
        CHECK(rel_err(f00.a1, std::exp(-0.5 * dim * std::log(2.0 * M_PI))) < 1e-12);

        const auto f01 = lsu_gaussian_check(0, 1, dim, ts, ys);
        CHECK(f01.holds);
        CHECK(f01.a2 == 0.25);
        const double analytic = std::exp(-0.5 * dim * std::log(2.0 * M_PI)) * std::sqrt(2.0) *
                                std::exp(-0.5);
        CHECK(f01.a1 <= analytic * (1.0 + 1e-9));

        CHECK(lsu_gaussian_check(1, 0, dim, ts, ys).holds);
        CHECK(lsu_gaussian_check(0, 2, dim, ts, ys).holds);
    }
    CHECK_THROWS_AS((void)lsu_gaussian_check(1, 1, 1, ts, ys), std::invalid_argument);
}

TEST_CASE("two-sided Gaussian comparison constants") {
    const auto std2 = KernelModel::standard(2);
    const auto b = aronson_bounds(std2);
    CHECK(b.a_star == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(b.A_star == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(b.b == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(b.c_upper == doctest::Approx(1.0).epsilon(1e-12));

    const auto full = gaussian_h_model(2);
    const auto bf = aronson_bounds(full);
    CHECK(bf.b > 0);
    CHECK(bf.c_upper >= bf.b);
    CHECK(bf.a_star <= bf.A_star);

    // the fitted first-derivative constant from the grid check stays below
    // the analytic cap used here
    std::vector<double> ts{0.01, 0.1, 1.0}, ys{-3.0, -1.0, 0.5, 2.0};
    const auto fit = lsu_gaussian_check(0, 1, 2, ts, ys);
    const auto cap = aronson_bounds(KernelModel::standard(2));
    CHECK(fit.a1 <= cap.a1 * (1.0 + 1e-9));
}
