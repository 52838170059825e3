#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "sdsmlab/core.hpp"

namespace sdsmlab {

struct QuadOptions {
    double abs_tol = 1e-10;
    double rel_tol = 1e-8;
    int max_depth = 15;
};

// Adaptive Gauss-Kronrod (15-point rule). Infinite endpoints are allowed;
// Boost maps them internally. Throws NumericError when the error estimate
// exceeds both tolerance targets. The relative acceptance carries a 10x
// slack: the K15-G7 estimator is conservative by orders of magnitude, and
// the adaptive mesh can legitimately settle within a small factor of the
// requested target. Gross non-convergence still trips the check.
template <class F>
double integrate(F&& f, double a, double b, QuadOptions opt = {}) {
    using boost::math::quadrature::gauss_kronrod;
    double err = 0, l1 = 0;
    const double v = gauss_kronrod<double, 15>::integrate(
        std::forward<F>(f), a, b, opt.max_depth, opt.rel_tol, &err, &l1);
    const double scale = std::max(std::fabs(v), l1);
    if (!(err <= opt.abs_tol) && !(err <= 10.0 * opt.rel_tol * scale))
        throw NumericError("quadrature did not converge", err);
    return v;
}

// Integral of f over (0, inf) through the substitution s = exp(u),
// u over the whole line. The Jacobian factor s is folded in here;
// f receives s. Callers' integrands must be overflow-safe at extreme s
// (compute in logs and return 0 on underflow).
template <class F>
double integrate_halfline_log(F&& f, QuadOptions opt = {}) {
    const double inf = std::numeric_limits<double>::infinity();
    auto g = [&f](double u) {
        const double s = std::exp(u);
        if (!std::isfinite(s) || s == 0.0) return 0.0;
        const double y = f(s) * s;
        return std::isfinite(y) ? y : 0.0;
    };
    return integrate(g, -inf, inf, opt);
}

// Nested 1-D rules over an axis-aligned box, dimensions 1..3. Used for
// oracle-style checks and low-volume pairings, not in hot loops.
template <class F>
double integrate_box(F&& f, const std::vector<double>& lo, const std::vector<double>& hi,
                     QuadOptions opt = {}) {
    const std::size_t d = lo.size();
    if (d == 0 || d > 3 || hi.size() != d)
        throw std::invalid_argument("integrate_box: dimension must be 1..3");
    QuadOptions inner = opt;
    inner.rel_tol = opt.rel_tol * 0.1;
    // Slices near the box edge can have negligible value yet conservative
    // error estimates; the per-slice absolute slack stays below the outer
    // relative targets after integration.
    inner.abs_tol = std::max(opt.abs_tol, 1e-9);
    if (d == 1) {
        return integrate([&](double x) { double p[3] = {x, 0, 0}; return f(p); },
                         lo[0], hi[0], opt);
    }
    if (d == 2) {
        return integrate(
            [&](double x) {
                return integrate([&](double y) { double p[3] = {x, y, 0}; return f(p); },
                                 lo[1], hi[1], inner);
            },
            lo[0], hi[0], opt);
    }
    return integrate(
        [&](double x) {
            return integrate(
                [&](double y) {
                    return integrate([&](double z) { double p[3] = {x, y, z}; return f(p); },
                                     lo[2], hi[2], inner);
                },
                lo[1], hi[1], inner);
        },
        lo[0], hi[0], opt);
}

}  // namespace sdsmlab
