#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

#include "sdsmlab/core.hpp"

namespace sdsmlab {

inline double sqnorm(std::span<const double> x) {
    double s = 0;
    for (double v : x) s += v * v;
    return s;
}

enum class HKind { Zero, Gaussian, Table };
enum class CKind { Identity, Constant };

// Common-noise convolution kernel h = (h_1..h_d).
//  Gaussian: h_p = amplitude[p] * (Gaussian density with variance `bandwidth`),
//            one shared bandwidth, per-component amplitudes.
//  Table:    dimension 1 only; samples on a uniform grid over [grid_lo, grid_hi],
//            linear interpolation, zero outside.
struct HSpec {
    HKind kind = HKind::Zero;
    double bandwidth = 1.0;
    std::vector<double> amplitude;
    std::vector<double> table;
    double grid_lo = 0.0, grid_hi = 0.0;
};

// Spatial-motion model: individual diffusion coefficient c (spatially
// constant in the supported kinds) plus the interaction kernel h.
// All evaluation methods are pure.
class KernelModel {
public:
    static KernelModel standard(int dim);  // h == 0, c = identity
    static KernelModel make(int dim, HSpec h, CKind c_kind,
                            Eigen::MatrixXd c = Eigen::MatrixXd());

    int dim() const noexcept { return dim_; }
    const HSpec& h() const noexcept { return h_; }
    CKind c_kind() const noexcept { return c_kind_; }
    const Eigen::MatrixXd& c() const noexcept { return c_; }
    const Eigen::MatrixXd& a() const noexcept { return a_; }  // c c^T
    bool has_common_noise() const noexcept { return h_.kind != HKind::Zero; }
    // c is spatially constant for every supported kind, so the one-particle
    // transition density is an explicit Gaussian with covariance sigma()*t.
    bool constant_coefficients() const noexcept { return true; }

    double h_value(int p, std::span<const double> u) const;
    // Radius beyond which |h| falls below 1e-12 of its maximum; defines the
    // quadrature box for rho().
    double h_support_radius() const;

    // rho_pq(x) = int h_p(u - x) h_q(u) du, by adaptive quadrature over the
    // numerically relevant support box.
    Eigen::MatrixXd rho(std::span<const double> x) const;

    // Sampler fast path. The supported kinds factor as
    // rho_pq(x) = g_p g_q * corr(x) with corr isotropic; corr is closed-form
    // for Gaussian h and an exact piecewise integral for tabulated h.
    // Agreement with rho() is pinned in tests.
    double rho_scalar_fast(double r2) const;
    Eigen::MatrixXd rho_fast(std::span<const double> x) const;
    const std::vector<double>& common_amplitude() const noexcept { return g_; }

    Eigen::MatrixXd sigma() const;  // a + rho(0), one-particle covariance rate

private:
    KernelModel() = default;
    int dim_ = 1;
    HSpec h_;
    CKind c_kind_ = CKind::Identity;
    Eigen::MatrixXd c_, a_;
    std::vector<double> g_;  // common-noise amplitude vector
};

// Gaussian transition density with variance s per coordinate, y in R^d.
double gaussian_density(double s, std::span<const double> y);
double gaussian_density_r2(double s, double r2, int dim);

// Same-center product rule: phi_u * phi_v = scale * phi_z with
// z = uv/(u+v), scale = (2*pi*w)^{-d/2}, w = u+v.
struct GaussianProduct {
    double scale;
    double z;
    double w;
};
GaussianProduct gaussian_product(double u, double v, int dim);

// Joint covariance-rate matrix of an m-point configuration: (md)x(md),
// diagonal blocks a(x_i) + rho(0), off-diagonal blocks rho(x_i - x_j).
Eigen::MatrixXd gamma_matrix(const KernelModel& model,
                             const std::vector<std::vector<double>>& points);

struct EllipticityReport {
    double lambda_min = 0;
    double lambda_max = 0;
    bool valid = false;  // model-rejection signal when false
};
EllipticityReport check_ellipticity(const KernelModel& model,
                                    const std::vector<std::vector<std::vector<double>>>& configs);

// Laplace transform in time of the one-particle transition density,
// Q(x) = int_0^inf e^{-lambda t} q_t(0, x) dt, by adaptive Gauss-Kronrod
// quadrature in log-time. Requires x != 0 when dim >= 2.
double green_Q(double lambda, std::span<const double> x, const KernelModel& model);
double grad_green(double lambda, std::span<const double> x, const KernelModel& model, int p);

// Radial profiles for the identity-covariance case.
double green_Q_radial(double lambda, double r, int dim);        // quadrature
double green_Q_radial_deriv(double lambda, double r, int dim);  // quadrature
double green_Q_closed(double lambda, double r, int dim);        // elementary / Bessel forms
double green_Q_closed_deriv(double lambda, double r, int dim);

// Half-order-weighted companion transform
// G(x) = int_0^inf e^{-lambda s} s^{-1/2} phi_s(x) ds (identity covariance).
// Diverges at x = 0 in every dimension; the domain excludes it.
double g_tilde(double lambda, std::span<const double> x);
double g_tilde_radial(double lambda, double r, int dim);

// Comparison of Q against G on a punctured radial grid (dims 1..3):
// part (i):  Q^lambda <= max(1, lambda^{-1/2}) * G^{lambda/2},
// part (ii): (Q^lambda)^2 <= K * G^{2 lambda} with finite K.
// The grid must be sorted ascending; the small-x trend slope is the
// least-squares slope of log K vs log r over the smallest decade of radii
// (negative values signal growth as r -> 0).
struct SquareVsGtilde {
    double K_sup = 0;
    double ratio_max = 0;
    bool part_i_holds = false;
    double small_x_slope = 0;
    bool no_growth_trend = false;
};
SquareVsGtilde check_square_vs_gtilde(double lambda, int dim, std::span<const double> radii);

// e^{-gamma v} (1+v)^beta <= 1 when gamma > beta, else <= (beta/gamma)^beta.
struct ExpPolyBound {
    double value = 0;
    double bound = 0;
    bool holds = false;
};
ExpPolyBound exp_poly_bound(double gamma, double beta, double v);

// (1 + |x|^2)^{-a/2}
double mollifier_Ia(double a, std::span<const double> x);

// Derivative bounds of the identity-covariance Gaussian kernel:
// |d_t^r d_{y1}^s phi_t(y)| <= a1 t^{-(d+2r+s)/2} exp(-a2 |y|^2 / t)
// with a2 = 1/2 for (r,s) = (0,0) and 1/4 otherwise. a1 is fitted as the
// grid supremum of the weighted derivative and validated on a refined grid.
// Grid points are (t, y1) with y = y1 * e1; requires 0 <= 2r + s <= 2.
struct LsuFit {
    double a1 = 0;
    double a2 = 0;
    bool holds = false;
};
LsuFit lsu_gaussian_check(int r, int s, int dim, std::span<const double> t_grid,
                          std::span<const double> y_grid);

// Two-sided Gaussian comparison for the constant-coefficient transition
// density: a_star * phi_{b t} <= q_t <= A_star * phi_{c_upper t}, plus the
// first-derivative bound pair (a1, a2). Equalities in the identity case.
struct KernelBounds {
    double a1, a2;
    double a_star, b;
    double A_star, c_upper;
};
KernelBounds aronson_bounds(const KernelModel& model);

}  // namespace sdsmlab
