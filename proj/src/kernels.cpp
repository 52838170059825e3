#include "sdsmlab/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "sdsmlab/quadrature.hpp"
#include "sdsmlab/stats.hpp"

namespace sdsmlab {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
// |h| is treated as zero where it falls below 1e-12 of its peak.
constexpr double kSupportLogCut = 27.631021115928547;  // ln(1e12)

double phi1(double s, double v) { return std::exp(-0.5 * std::log(kTwoPi * s) - v * v / (2 * s)); }

double table_interp(const HSpec& h, double u) {
    if (u < h.grid_lo || u > h.grid_hi) return 0.0;
    const std::size_t n = h.table.size();
    const double step = (h.grid_hi - h.grid_lo) / static_cast<double>(n - 1);
    double w = (u - h.grid_lo) / step;
    std::size_t i = static_cast<std::size_t>(w);
    if (i >= n - 1) i = n - 2;
    const double f = w - static_cast<double>(i);
    return h.table[i] * (1.0 - f) + h.table[i + 1] * f;
}

// Exact integral of the product of two piecewise-linear interpolants,
// int h(u - x) h(u) du: the product is quadratic between breakpoints,
// so per-cell Simpson is exact.
double table_autocorr(const HSpec& h, double x) {
    x = std::fabs(x);
    const double a = h.grid_lo + x;
    const double b = h.grid_hi;
    if (a >= b) return 0.0;
    const std::size_t n = h.table.size();
    const double step = (h.grid_hi - h.grid_lo) / static_cast<double>(n - 1);
    std::vector<double> cuts;
    cuts.reserve(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        const double g = h.grid_lo + step * static_cast<double>(i);
        if (g > a && g < b) cuts.push_back(g);
        const double gs = g + x;
        if (gs > a && gs < b) cuts.push_back(gs);
    }
    cuts.push_back(a);
    cuts.push_back(b);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end(),
                           [](double p, double q) { return std::fabs(p - q) < 1e-15; }),
               cuts.end());
    auto f = [&](double u) { return table_interp(h, u - x) * table_interp(h, u); };
    double acc = 0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double lo = cuts[i], hi = cuts[i + 1];
        acc += (hi - lo) / 6.0 * (f(lo) + 4.0 * f(0.5 * (lo + hi)) + f(hi));
    }
    return acc;
}

void check_point(std::span<const double> x, int dim, const char* who) {
    if (static_cast<int>(x.size()) != dim)
        throw std::invalid_argument(std::string(who) + ": point dimension mismatch");
}

}  // namespace

KernelModel KernelModel::standard(int dim) {
    return make(dim, HSpec{}, CKind::Identity);
}

KernelModel KernelModel::make(int dim, HSpec h, CKind c_kind, Eigen::MatrixXd c) {
    if (dim < 1 || dim > 3) throw ConfigError("model dimension must be 1, 2 or 3");
    KernelModel m;
    m.dim_ = dim;
    m.c_kind_ = c_kind;
    if (c_kind == CKind::Identity) {
        m.c_ = Eigen::MatrixXd::Identity(dim, dim);
    } else {
        if (c.rows() != dim || c.cols() != dim)
            throw ConfigError("constant c must be a dim x dim matrix");
        if (!c.allFinite()) throw ConfigError("c has non-finite entries");
        m.c_ = std::move(c);
    }
    m.a_ = m.c_ * m.c_.transpose();

    switch (h.kind) {
        case HKind::Zero:
            break;
        case HKind::Gaussian: {
            if (!(h.bandwidth > 0)) throw ConfigError("gaussian h needs bandwidth > 0");
            if (h.amplitude.empty()) h.amplitude.assign(static_cast<std::size_t>(dim), 1.0);
            if (static_cast<int>(h.amplitude.size()) != dim)
                throw ConfigError("gaussian h amplitude must have one entry per dimension");
            for (double a : h.amplitude)
                if (!std::isfinite(a)) throw ConfigError("gaussian h amplitude not finite");
            m.g_ = h.amplitude;
            break;
        }
        case HKind::Table: {
            if (dim != 1) throw ConfigError("tabulated h is supported in dimension 1 only");
            if (h.table.size() < 2) throw ConfigError("tabulated h needs at least 2 samples");
            if (!(h.grid_hi > h.grid_lo)) throw ConfigError("tabulated h grid is empty");
            for (double v : h.table)
                if (!std::isfinite(v)) throw ConfigError("tabulated h sample not finite");
            m.g_ = {1.0};
            break;
        }
    }
    m.h_ = std::move(h);
    return m;
}

double KernelModel::h_value(int p, std::span<const double> u) const {
    check_point(u, dim_, "h_value");
    if (p < 0 || p >= dim_) throw std::invalid_argument("h_value: component out of range");
    switch (h_.kind) {
        case HKind::Zero: return 0.0;
        case HKind::Gaussian: return h_.amplitude[static_cast<std::size_t>(p)] * gaussian_density(h_.bandwidth, u);
        case HKind::Table: return table_interp(h_, u[0]);
    }
    return 0.0;
}

double KernelModel::h_support_radius() const {
    switch (h_.kind) {
        case HKind::Zero: return 0.0;
        case HKind::Gaussian: return std::sqrt(2.0 * h_.bandwidth * kSupportLogCut);
        case HKind::Table: return std::max(std::fabs(h_.grid_lo), std::fabs(h_.grid_hi));
    }
    return 0.0;
}

Eigen::MatrixXd KernelModel::rho(std::span<const double> x) const {
    check_point(x, dim_, "rho");
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(dim_, dim_);
    if (h_.kind == HKind::Zero) return out;
    if (h_.kind == HKind::Gaussian) {
        // h factorizes over coordinates, so the d-dim convolution is a
        // product of 1-D integrals shared by every (p,q) pair.
        const double R = h_support_radius();
        const double s = h_.bandwidth;
        double prod = 1.0;
        for (int k = 0; k < dim_; ++k) {
            const double lo = std::max(-R, x[static_cast<std::size_t>(k)] - R);
            const double hi = std::min(R, x[static_cast<std::size_t>(k)] + R);
            if (lo >= hi) { prod = 0.0; break; }
            const double xk = x[static_cast<std::size_t>(k)];
            prod *= integrate([s, xk](double u) { return phi1(s, u - xk) * phi1(s, u); }, lo, hi);
        }
        for (int p = 0; p < dim_; ++p)
            for (int q = 0; q < dim_; ++q)
                out(p, q) = g_[static_cast<std::size_t>(p)] * g_[static_cast<std::size_t>(q)] * prod;
        return out;
    }
    // Tabulated, dimension 1.
    const double xv = x[0];
    const double a = h_.grid_lo + std::fabs(xv);
    const double b = h_.grid_hi;
    if (a < b) {
        const HSpec& h = h_;
        out(0, 0) = integrate(
            [&h, xv](double u) { return table_interp(h, u - std::fabs(xv)) * table_interp(h, u); }, a, b);
    }
    return out;
}

double KernelModel::rho_scalar_fast(double r2) const {
    switch (h_.kind) {
        case HKind::Zero: return 0.0;
        case HKind::Gaussian: return gaussian_density_r2(2.0 * h_.bandwidth, r2, dim_);
        case HKind::Table: return table_autocorr(h_, std::sqrt(r2));
    }
    return 0.0;
}

Eigen::MatrixXd KernelModel::rho_fast(std::span<const double> x) const {
    check_point(x, dim_, "rho_fast");
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(dim_, dim_);
    if (h_.kind == HKind::Zero) return out;
    const double corr = rho_scalar_fast(sqnorm(x));
    for (int p = 0; p < dim_; ++p)
        for (int q = 0; q < dim_; ++q)
            out(p, q) = g_[static_cast<std::size_t>(p)] * g_[static_cast<std::size_t>(q)] * corr;
    return out;
}

Eigen::MatrixXd KernelModel::sigma() const {
    std::vector<double> zero(static_cast<std::size_t>(dim_), 0.0);
    return a_ + rho_fast(zero);
}

double gaussian_density(double s, std::span<const double> y) {
    return gaussian_density_r2(s, sqnorm(y), static_cast<int>(y.size()));
}

double gaussian_density_r2(double s, double r2, int dim) {
    if (!(s > 0)) throw std::invalid_argument("gaussian_density: variance must be positive");
    if (r2 < 0 || dim < 1) throw std::invalid_argument("gaussian_density: bad arguments");
    return std::exp(-0.5 * dim * std::log(kTwoPi * s) - r2 / (2 * s));
}

GaussianProduct gaussian_product(double u, double v, int dim) {
    if (!(u > 0) || !(v > 0)) throw std::invalid_argument("gaussian_product: variances must be positive");
    if (dim < 1) throw std::invalid_argument("gaussian_product: bad dimension");
    GaussianProduct g;
    g.w = u + v;
    g.z = u * v / g.w;
    g.scale = std::exp(-0.5 * dim * std::log(kTwoPi * g.w));
    return g;
}

Eigen::MatrixXd gamma_matrix(const KernelModel& model,
                             const std::vector<std::vector<double>>& points) {
    const int d = model.dim();
    const int m = static_cast<int>(points.size());
    if (m < 1) throw std::invalid_argument("gamma_matrix: empty configuration");
    for (const auto& p : points)
        if (static_cast<int>(p.size()) != d)
            throw std::invalid_argument("gamma_matrix: point dimension mismatch");
    const std::vector<double> zero(static_cast<std::size_t>(d), 0.0);
    const Eigen::MatrixXd rho0 = model.rho(zero);
    Eigen::MatrixXd G(m * d, m * d);
    std::vector<double> diff(static_cast<std::size_t>(d));
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            Eigen::MatrixXd block;
            if (i == j) {
                block = model.a() + rho0;
            } else {
                for (int k = 0; k < d; ++k)
                    diff[static_cast<std::size_t>(k)] =
                        points[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] -
                        points[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
                block = model.rho(diff);
            }
            G.block(i * d, j * d, d, d) = block;
        }
    }
    return G;
}

EllipticityReport check_ellipticity(const KernelModel& model,
                                    const std::vector<std::vector<std::vector<double>>>& configs) {
    if (configs.empty()) throw std::invalid_argument("check_ellipticity: no configurations");
    EllipticityReport rep;
    rep.lambda_min = std::numeric_limits<double>::infinity();
    rep.lambda_max = -std::numeric_limits<double>::infinity();
    for (const auto& cfg : configs) {
        const Eigen::MatrixXd G = gamma_matrix(model, cfg);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G, Eigen::EigenvaluesOnly);
        rep.lambda_min = std::min(rep.lambda_min, es.eigenvalues().minCoeff());
        rep.lambda_max = std::max(rep.lambda_max, es.eigenvalues().maxCoeff());
    }
    rep.valid = rep.lambda_min > 0;
    return rep;
}

namespace {

struct Whitened {
    double r;        // |L^{-1} x|
    double detfac;   // det(Sigma)^{-1/2}
    Eigen::VectorXd sol;  // Sigma^{-1} x
};

Whitened whiten(std::span<const double> x, const KernelModel& model) {
    const int d = model.dim();
    check_point(x, d, "green");
    const Eigen::MatrixXd S = model.sigma();
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success)
        throw ModelRejection("one-particle covariance is not positive definite");
    Eigen::VectorXd xv(d);
    for (int k = 0; k < d; ++k) xv(k) = x[static_cast<std::size_t>(k)];
    Whitened w;
    w.r = llt.matrixL().solve(xv).norm();
    w.detfac = 1.0 / llt.matrixLLT().diagonal().prod();
    w.sol = llt.solve(xv);
    return w;
}

}  // namespace

double green_Q_radial(double lambda, double r, int dim) {
    if (!(lambda > 0)) throw std::invalid_argument("green_Q: lambda must be positive");
    if (dim < 1 || dim > 3) throw std::invalid_argument("green_Q: dimension must be 1..3");
    if (r < 0) throw std::invalid_argument("green_Q: negative radius");
    if (dim >= 2 && r == 0) throw std::domain_error("green_Q: x = 0 diverges for dim >= 2");
    const double r2 = r * r;
    return integrate_halfline_log([=](double t) {
        const double lg = -lambda * t - 0.5 * dim * std::log(kTwoPi * t) - r2 / (2 * t);
        return lg < -745.0 ? 0.0 : std::exp(lg);
    });
}

double green_Q_radial_deriv(double lambda, double r, int dim) {
    if (!(lambda > 0)) throw std::invalid_argument("green_Q: lambda must be positive");
    if (dim < 1 || dim > 3) throw std::invalid_argument("green_Q: dimension must be 1..3");
    if (!(r > 0)) throw std::domain_error("green_Q derivative needs r > 0");
    const double r2 = r * r;
    return -integrate_halfline_log([=](double t) {
        const double lg = -lambda * t - 0.5 * dim * std::log(kTwoPi * t) + std::log(r / t) - r2 / (2 * t);
        return lg < -745.0 ? 0.0 : std::exp(lg);
    });
}

double green_Q_closed(double lambda, double r, int dim) {
    if (!(lambda > 0)) throw std::invalid_argument("green_Q: lambda must be positive");
    const double c = std::sqrt(2.0 * lambda);
    switch (dim) {
        case 1:
            return std::exp(-c * std::fabs(r)) / c;
        case 2:
            if (!(r > 0)) throw std::domain_error("green_Q: x = 0 diverges for dim >= 2");
            return (c * r > 700.0) ? 0.0 : std::cyl_bessel_k(0.0, c * r) / M_PI;
        case 3:
            if (!(r > 0)) throw std::domain_error("green_Q: x = 0 diverges for dim >= 2");
            return std::exp(-c * r) / (kTwoPi * r);
        default:
            throw std::invalid_argument("green_Q: dimension must be 1..3");
    }
}

double green_Q_closed_deriv(double lambda, double r, int dim) {
    if (!(lambda > 0)) throw std::invalid_argument("green_Q: lambda must be positive");
    if (!(r > 0)) throw std::domain_error("green_Q derivative needs r > 0");
    const double c = std::sqrt(2.0 * lambda);
    switch (dim) {
        case 1:
            return -std::exp(-c * r);
        case 2:
            return (c * r > 700.0) ? 0.0 : -c * std::cyl_bessel_k(1.0, c * r) / M_PI;
        case 3:
            return -(1.0 + c * r) * std::exp(-c * r) / (kTwoPi * r * r);
        default:
            throw std::invalid_argument("green_Q: dimension must be 1..3");
    }
}

double green_Q(double lambda, std::span<const double> x, const KernelModel& model) {
    const Whitened w = whiten(x, model);
    if (model.dim() >= 2 && w.r == 0) throw std::domain_error("green_Q: x = 0 diverges for dim >= 2");
    return w.detfac * green_Q_radial(lambda, w.r, model.dim());
}

double grad_green(double lambda, std::span<const double> x, const KernelModel& model, int p) {
    const int d = model.dim();
    if (p < 0 || p >= d) throw std::invalid_argument("grad_green: component out of range");
    const Whitened w = whiten(x, model);
    if (!(w.r > 0)) throw std::domain_error("grad_green needs x != 0");
    return w.detfac * green_Q_radial_deriv(lambda, w.r, d) * w.sol(p) / w.r;
}

double g_tilde_radial(double lambda, double r, int dim) {
    if (!(lambda > 0)) throw std::invalid_argument("g_tilde: lambda must be positive");
    if (dim < 1 || dim > 3) throw std::invalid_argument("g_tilde: dimension must be 1..3");
    if (!(r > 0)) throw std::domain_error("g_tilde: diverges at x = 0 in every dimension");
    const double r2 = r * r;
    return integrate_halfline_log([=](double s) {
        const double lg = -lambda * s - 0.5 * std::log(s) - 0.5 * dim * std::log(kTwoPi * s) - r2 / (2 * s);
        return lg < -745.0 ? 0.0 : std::exp(lg);
    });
}

double g_tilde(double lambda, std::span<const double> x) {
    return g_tilde_radial(lambda, std::sqrt(sqnorm(x)), static_cast<int>(x.size()));
}

SquareVsGtilde check_square_vs_gtilde(double lambda, int dim, std::span<const double> radii) {
    if (radii.size() < 2) throw std::invalid_argument("check_square_vs_gtilde: need a grid");
    for (std::size_t i = 0; i + 1 < radii.size(); ++i)
        if (!(radii[i] < radii[i + 1]))
            throw std::invalid_argument("check_square_vs_gtilde: radii must be sorted ascending");
    if (!(radii.front() > 0)) throw std::domain_error("check_square_vs_gtilde: radii must be positive");

    SquareVsGtilde out;
    out.part_i_holds = true;
    const double part_i_factor = std::max(1.0, 1.0 / std::sqrt(lambda));
    std::vector<double> logr_small, logK_small;
    const double decade_cut = radii.front() * 10.0;
    for (double r : radii) {
        const double q = green_Q_radial(lambda, r, dim);
        const double ratio = q / (part_i_factor * g_tilde_radial(0.5 * lambda, r, dim));
        out.ratio_max = std::max(out.ratio_max, ratio);
        if (!(ratio <= 1.0 + 1e-10)) out.part_i_holds = false;
        const double K = q * q / g_tilde_radial(2.0 * lambda, r, dim);
        out.K_sup = std::max(out.K_sup, K);
        if (r <= decade_cut && K > 0) {
            logr_small.push_back(std::log(r));
            logK_small.push_back(std::log(K));
        }
    }
    if (logr_small.size() >= 2) {
        out.small_x_slope = linfit(logr_small, logK_small).slope;
        out.no_growth_trend = out.small_x_slope >= -0.1;
    } else {
        out.small_x_slope = 0;
        out.no_growth_trend = true;
    }
    return out;
}

ExpPolyBound exp_poly_bound(double gamma, double beta, double v) {
    if (!(gamma > 0) || beta < 0 || v < 0)
        throw std::invalid_argument("exp_poly_bound: need gamma > 0, beta >= 0, v >= 0");
    ExpPolyBound out;
    out.value = std::exp(beta * std::log1p(v) - gamma * v);
    out.bound = (gamma > beta) ? 1.0 : std::pow(beta / gamma, beta);
    out.holds = out.value <= out.bound * (1.0 + 1e-12);
    return out;
}

double mollifier_Ia(double a, std::span<const double> x) {
    if (a < 0) throw std::invalid_argument("mollifier_Ia: exponent must be nonnegative");
    return std::exp(-0.5 * a * std::log1p(sqnorm(x)));
}

namespace {

// log of the polynomial prefactor P in d_t^r d_{y1}^s phi = P * phi;
// -inf where the derivative vanishes.
double lsu_log_poly(int r, int s, int dim, double t, double y1) {
    const double u = y1 * y1;
    if (r == 0 && s == 0) return 0.0;
    if (r == 0 && s == 1) return std::log(std::fabs(y1) / t);
    if (r == 0 && s == 2) return std::log(std::fabs(u / (t * t) - 1.0 / t));
    if (r == 1 && s == 0) return std::log(std::fabs(u / (2 * t * t) - dim / (2.0 * t)));
    throw std::invalid_argument("lsu_gaussian_check: derivative order out of range");
}

}  // namespace

LsuFit lsu_gaussian_check(int r, int s, int dim, std::span<const double> t_grid,
                          std::span<const double> y_grid) {
    if (r < 0 || s < 0 || 2 * r + s > 2)
        throw std::invalid_argument("lsu_gaussian_check: need 0 <= 2r + s <= 2");
    if (t_grid.empty() || y_grid.empty())
        throw std::invalid_argument("lsu_gaussian_check: empty grid");
    for (double t : t_grid)
        if (!(t > 0)) throw std::invalid_argument("lsu_gaussian_check: t must be positive");

    LsuFit fit;
    fit.a2 = (r == 0 && s == 0) ? 0.5 : 0.25;
    const double expo = 0.5 * (dim + 2 * r + s);
    // Everything in logs: the exp(a2 u/t) reweighting would overflow at small
    // t otherwise. The density and weight exponents are combined into one
    // (a2 - 1/2) u/t product; summing them separately loses ~1e-12 to
    // absorption when u/t is large.
    auto weighted = [&](double t, double y1) {
        const double uot = y1 * y1 / t;
        const double lg = lsu_log_poly(r, s, dim, t, y1) -
                          0.5 * dim * std::log(kTwoPi * t) +
                          expo * std::log(t) + (fit.a2 - 0.5) * uot;
        if (lg == -std::numeric_limits<double>::infinity()) return 0.0;
        return std::exp(lg);
    };
    double sup = 0;
    for (double t : t_grid)
        for (double y : y_grid) sup = std::max(sup, weighted(t, y));
    fit.a1 = sup;

    // Validate on a refinement: geometric midpoints in t, arithmetic in y.
    std::vector<double> tr(t_grid.begin(), t_grid.end());
    for (std::size_t i = 0; i + 1 < t_grid.size(); ++i)
        tr.push_back(std::sqrt(t_grid[i] * t_grid[i + 1]));
    std::vector<double> yr(y_grid.begin(), y_grid.end());
    for (std::size_t i = 0; i + 1 < y_grid.size(); ++i)
        yr.push_back(0.5 * (y_grid[i] + y_grid[i + 1]));
    double sup_ref = 0;
    for (double t : tr)
        for (double y : yr) sup_ref = std::max(sup_ref, weighted(t, y));

    fit.holds = std::isfinite(fit.a1) && sup_ref <= fit.a1 * (1.0 + 1e-6);
    return fit;
}

KernelBounds aronson_bounds(const KernelModel& model) {
    const int d = model.dim();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(model.sigma());
    if (es.info() != Eigen::Success) throw ModelRejection("covariance eigensolve failed");
    const double lmin = es.eigenvalues().minCoeff();
    const double lmax = es.eigenvalues().maxCoeff();
    if (!(lmin > 0)) throw ModelRejection("one-particle covariance is not positive definite");
    const double detfac = 1.0 / std::sqrt(es.eigenvalues().prod());
    KernelBounds b{};
    b.a_star = std::pow(lmin, 0.5 * d) * detfac;
    b.b = lmin;
    b.A_star = std::pow(lmax, 0.5 * d) * detfac;
    b.c_upper = lmax;
    b.a2 = 1.0 / (4.0 * lmax);
    b.a1 = detfac * std::exp(-0.5 * d * std::log(kTwoPi)) * std::sqrt(2.0 * lmax) *
           std::exp(-0.5) / lmin;
    return b;
}

}  // namespace sdsmlab
