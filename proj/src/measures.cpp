#include "sdsmlab/measures.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sdsmlab/kernels.hpp"
#include "sdsmlab/quadrature.hpp"

namespace sdsmlab {

namespace {

// Per-dimension half-width of the quadrature box around a Gaussian factor;
// the truncated tail mass is below 1e-18 per dimension.
constexpr double kGaussBoxSigmas = 8.75;

double box_volume(const std::vector<double>& lo, const std::vector<double>& hi) {
    double v = 1;
    for (std::size_t k = 0; k < lo.size(); ++k) v *= hi[k] - lo[k];
    return v;
}

// mass of the 1-D Gaussian with variance s centered at y over [lo, hi]
double gauss_mass_1d(double s, double y, double lo, double hi) {
    const double inv = 1.0 / std::sqrt(2.0 * s);
    return 0.5 * (std::erf((hi - y) * inv) - std::erf((lo - y) * inv));
}

double sq_dist(std::span<const double> x, std::span<const double> y) {
    double s = 0;
    for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - y[k]) * (x[k] - y[k]);
    return s;
}

// E[g(c + sd * Z)] with Z standard normal in R^dim, by quadrature in the
// standardized variable. Keeps the integrand O(1)-wide at any bandwidth.
template <class G>
double gaussian_expectation(int dim, std::span<const double> c, double sd, G&& g) {
    std::vector<double> lo(static_cast<std::size_t>(dim), -kGaussBoxSigmas);
    std::vector<double> hi(static_cast<std::size_t>(dim), kGaussBoxSigmas);
    std::vector<double> x(static_cast<std::size_t>(dim));
    return integrate_box(
        [&](const double* z) {
            double q2 = 0;
            for (int k = 0; k < dim; ++k) {
                x[static_cast<std::size_t>(k)] = c[static_cast<std::size_t>(k)] + sd * z[k];
                q2 += z[k] * z[k];
            }
            return g(std::span<const double>(x)) *
                   std::exp(-0.5 * dim * std::log(2.0 * M_PI) - 0.5 * q2);
        },
        lo, hi);
}

// Adaptive full-space integral: evaluated on centered boxes of doubling
// half-width; flagged infinite when the values fail to stabilize.
// Detection-grade tolerances: the stabilization threshold is 1e-6 anyway.
template <class G>
ExtendedReal expanding_box_integral(int dim, G&& g) {
    QuadOptions opt;
    opt.abs_tol = 1e-7;
    opt.rel_tol = 1e-7;
    const double radii[3] = {6.0, 12.0, 24.0};
    double vals[3];
    for (int k = 0; k < 3; ++k) {
        std::vector<double> lo(static_cast<std::size_t>(dim), -radii[k]);
        std::vector<double> hi(static_cast<std::size_t>(dim), radii[k]);
        vals[k] = integrate_box(g, lo, hi, opt);
    }
    const double drift = std::fabs(vals[2] - vals[1]);
    if (drift <= std::max(1e-9, 1e-6 * std::fabs(vals[2]))) return ExtendedReal::finite(vals[2]);
    return ExtendedReal::infinity();
}

}  // namespace

MeasureSpec MeasureSpec::lebesgue(int dim, double scale) {
    MeasureSpec m;
    m.variant = MeasureVariant::LebesgueWindow;
    m.dim = dim;
    m.density_scale = scale;
    m.validate();
    return m;
}

MeasureSpec MeasureSpec::lebesgue_window(std::vector<double> lo, std::vector<double> hi,
                                         double scale) {
    MeasureSpec m;
    m.variant = MeasureVariant::LebesgueWindow;
    m.dim = static_cast<int>(lo.size());
    m.box_lo = std::move(lo);
    m.box_hi = std::move(hi);
    m.density_scale = scale;
    m.validate();
    return m;
}

MeasureSpec MeasureSpec::gaussian_mixture(std::vector<double> weights,
                                          std::vector<std::vector<double>> centers,
                                          std::vector<double> bandwidths) {
    MeasureSpec m;
    m.variant = MeasureVariant::GaussianMixture;
    m.dim = centers.empty() ? 1 : static_cast<int>(centers.front().size());
    m.weights = std::move(weights);
    m.centers = std::move(centers);
    m.bandwidths = std::move(bandwidths);
    m.validate();
    return m;
}

MeasureSpec MeasureSpec::dirac(std::vector<double> point, double mass) {
    MeasureSpec m;
    m.variant = MeasureVariant::Dirac;
    m.dim = static_cast<int>(point.size());
    m.point = std::move(point);
    m.mass = mass;
    m.validate();
    return m;
}

MeasureSpec MeasureSpec::ia_density(int dim, double a, double scale) {
    MeasureSpec m;
    m.variant = MeasureVariant::IaDensity;
    m.dim = dim;
    m.a = a;
    m.scale = scale;
    m.validate();
    return m;
}

void MeasureSpec::validate() const {
    if (dim < 1 || dim > 3) throw ConfigError("measure: dimension must be 1..3");
    switch (variant) {
        case MeasureVariant::LebesgueWindow: {
            if (box_lo.size() != box_hi.size())
                throw ConfigError("measure: window bounds must have equal length");
            if (!box_lo.empty() && box_lo.size() != static_cast<std::size_t>(dim))
                throw ConfigError("measure: window bounds must match the dimension");
            for (std::size_t k = 0; k < box_lo.size(); ++k)
                if (!(box_lo[k] < box_hi[k]))
                    throw ConfigError("measure: window must have positive extent");
            if (!(density_scale > 0)) throw ConfigError("measure: density scale must be positive");
            return;
        }
        case MeasureVariant::GaussianMixture: {
            if (weights.empty() || weights.size() != centers.size() ||
                weights.size() != bandwidths.size())
                throw ConfigError("measure: mixture components must align");
            double total = 0;
            for (double w : weights) {
                if (!(w > 0)) throw ConfigError("measure: mixture weights must be positive");
                total += w;
            }
            if (!(total > 0)) throw ConfigError("measure: mixture mass must be positive");
            for (const auto& c : centers)
                if (c.size() != static_cast<std::size_t>(dim))
                    throw ConfigError("measure: mixture center dimension mismatch");
            for (double b : bandwidths)
                if (!(b > 0)) throw ConfigError("measure: mixture bandwidths must be positive");
            return;
        }
        case MeasureVariant::Dirac: {
            if (point.size() != static_cast<std::size_t>(dim))
                throw ConfigError("measure: atom location dimension mismatch");
            if (!(mass > 0)) throw ConfigError("measure: atom mass must be positive");
            return;
        }
        case MeasureVariant::IaDensity: {
            if (!(a >= 0)) throw ConfigError("measure: tail exponent must be nonnegative");
            if (!(scale > 0)) throw ConfigError("measure: density scale must be positive");
            return;
        }
    }
    throw ConfigError("measure: unknown variant");
}

bool MeasureSpec::is_windowed() const {
    return variant != MeasureVariant::LebesgueWindow || !box_lo.empty();
}

ExtendedReal MeasureSpec::total_mass() const {
    switch (variant) {
        case MeasureVariant::LebesgueWindow:
            if (box_lo.empty()) return ExtendedReal::infinity();
            return ExtendedReal::finite(density_scale * box_volume(box_lo, box_hi));
        case MeasureVariant::GaussianMixture: {
            double total = 0;
            for (double w : weights) total += w;
            return ExtendedReal::finite(total);
        }
        case MeasureVariant::Dirac:
            return ExtendedReal::finite(mass);
        case MeasureVariant::IaDensity:
            if (a > dim) return ExtendedReal::finite(ia_total_mass(dim, a, scale));
            return ExtendedReal::infinity();
    }
    return ExtendedReal::infinity();
}

Field Field::gaussian(double s, std::vector<double> center) {
    if (!(s > 0)) throw std::invalid_argument("Field::gaussian: variance must be positive");
    Field f;
    f.kind_ = Kind::Gaussian;
    f.s_ = s;
    f.shift_ = std::move(center);
    return f;
}

Field Field::mollifier(double a, std::vector<double> shift) {
    if (!(a >= 0)) throw std::invalid_argument("Field::mollifier: exponent must be nonnegative");
    Field f;
    f.kind_ = Kind::Mollifier;
    f.a_ = a;
    f.shift_ = std::move(shift);
    return f;
}

Field Field::generic(std::function<double(std::span<const double>)> f) {
    Field g;
    g.kind_ = Kind::Generic;
    g.f_ = std::move(f);
    return g;
}

double Field::operator()(std::span<const double> x) const {
    switch (kind_) {
        case Kind::Gaussian:
            return gaussian_density_r2(s_, sq_dist(shift_, x), static_cast<int>(x.size()));
        case Kind::Mollifier: {
            double r2 = 0;
            for (std::size_t k = 0; k < x.size(); ++k) {
                const double v = x[k] + (k < shift_.size() ? shift_[k] : 0.0);
                r2 += v * v;
            }
            return std::exp(-0.5 * a_ * std::log1p(r2));
        }
        case Kind::Generic:
            return f_(x);
    }
    return 0;
}

double ia_total_mass(int dim, double a, double scale) {
    if (!(a > dim)) throw std::invalid_argument("ia_total_mass: requires a > d");
    return scale * std::exp(0.5 * dim * std::log(M_PI) + std::lgamma(0.5 * (a - dim)) -
                            std::lgamma(0.5 * a));
}

ExtendedReal pair(const MeasureSpec& mu, const Field& f) {
    mu.validate();
    const int d = mu.dim;

    switch (mu.variant) {
        case MeasureVariant::Dirac:
            return ExtendedReal::finite(mu.mass * f(mu.point));

        case MeasureVariant::GaussianMixture: {
            double acc = 0;
            for (std::size_t i = 0; i < mu.weights.size(); ++i) {
                const double b = mu.bandwidths[i];
                const auto& c = mu.centers[i];
                if (f.gaussian_form()) {
                    // convolution identity: int phi_s(y-x) phi_b(x-c) dx = phi_{s+b}(y-c)
                    acc += mu.weights[i] *
                           gaussian_density_r2(f.gaussian_s() + b, sq_dist(f.shift(), c), d);
                    continue;
                }
                acc += mu.weights[i] *
                       gaussian_expectation(d, c, std::sqrt(b),
                                            [&](std::span<const double> x) { return f(x); });
            }
            return ExtendedReal::finite(acc);
        }

        case MeasureVariant::LebesgueWindow: {
            if (!mu.box_lo.empty()) {
                if (f.gaussian_form()) {
                    double m = mu.density_scale;
                    for (int k = 0; k < d; ++k)
                        m *= gauss_mass_1d(f.gaussian_s(), f.shift()[static_cast<std::size_t>(k)],
                                           mu.box_lo[static_cast<std::size_t>(k)],
                                           mu.box_hi[static_cast<std::size_t>(k)]);
                    return ExtendedReal::finite(m);
                }
                const double v = integrate_box(
                    [&](const double* p) {
                        return f(std::span<const double>(p, static_cast<std::size_t>(d)));
                    },
                    mu.box_lo, mu.box_hi);
                return ExtendedReal::finite(mu.density_scale * v);
            }
            // full space
            if (f.gaussian_form()) return ExtendedReal::finite(mu.density_scale);
            if (f.mollifier_form()) {
                // shift-invariant under Lebesgue measure
                if (f.mollifier_a() > d)
                    return ExtendedReal::finite(ia_total_mass(d, f.mollifier_a(), mu.density_scale));
                return ExtendedReal::infinity();
            }
            const auto r = expanding_box_integral(d, [&](const double* p) {
                return f(std::span<const double>(p, static_cast<std::size_t>(d)));
            });
            if (r.is_infinite()) return r;
            return ExtendedReal::finite(mu.density_scale * r.value());
        }

        case MeasureVariant::IaDensity: {
            if (f.gaussian_form()) {
                const double v = gaussian_expectation(
                    d, f.shift(), std::sqrt(f.gaussian_s()), [&](std::span<const double> x) {
                        return std::exp(-0.5 * mu.a * std::log1p(sqnorm(x)));
                    });
                return ExtendedReal::finite(mu.scale * v);
            }
            if (f.mollifier_form() && (f.shift().empty() ||
                                       sqnorm(f.shift()) == 0.0)) {
                const double total_exp = mu.a + f.mollifier_a();
                if (total_exp > d)
                    return ExtendedReal::finite(ia_total_mass(d, total_exp, mu.scale));
                return ExtendedReal::infinity();
            }
            const auto r = expanding_box_integral(d, [&](const double* p) {
                std::span<const double> x(p, static_cast<std::size_t>(d));
                return f(x) * std::exp(-0.5 * mu.a * std::log1p(sqnorm(x)));
            });
            if (r.is_infinite()) return r;
            return ExtendedReal::finite(mu.scale * r.value());
        }
    }
    throw ConfigError("measure: unknown variant");
}

namespace {

std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    if (n == 1) {
        v[0] = 0.5 * (lo + hi);
        return v;
    }
    for (int i = 0; i < n; ++i)
        v[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
    return v;
}

// default search box per measure variant, centered on its relevant region
SearchBox default_box(const MeasureSpec& mu) {
    SearchBox box;
    const auto d = static_cast<std::size_t>(mu.dim);
    box.lo.assign(d, -3.0);
    box.hi.assign(d, 3.0);
    switch (mu.variant) {
        case MeasureVariant::LebesgueWindow:
            if (!mu.box_lo.empty()) {
                box.lo = mu.box_lo;
                box.hi = mu.box_hi;
                for (std::size_t k = 0; k < d; ++k) {
                    box.lo[k] -= 1.0;
                    box.hi[k] += 1.0;
                }
            }
            break;
        case MeasureVariant::GaussianMixture: {
            double bmax = 0;
            for (double b : mu.bandwidths) bmax = std::max(bmax, b);
            const double pad = 4.0 * std::sqrt(bmax);
            for (std::size_t k = 0; k < d; ++k) {
                double lo = mu.centers[0][k], hi = mu.centers[0][k];
                for (const auto& c : mu.centers) {
                    lo = std::min(lo, c[k]);
                    hi = std::max(hi, c[k]);
                }
                box.lo[k] = lo - pad;
                box.hi[k] = hi + pad;
            }
            break;
        }
        case MeasureVariant::Dirac:
            box.lo.assign(d, 0.0);
            box.hi.assign(d, 0.0);
            break;
        case MeasureVariant::IaDensity:
            box.lo.assign(d, -2.0);
            box.hi.assign(d, 2.0);
            break;
    }
    return box;
}

// Iterate over the lattice points of a box; f receives the point.
template <class F>
void for_each_grid_point(const SearchBox& box, int dim, F&& f) {
    const int n = std::max(1, box.points_per_dim);
    std::vector<std::vector<double>> axes;
    for (int k = 0; k < dim; ++k)
        axes.push_back(linspace(box.lo[static_cast<std::size_t>(k)],
                                box.hi[static_cast<std::size_t>(k)], n));
    std::vector<double> p(static_cast<std::size_t>(dim));
    std::vector<int> idx(static_cast<std::size_t>(dim), 0);
    while (true) {
        for (int k = 0; k < dim; ++k)
            p[static_cast<std::size_t>(k)] =
                axes[static_cast<std::size_t>(k)][static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])];
        f(p);
        int k = 0;
        while (k < dim) {
            if (++idx[static_cast<std::size_t>(k)] < n) break;
            idx[static_cast<std::size_t>(k)] = 0;
            ++k;
        }
        if (k == dim) break;
    }
}

double mixture_density0(const MeasureSpec& mu, std::span<const double> y) {
    double acc = 0;
    for (std::size_t i = 0; i < mu.weights.size(); ++i)
        acc += mu.weights[i] *
               gaussian_density_r2(mu.bandwidths[i], sq_dist(y, mu.centers[i]), mu.dim);
    return acc;
}

// Coordinate-wise pattern search: polish a grid maximizer of g to local
// optimality. step halves on failure; ~60 evaluations per call.
template <class G>
double pattern_search_max(std::vector<double> y, double step, G&& g) {
    double best = g(y);
    while (step > 1e-10) {
        bool improved = false;
        for (std::size_t k = 0; k < y.size(); ++k) {
            for (double dir : {step, -step}) {
                y[k] += dir;
                const double v = g(y);
                if (v > best) {
                    best = v;
                    improved = true;
                } else {
                    y[k] -= dir;
                }
            }
        }
        if (!improved) step *= 0.5;
    }
    return best;
}

}  // namespace

ExtendedReal upsilon(const MeasureSpec& mu, double t, const SupGrid& grid) {
    mu.validate();
    if (!(t > 0)) throw ConfigError("upsilon: horizon must be positive");
    if (mu.variant == MeasureVariant::Dirac) return ExtendedReal::infinity();

    // Analytic value. The heat flow is sup-norm nonincreasing, so the
    // supremum over s in (0, t] is the s -> 0 limit: the supremum of the
    // density itself.
    double analytic = 0;
    SearchBox box = grid.box;
    if (box.lo.empty()) {
        box = default_box(mu);
        box.points_per_dim = grid.box.points_per_dim;
    }
    switch (mu.variant) {
        case MeasureVariant::LebesgueWindow:
            analytic = mu.density_scale;
            break;
        case MeasureVariant::GaussianMixture: {
            double best = 0;
            std::vector<double> argbest = mu.centers.front();
            auto consider = [&](const std::vector<double>& y) {
                const double v = mixture_density0(mu, y);
                if (v > best) {
                    best = v;
                    argbest = y;
                }
            };
            for (const auto& c : mu.centers) consider(c);
            for_each_grid_point(box, mu.dim, consider);
            double spacing = 0;
            for (std::size_t k = 0; k < box.lo.size(); ++k)
                spacing = std::max(spacing, (box.hi[k] - box.lo[k]) /
                                                std::max(1, box.points_per_dim - 1));
            analytic = pattern_search_max(
                argbest, std::max(spacing, 1e-3),
                [&](const std::vector<double>& y) { return mixture_density0(mu, y); });
            break;
        }
        case MeasureVariant::IaDensity:
            analytic = mu.scale;  // density peaks at the origin with value scale
            break;
        case MeasureVariant::Dirac:
            break;  // unreachable
    }

    // Grid confirmation through the pairing. Quadrature-backed variants get
    // a sparser grid; the analytic value is authoritative either way.
    int s_points = grid.s_points;
    SearchBox confirm = box;
    if (mu.variant == MeasureVariant::IaDensity) {
        s_points = std::min(s_points, 6);
        confirm.points_per_dim = std::min(confirm.points_per_dim, 5);
    }
    double gmax = 0;
    for (int si = 0; si < s_points; ++si) {
        const double frac = s_points == 1 ? 1.0
                                          : static_cast<double>(si) / (s_points - 1);
        const double s = grid.s_min * std::pow(t / grid.s_min, frac);
        for_each_grid_point(confirm, mu.dim, [&](const std::vector<double>& y) {
            const auto v = pair(mu, Field::gaussian(s, y));
            if (v.is_finite()) gmax = std::max(gmax, v.value());
        });
    }
    return ExtendedReal::finite(std::max(analytic, gmax));
}

ExtendedReal check_uniform_integ(const MeasureSpec& mu, double a, const SearchBox& box_in) {
    mu.validate();
    if (!(a >= 0)) throw ConfigError("check_uniform_integ: exponent must be nonnegative");

    switch (mu.variant) {
        case MeasureVariant::Dirac:
            // supremum attained at w = -x0 where the mollifier equals 1
            return ExtendedReal::finite(mu.mass);
        case MeasureVariant::LebesgueWindow:
            if (mu.box_lo.empty()) {
                if (a > mu.dim)
                    return ExtendedReal::finite(ia_total_mass(mu.dim, a, mu.density_scale));
                return ExtendedReal::infinity();
            }
            break;
        case MeasureVariant::IaDensity: {
            // the translated pairing is maximal at w = 0 (radially
            // nonincreasing density against a radially nonincreasing kernel)
            const double total_exp = mu.a + a;
            if (total_exp > mu.dim)
                return ExtendedReal::finite(ia_total_mass(mu.dim, total_exp, mu.scale));
            return ExtendedReal::infinity();
        }
        case MeasureVariant::GaussianMixture:
            break;
    }

    // Grid search over the translation. Candidates: lattice points plus the
    // obvious maximizers (negated centers).
    SearchBox box = box_in;
    if (box.lo.empty()) {
        box = default_box(mu);
        box.points_per_dim = box_in.points_per_dim;
        for (std::size_t k = 0; k < box.lo.size(); ++k) {
            const double lo = box.lo[k], hi = box.hi[k];
            box.lo[k] = -hi;
            box.hi[k] = -lo;
        }
    }
    double best = 0;
    auto eval = [&](const std::vector<double>& w) {
        const auto v = pair(mu, Field::mollifier(a, w));
        if (v.is_finite()) best = std::max(best, v.value());
    };
    if (mu.variant == MeasureVariant::GaussianMixture) {
        for (const auto& c : mu.centers) {
            std::vector<double> w(c);
            for (auto& x : w) x = -x;
            eval(w);
        }
    }
    if (mu.variant == MeasureVariant::LebesgueWindow) {
        std::vector<double> w(static_cast<std::size_t>(mu.dim));
        for (std::size_t k = 0; k < w.size(); ++k) w[k] = -0.5 * (mu.box_lo[k] + mu.box_hi[k]);
        eval(w);
    }
    for_each_grid_point(box, mu.dim, eval);
    return ExtendedReal::finite(best);
}

ParticleCloud sample(const MeasureSpec& mu, std::size_t n, RngStream& rng) {
    mu.validate();
    if (n < 1) throw ConfigError("sample: particle count must be at least 1");
    const auto total = mu.total_mass();
    if (total.is_infinite())
        throw ConfigError("sample: measure has infinite mass; window it first");

    ParticleCloud pc;
    pc.dim = mu.dim;
    pc.masses.assign(n, total.value() / static_cast<double>(n));
    pc.pos.resize(n * static_cast<std::size_t>(mu.dim));
    const auto d = static_cast<std::size_t>(mu.dim);

    switch (mu.variant) {
        case MeasureVariant::Dirac:
            for (std::size_t i = 0; i < n; ++i)
                std::copy(mu.point.begin(), mu.point.end(), pc.pos.begin() + i * d);
            break;
        case MeasureVariant::LebesgueWindow:
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t k = 0; k < d; ++k)
                    pc.pos[i * d + k] =
                        mu.box_lo[k] + rng.uniform() * (mu.box_hi[k] - mu.box_lo[k]);
            break;
        case MeasureVariant::GaussianMixture: {
            std::vector<double> cum(mu.weights.size());
            double acc = 0;
            for (std::size_t i = 0; i < mu.weights.size(); ++i) {
                acc += mu.weights[i];
                cum[i] = acc;
            }
            for (std::size_t i = 0; i < n; ++i) {
                const double u = rng.uniform() * acc;
                std::size_t c = 0;
                while (c + 1 < cum.size() && u >= cum[c]) ++c;
                const double sd = std::sqrt(mu.bandwidths[c]);
                for (std::size_t k = 0; k < d; ++k)
                    pc.pos[i * d + k] = mu.centers[c][k] + sd * rng.normal();
            }
            break;
        }
        case MeasureVariant::IaDensity: {
            // Student-t representation: x = z / sqrt(chi^2_nu), nu = a - d,
            // gives density proportional to (1 + |x|^2)^{-a/2}.
            const double nu = mu.a - mu.dim;
            for (std::size_t i = 0; i < n; ++i) {
                std::vector<double> z(d);
                for (auto& v : z) v = rng.normal();
                const double chi2 = 2.0 * rng.gamma(0.5 * nu);
                const double denom = std::sqrt(chi2);
                for (std::size_t k = 0; k < d; ++k) pc.pos[i * d + k] = z[k] / denom;
            }
            break;
        }
    }
    return pc;
}

}  // namespace sdsmlab
