#pragma once

#include <functional>
#include <span>
#include <vector>

#include "sdsmlab/core.hpp"
#include "sdsmlab/rng.hpp"

namespace sdsmlab {

enum class MeasureVariant { LebesgueWindow, GaussianMixture, Dirac, IaDensity };

// Symbolic initial measure. A LebesgueWindow with an empty box means all of
// R^d (valid for pairings and suprema, rejected by the particle sampler).
// IaDensity has density scale * (1 + |x|^2)^{-a/2}; it is a finite measure
// iff a > d.
struct MeasureSpec {
    MeasureVariant variant = MeasureVariant::Dirac;
    int dim = 1;

    std::vector<double> box_lo, box_hi;  // LebesgueWindow
    double density_scale = 1.0;

    std::vector<double> weights;  // GaussianMixture
    std::vector<std::vector<double>> centers;
    std::vector<double> bandwidths;

    std::vector<double> point;  // Dirac
    double mass = 1.0;

    double a = 0.0;  // IaDensity
    double scale = 1.0;

    static MeasureSpec lebesgue(int dim, double scale = 1.0);
    static MeasureSpec lebesgue_window(std::vector<double> lo, std::vector<double> hi,
                                       double scale = 1.0);
    static MeasureSpec gaussian_mixture(std::vector<double> weights,
                                        std::vector<std::vector<double>> centers,
                                        std::vector<double> bandwidths);
    static MeasureSpec dirac(std::vector<double> point, double mass = 1.0);
    static MeasureSpec ia_density(int dim, double a, double scale = 1.0);

    void validate() const;  // throws ConfigError on structural violations
    bool is_windowed() const;
    ExtendedReal total_mass() const;
};

// Scalar test field. The Gaussian and mollifier constructors carry their
// parameters so pairings can take closed forms; generic fields always go
// through quadrature.
class Field {
public:
    static Field gaussian(double s, std::vector<double> center);  // phi_s(center - x)
    static Field mollifier(double a, std::vector<double> shift = {});  // I_a(x + shift)
    static Field generic(std::function<double(std::span<const double>)> f);

    double operator()(std::span<const double> x) const;

    bool gaussian_form() const noexcept { return kind_ == Kind::Gaussian; }
    bool mollifier_form() const noexcept { return kind_ == Kind::Mollifier; }
    double gaussian_s() const noexcept { return s_; }
    double mollifier_a() const noexcept { return a_; }
    const std::vector<double>& shift() const noexcept { return shift_; }  // center or shift

private:
    enum class Kind { Gaussian, Mollifier, Generic };
    Field() = default;
    Kind kind_ = Kind::Generic;
    double s_ = 0, a_ = 0;
    std::vector<double> shift_;
    std::function<double(std::span<const double>)> f_;
};

// Empirical measure: positions row-major N x dim, one mass per particle.
// Dead particles are removed outright, so size() is the alive count.
struct ParticleCloud {
    int dim = 1;
    double time = 0.0;
    std::vector<double> pos;
    std::vector<double> masses;

    std::size_t size() const { return masses.size(); }
    std::size_t alive_count() const { return masses.size(); }
    std::span<const double> at(std::size_t i) const {
        return {pos.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
    }
    std::span<double> at(std::size_t i) {
        return {pos.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
    }
    double total_mass() const {
        double s = 0;
        for (double m : masses) s += m;
        return s;
    }
};

// <f, mu> = int f dmu. Closed forms: Dirac with anything, GaussianMixture
// with a Gaussian field, full-space Lebesgue with a Gaussian or mollifier
// field, IaDensity with an unshifted mollifier. Everything else is adaptive
// quadrature; full-space integrals against generic fields are evaluated on
// expanding boxes and flagged infinite when they fail to stabilize.
ExtendedReal pair(const MeasureSpec& mu, const Field& f);

// Rectangular search box with a uniform grid; empty bounds mean a
// per-variant default.
struct SearchBox {
    std::vector<double> lo, hi;
    int points_per_dim = 9;
};

// Supremum search grid: log-spaced s down to s_min, y over a box.
struct SupGrid {
    int s_points = 64;
    double s_min = 1e-6;
    SearchBox box{};
};

// sup over y and 0 < s <= t of <phi_s(y - .), mu>. Analytic per variant
// (the small-s limit dominates: the heat flow is sup-norm nonincreasing),
// confirmed against the grid; +infinity for measures with atoms.
ExtendedReal upsilon(const MeasureSpec& mu, double t, const SupGrid& grid = {});

// sup over w of <I_a(. + w), mu>. Finite for every finite measure (bounded
// by total mass); for infinite measures finiteness depends on the tail.
ExtendedReal check_uniform_integ(const MeasureSpec& mu, double a, const SearchBox& box = {});

// N i.i.d. positions from the normalized measure, each carrying
// total_mass / N. Deterministic given the stream.
ParticleCloud sample(const MeasureSpec& mu, std::size_t n, RngStream& rng);

// int (1 + |x|^2)^{-a/2} dx over R^d = pi^{d/2} Gamma((a-d)/2) / Gamma(a/2),
// for a > d.
double ia_total_mass(int dim, double a, double scale = 1.0);

}  // namespace sdsmlab
