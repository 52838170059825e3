#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sdsmlab/measures.hpp"
#include "sdsmlab/particle.hpp"
#include "sdsmlab/rng.hpp"

namespace sdsmlab {

// One Gaussian density factor phi_s(x - z).
struct GaussianFactor {
    double s = 1.0;
    std::vector<double> z;
};

// Product test function on (R^d)^m: f(x_1..x_m) = prod_k phi_{s_k}(x_k - z_k).
struct ProductFunction {
    int dim = 1;
    std::vector<GaussianFactor> factors;  // one per coordinate

    std::size_t m() const { return factors.size(); }
    void validate() const;
    double value(std::span<const double> points) const;  // m*dim packed coordinates
};

// Function-valued dual state: a Gaussian product over `coords.size()`
// coordinates, each coordinate carrying a factor list (kept at length one
// by the eager merges in apply_jump), together with the accumulated merge
// scales in log space. Plain aggregate so tests can assemble arbitrary
// states; the operations below maintain the invariants.
struct DualState {
    int dim = 1;
    std::vector<std::vector<GaussianFactor>> coords;
    double log_prefactor = 0;
    std::vector<double> jumps;  // times at which coordinates merged
    double elapsed = 0;

    std::size_t count() const { return coords.size(); }  // J
    // prefactor * product of Gaussian densities, points packed J*dim.
    double value(std::span<const double> points) const;
};

DualState dual_from_function(const ProductFunction& f);

// Heat flow on the Gaussian family: every factor bandwidth grows by dt,
// the prefactor is untouched. Composition is additive in dt. Exact for the
// degenerate kernel (unit diffusion) only.
DualState evolve(DualState state, double dt);

// Coordinate-identification projection: coordinate j's factors move onto
// coordinate i and everything on i is merged pairwise,
//   phi_u(x - z1) phi_v(x - z2)
//     = phi_{u+v}(z1 - z2) * phi_{uv/(u+v)}(x - (v z1 + u z2)/(u+v)),
// with the scale folded into log_prefactor. J drops by one and the jump is
// stamped with the state's elapsed clock.
DualState apply_jump(DualState state, std::size_t i, std::size_t j);

// Successive exponential waits with rate gamma_sigma2 * l(l-1)/2 at level
// l, truncated at t; the count process freezes at l = 1.
std::vector<double> jump_times(std::size_t m, double gamma_sigma2, double t, RngStream& rng);

// int_0^t J_s(J_s-1) ds for J piecewise constant between the given jump
// times, starting at J_0 = m. Exact.
double dual_weight_integral(std::size_t m, std::span<const double> jumps, double t);

struct DualRunResult {
    DualState state;
    double log_weight = 0;  // (gamma_sigma2/2) int J(J-1)
    double pairing = 0;     // <Y_t, mu0^{J_t}>
    double value() const;
};

// One dual trajectory: evolve between jumps, merge a uniformly drawn
// ordered coordinate pair at each jump, pair the terminal state against
// the product measure mu0^{J_t}.
DualRunResult run_dual(const ProductFunction& f, const MeasureSpec& mu0, double t,
                       double gamma_sigma2, RngStream& rng);

struct MCEstimate {
    double estimate = 0;
    double se = 0;
    std::size_t replicas = 0;
};

// Monte-Carlo mean of weight * <Y_t, mu0^{J_t}> over dual trajectories.
// For m = 1 the dual is deterministic and the single evaluation is
// returned with zero standard error.
MCEstimate duality_rhs(const ProductFunction& f, const MeasureSpec& mu0, double t,
                       double gamma_sigma2, std::size_t replicas, RngStream& rng);

struct DualityReport {
    double lhs = 0, lhs_se = 0;  // particle estimate of E <f, mu_t^m>
    double rhs = 0, rhs_se = 0;  // dual estimate
    double z_score = 0;
    bool pass = false;
    std::size_t particle_replicas = 0;
    std::size_t dual_replicas = 0;
};

// Both sides of the moment duality at m in {1, 2}. The particle side runs
// `particle_replicas` independent simulations of `config` (mu0, horizon and
// rates are read from it); the dual side uses the exact engine, which
// requires the degenerate kernel (h = 0, c = identity). Pass iff the
// difference is within tol combined standard errors.
DualityReport duality_check(const ProductFunction& f, const RunConfig& config,
                            std::size_t particle_replicas, std::size_t dual_replicas,
                            double tol = 3.0);

}  // namespace sdsmlab
