#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sdsmlab/kernels.hpp"
#include "sdsmlab/measures.hpp"
#include "sdsmlab/rng.hpp"

namespace sdsmlab {

// Noise of one Euler-Maruyama step, kept for downstream stochastic
// integrals. All arrays are row-major n x dim against the pre-step cloud;
// common is identically zero when the model has no common noise.
struct StepRecord {
    double t0 = 0;
    double dt = 0;
    int dim = 1;
    std::vector<double> positions;
    std::vector<double> common;
    std::vector<double> individual;

    std::size_t count() const { return positions.size() / static_cast<std::size_t>(dim); }
    std::span<const double> position(std::size_t i) const {
        return {positions.data() + i * static_cast<std::size_t>(dim),
                static_cast<std::size_t>(dim)};
    }
    std::span<const double> common_inc(std::size_t i) const {
        return {common.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
    }
    std::span<const double> individual_inc(std::size_t i) const {
        return {individual.data() + i * static_cast<std::size_t>(dim),
                static_cast<std::size_t>(dim)};
    }
};

// One critical binary branching outcome: a death (delta = -mass) or a
// split (delta = +mass, the extra offspring).
struct BranchEvent {
    double time = 0;
    std::vector<double> position;
    double delta_mass = 0;
};

struct RunConfig {
    KernelModel model = KernelModel::standard(1);
    MeasureSpec mu0 = MeasureSpec::dirac({0.0});
    std::size_t particles = 100;
    double dt = 1e-3;
    double horizon = 1.0;
    // Continuum branching rate: the martingale measure picks up quadratic
    // variation gamma*sigma2 * int <phi^2, mu_s> ds. The per-particle
    // branch probability is gamma*sigma2/mass_per_particle * dt.
    double gamma = 0;
    double sigma2 = 1.0;
    std::vector<double> snapshots;  // 0 and horizon are always recorded
    std::uint64_t seed = 1;
    bool keep_steps = true;
    // Skips the bounded-density check on mu0 (atomic initial measures are
    // fine for plain simulation, only local-time work needs the bound).
    bool waive_measure_checks = false;
};

struct SimPath {
    std::vector<double> snapshot_times;
    std::vector<ParticleCloud> clouds;
    std::vector<StepRecord> steps;  // empty when keep_steps is false
    std::vector<BranchEvent> events;
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;
    bool extinct = false;
    double extinct_time = std::numeric_limits<double>::quiet_NaN();
};

// Joint Gaussian increment over all particles with covariance Gamma(x)*dt:
// independent part c*dB_i plus a common part with cross-covariance
// rho(x_i - x_j)*dt, sampled by Cholesky factorization of the n x n scalar
// correlation block (the amplitude vector factors out). On factorization
// failure the block gets one 1e-12*trace jitter, then a hard error.
std::pair<ParticleCloud, StepRecord> diffuse_step(const ParticleCloud& cloud,
                                                  const KernelModel& model, double dt,
                                                  RngStream& rng);

// Critical binary branching: each particle independently dies or splits
// with probability gamma*sigma2*dt (half each). Offspring inherit position
// and mass. The cloud's clock does not advance (branching is attached to
// the end of the preceding diffusion interval). An empty input stays empty.
std::pair<ParticleCloud, std::vector<BranchEvent>> branch_step(const ParticleCloud& cloud,
                                                               double gamma, double sigma2,
                                                               double dt, RngStream& rng);

// Invoked once per completed step with the diffusion record, the branch
// events of that step, and the post-step cloud. Lets local-time integrals
// stream over the noise instead of retaining every StepRecord.
using StepObserver =
    std::function<void(const StepRecord&, const std::vector<BranchEvent>&, const ParticleCloud&)>;

SimPath run_sdsm(const RunConfig& config);
SimPath run_sdsm(const RunConfig& config, const StepObserver& observe);

// Empirical pairing sum_i mass_i f(x_i); f takes a point as a span.
template <class F>
double pair_empirical(const ParticleCloud& cloud, F&& f) {
    double s = 0;
    for (std::size_t i = 0; i < cloud.size(); ++i) s += cloud.masses[i] * f(cloud.at(i));
    return s;
}

// Fingerprint of the experiment identity (model, mu0, discretization,
// rates, snapshots, seed). Storage switches are excluded on purpose: they
// do not change the law of the path.
std::uint64_t config_hash(const RunConfig& config);

// Fingerprint of snapshots + event log + seed + config hash. Step records
// are excluded so the hash is storage-mode independent.
std::uint64_t sim_path_hash(const SimPath& path);

// Smooth scalar test function carrying the derivatives the weak-form
// checks need: gradient and the generator action
// G1 phi = (1/2) sum_pq sigma_pq d_p d_q phi.
class TestField {
public:
    static TestField gaussian(int dim, double s, std::vector<double> center,
                              double amplitude = 1.0);
    static TestField constant(int dim, double value);

    int dim() const noexcept { return dim_; }
    double value(std::span<const double> x) const;
    void gradient(std::span<const double> x, std::span<double> out) const;
    double generator(std::span<const double> x, const Eigen::MatrixXd& sigma) const;

private:
    enum class Kind { Gaussian, Constant };
    TestField() = default;
    Kind kind_ = Kind::Constant;
    int dim_ = 1;
    double s_ = 1.0;
    double amp_ = 0.0;
    std::vector<double> center_;
};

struct QvReport {
    std::size_t replicas = 0;
    double mean = 0, se_mean = 0;
    double variance = 0, se_variance = 0;
    double predicted = 0, se_predicted = 0;
    double tol = 3.0;
    bool mean_ok = false;
    bool var_ok = false;
    bool ok() const { return mean_ok && var_ok; }
};

// Weak-form residual D_t(phi) = <phi,mu_T> - <phi,mu_0> - int <G1 phi, mu_s> ds
// per replica. Checks the replica mean against 0 and the replica variance
// against the accumulated quadratic-variation prediction
//   int [ gamma sigma2 <phi^2, mu_s> + (int (sum_p <h_p(y-.) d_p phi, mu_s>)^2 dy)
//         + sum_i mass_i^2 (grad phi)^T a (grad phi)(x_i) ] ds,
// the last term being the finite-N individual-noise contribution. Paths
// must carry snapshots at 0 and horizon and their step records.
QvReport spde_qv_check(std::span<const SimPath> paths, const TestField& phi,
                       const RunConfig& config, double tol = 3.0);

}  // namespace sdsmlab
