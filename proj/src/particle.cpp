#include "sdsmlab/particle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>

#include "sdsmlab/stats.hpp"

namespace sdsmlab {

namespace {

double dist2(std::span<const double> x, std::span<const double> y) {
    double s = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double d = x[k] - y[k];
        s += d * d;
    }
    return s;
}

void append_num(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g;", v);
    out += buf;
}

void append_num(std::string& out, long long v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%lld;", v);
    out += buf;
}

void append_all(std::string& out, const std::vector<double>& vs) {
    append_num(out, static_cast<long long>(vs.size()));
    for (double v : vs) append_num(out, v);
}

// Stream id for run_sdsm's internal draws under the splittable-seed rule.
constexpr std::uint64_t kRunStreamComponent = 2;

}  // namespace

std::pair<ParticleCloud, StepRecord> diffuse_step(const ParticleCloud& cloud,
                                                  const KernelModel& model, double dt,
                                                  RngStream& rng) {
    const std::size_t n = cloud.size();
    const int d = cloud.dim;
    if (n == 0) throw std::invalid_argument("diffuse_step: empty cloud");
    if (!(dt > 0)) throw std::invalid_argument("diffuse_step: dt must be positive");
    if (model.dim() != d) throw std::invalid_argument("diffuse_step: model dimension mismatch");

    StepRecord rec;
    rec.t0 = cloud.time;
    rec.dt = dt;
    rec.dim = d;
    rec.positions = cloud.pos;
    rec.individual.resize(n * static_cast<std::size_t>(d));
    rec.common.assign(n * static_cast<std::size_t>(d), 0.0);
    const double sq = std::sqrt(dt);

    // Individual part first, then the common field; the draw order is part
    // of the reproducibility contract.
    const bool ident = model.c_kind() == CKind::Identity;
    const Eigen::MatrixXd& C = model.c();
    double z[3];
    for (std::size_t i = 0; i < n; ++i) {
        for (int p = 0; p < d; ++p) z[p] = rng.normal();
        double* out = rec.individual.data() + i * static_cast<std::size_t>(d);
        if (ident) {
            for (int p = 0; p < d; ++p) out[p] = z[p] * sq;
        } else {
            for (int p = 0; p < d; ++p) {
                double acc = 0;
                for (int q = 0; q < d; ++q) acc += C(p, q) * z[q];
                out[p] = acc * sq;
            }
        }
    }

    if (model.has_common_noise()) {
        // The cross-covariance block is rank-one in the component pair:
        // rho_pq(x_i - x_j) = g_p g_q corr(x_i - x_j). One scalar Gaussian
        // field over the particles suffices; amplitudes scale it per
        // component afterwards.
        Eigen::MatrixXd K(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j <= i; ++j) {
                const double v = model.rho_scalar_fast(dist2(cloud.at(i), cloud.at(j)));
                K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
                K(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
            }
        }
        Eigen::LLT<Eigen::MatrixXd> llt(K);
        if (llt.info() != Eigen::Success) {
            // Coincident particles (or quadrature noise in tabulated
            // kernels) can push an eigenvalue to -1e-15; one jitter is
            // allowed, anything worse is a real model problem.
            const double jitter = 1e-12 * K.trace();
            K.diagonal().array() += jitter;
            llt.compute(K);
            if (llt.info() != Eigen::Success)
                throw NumericError("diffuse_step: common covariance factorization failed",
                                   jitter);
        }
        Eigen::VectorXd xi(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) xi(static_cast<Eigen::Index>(i)) = rng.normal();
        const Eigen::VectorXd S = llt.matrixL() * xi;
        const auto& g = model.common_amplitude();
        for (std::size_t i = 0; i < n; ++i) {
            const double s = S(static_cast<Eigen::Index>(i)) * sq;
            double* out = rec.common.data() + i * static_cast<std::size_t>(d);
            for (int p = 0; p < d; ++p) out[p] = g[static_cast<std::size_t>(p)] * s;
        }
    }

    ParticleCloud next = cloud;
    for (std::size_t k = 0; k < next.pos.size(); ++k)
        next.pos[k] += rec.individual[k] + rec.common[k];
    next.time += dt;
    return {std::move(next), std::move(rec)};
}

std::pair<ParticleCloud, std::vector<BranchEvent>> branch_step(const ParticleCloud& cloud,
                                                               double gamma, double sigma2,
                                                               double dt, RngStream& rng) {
    if (gamma < 0 || sigma2 < 0) throw ConfigError("branch_step: negative branching rate");
    if (dt < 0) throw ConfigError("branch_step: negative time step");
    const double p = gamma * sigma2 * dt;
    if (!(p < 0.5))
        throw ConfigError("branch_step: gamma*sigma2*dt = " + detail::sci(p) +
                          " breaches the 0.5 stability guard");

    std::vector<BranchEvent> events;
    if (p == 0.0 || cloud.size() == 0) return {cloud, std::move(events)};

    const auto d = static_cast<std::size_t>(cloud.dim);
    ParticleCloud next;
    next.dim = cloud.dim;
    next.time = cloud.time;
    next.pos.reserve(cloud.pos.size() + d * 8);
    next.masses.reserve(cloud.masses.size() + 8);

    for (std::size_t i = 0; i < cloud.size(); ++i) {
        // One draw decides: [0, p/2) death, [p/2, p) split, rest survive.
        const double u = rng.uniform();
        const double m = cloud.masses[i];
        const auto x = cloud.at(i);
        if (u < 0.5 * p) {
            events.push_back({cloud.time, {x.begin(), x.end()}, -m});
            continue;
        }
        next.pos.insert(next.pos.end(), x.begin(), x.end());
        next.masses.push_back(m);
        if (u < p) {
            next.pos.insert(next.pos.end(), x.begin(), x.end());
            next.masses.push_back(m);
            events.push_back({cloud.time, {x.begin(), x.end()}, +m});
        }
    }
    return {std::move(next), std::move(events)};
}

SimPath run_sdsm(const RunConfig& config) { return run_sdsm(config, StepObserver{}); }

SimPath run_sdsm(const RunConfig& config, const StepObserver& observe) {
    config.mu0.validate();
    const int d = config.model.dim();
    if (d != config.mu0.dim)
        throw ConfigError("run_sdsm: model and initial measure dimension mismatch");
    if (!(config.dt > 0)) throw ConfigError("run_sdsm: dt must be positive");
    if (config.horizon < 0) throw ConfigError("run_sdsm: horizon must be nonnegative");
    if (config.particles < 1) throw ConfigError("run_sdsm: need at least one particle");
    if (config.gamma < 0 || config.sigma2 < 0)
        throw ConfigError("run_sdsm: negative branching rate");

    const long long steps = std::llround(config.horizon / config.dt);
    if (std::fabs(static_cast<double>(steps) * config.dt - config.horizon) >
        1e-9 * std::max(1.0, config.horizon))
        throw ConfigError("run_sdsm: horizon must be an integer multiple of dt");

    const auto total = config.mu0.total_mass();
    if (total.is_infinite())
        throw ConfigError("run_sdsm: initial measure has infinite mass; window it first");
    const double mass0 = total.value() / static_cast<double>(config.particles);
    // Continuum rate gamma maps to a per-particle exponential clock of rate
    // gamma*sigma2/mass, so that the discrete branching martingale carries
    // quadratic variation gamma*sigma2 int <phi^2, mu_s> ds.
    const double gamma_eff = config.gamma / mass0;
    if (!(gamma_eff * config.sigma2 * config.dt < 0.5))
        throw ConfigError(
            "run_sdsm: per-particle branch probability gamma*sigma2*dt/mass = " +
            detail::sci(gamma_eff * config.sigma2 * config.dt) +
            " breaches the 0.5 stability guard; lower dt or gamma, or raise total mass");

    {
        const std::vector<double> origin(static_cast<std::size_t>(d), 0.0);
        std::vector<double> unit = origin;
        unit[0] = 1.0;
        const auto rep = check_ellipticity(config.model, {{origin}, {origin, origin}, {origin, unit}});
        if (!rep.valid)
            throw ModelRejection("run_sdsm: diffusion matrix fails the two-sided ellipticity bound");
    }
    if (!config.waive_measure_checks) {
        // Cheap gate: the analytic branch decides finiteness, the coarse
        // grid only cross-checks it.
        SupGrid coarse;
        coarse.s_points = 4;
        coarse.s_min = 1e-3;
        coarse.box.points_per_dim = 3;
        if (upsilon(config.mu0, std::max(config.horizon, config.dt), coarse).is_infinite())
            throw ConfigError(
                "run_sdsm: initial measure has an unbounded smoothed density; "
                "set waive_measure_checks to run anyway");
    }

    std::vector<long long> snap = {0, steps};
    for (double t : config.snapshots) {
        const long long k = std::llround(t / config.dt);
        if (k < 0 || k > steps ||
            std::fabs(static_cast<double>(k) * config.dt - t) > 1e-9 * std::max(1.0, std::fabs(t)))
            throw ConfigError("run_sdsm: snapshots must be multiples of dt inside [0, horizon]");
        snap.push_back(k);
    }
    std::sort(snap.begin(), snap.end());
    snap.erase(std::unique(snap.begin(), snap.end()), snap.end());

    SimPath path;
    path.seed = config.seed;
    path.config_hash = config_hash(config);

    RngStream rng(derive_stream(config.seed, kRunStreamComponent, 0));
    ParticleCloud cloud = sample(config.mu0, config.particles, rng);
    cloud.time = 0;

    std::size_t nextsnap = 0;
    for (long long k = 0; k <= steps; ++k) {
        if (nextsnap < snap.size() && snap[nextsnap] == k) {
            ParticleCloud shot = cloud;
            shot.time = static_cast<double>(k) * config.dt;
            path.snapshot_times.push_back(shot.time);
            path.clouds.push_back(std::move(shot));
            ++nextsnap;
        }
        if (k == steps || path.extinct) continue;

        auto [moved, rec] = diffuse_step(cloud, config.model, config.dt, rng);
        std::vector<BranchEvent> events;
        if (gamma_eff * config.sigma2 > 0) {
            auto branched = branch_step(moved, gamma_eff, config.sigma2, config.dt, rng);
            moved = std::move(branched.first);
            events = std::move(branched.second);
        }
        if (observe) observe(rec, events, moved);
        if (config.keep_steps) path.steps.push_back(std::move(rec));
        path.events.insert(path.events.end(), std::make_move_iterator(events.begin()),
                           std::make_move_iterator(events.end()));
        cloud = std::move(moved);
        if (cloud.size() == 0) {
            path.extinct = true;
            path.extinct_time = cloud.time;
        }
    }
    return path;
}

std::uint64_t config_hash(const RunConfig& config) {
    std::string s = "cfg1;";
    const HSpec& h = config.model.h();
    append_num(s, static_cast<long long>(h.kind));
    append_num(s, h.bandwidth);
    append_all(s, h.amplitude);
    append_all(s, h.table);
    append_num(s, h.grid_lo);
    append_num(s, h.grid_hi);
    append_num(s, static_cast<long long>(config.model.c_kind()));
    append_num(s, static_cast<long long>(config.model.dim()));
    const Eigen::MatrixXd& C = config.model.c();
    for (Eigen::Index i = 0; i < C.rows(); ++i)
        for (Eigen::Index j = 0; j < C.cols(); ++j) append_num(s, C(i, j));

    const MeasureSpec& mu = config.mu0;
    append_num(s, static_cast<long long>(mu.variant));
    append_num(s, static_cast<long long>(mu.dim));
    append_all(s, mu.box_lo);
    append_all(s, mu.box_hi);
    append_num(s, mu.density_scale);
    append_all(s, mu.weights);
    append_num(s, static_cast<long long>(mu.centers.size()));
    for (const auto& c : mu.centers) append_all(s, c);
    append_all(s, mu.bandwidths);
    append_all(s, mu.point);
    append_num(s, mu.mass);
    append_num(s, mu.a);
    append_num(s, mu.scale);

    append_num(s, static_cast<long long>(config.particles));
    append_num(s, config.dt);
    append_num(s, config.horizon);
    append_num(s, config.gamma);
    append_num(s, config.sigma2);
    append_all(s, config.snapshots);
    append_num(s, static_cast<long long>(config.seed));
    return fnv1a64(s.data(), s.size());
}

std::uint64_t sim_path_hash(const SimPath& path) {
    std::uint64_t h = fnv1a64("path1", 5);
    auto mix = [&h](const void* p, std::size_t n) { h = fnv1a64(p, n, h); };
    auto mixd = [&mix](double v) { mix(&v, sizeof v); };
    auto mixv = [&mix, &mixd](const std::vector<double>& v) {
        mixd(static_cast<double>(v.size()));
        mix(v.data(), v.size() * sizeof(double));
    };
    mixv(path.snapshot_times);
    for (const ParticleCloud& c : path.clouds) {
        mixd(c.time);
        mixv(c.pos);
        mixv(c.masses);
    }
    mixd(static_cast<double>(path.events.size()));
    for (const BranchEvent& e : path.events) {
        mixd(e.time);
        mixv(e.position);
        mixd(e.delta_mass);
    }
    mix(&path.seed, sizeof path.seed);
    mix(&path.config_hash, sizeof path.config_hash);
    const unsigned char ex = path.extinct ? 1 : 0;
    mix(&ex, 1);
    return h;
}

TestField TestField::gaussian(int dim, double s, std::vector<double> center, double amplitude) {
    if (dim < 1 || dim > 3) throw ConfigError("TestField: dimension must be 1, 2 or 3");
    if (!(s > 0)) throw ConfigError("TestField: bandwidth must be positive");
    if (static_cast<int>(center.size()) != dim)
        throw ConfigError("TestField: center dimension mismatch");
    TestField f;
    f.kind_ = Kind::Gaussian;
    f.dim_ = dim;
    f.s_ = s;
    f.amp_ = amplitude;
    f.center_ = std::move(center);
    return f;
}

TestField TestField::constant(int dim, double value) {
    if (dim < 1 || dim > 3) throw ConfigError("TestField: dimension must be 1, 2 or 3");
    TestField f;
    f.kind_ = Kind::Constant;
    f.dim_ = dim;
    f.amp_ = value;
    return f;
}

double TestField::value(std::span<const double> x) const {
    if (kind_ == Kind::Constant) return amp_;
    double r2 = 0;
    for (int p = 0; p < dim_; ++p) {
        const double w = x[static_cast<std::size_t>(p)] - center_[static_cast<std::size_t>(p)];
        r2 += w * w;
    }
    return amp_ * gaussian_density_r2(s_, r2, dim_);
}

void TestField::gradient(std::span<const double> x, std::span<double> out) const {
    if (kind_ == Kind::Constant) {
        for (int p = 0; p < dim_; ++p) out[static_cast<std::size_t>(p)] = 0;
        return;
    }
    const double v = value(x);
    for (int p = 0; p < dim_; ++p) {
        const auto k = static_cast<std::size_t>(p);
        out[k] = v * (center_[k] - x[k]) / s_;
    }
}

double TestField::generator(std::span<const double> x, const Eigen::MatrixXd& sigma) const {
    if (kind_ == Kind::Constant) return 0;
    const double v = value(x);
    double quad = 0;
    for (int p = 0; p < dim_; ++p)
        for (int q = 0; q < dim_; ++q)
            quad += (x[static_cast<std::size_t>(p)] - center_[static_cast<std::size_t>(p)]) *
                    sigma(p, q) *
                    (x[static_cast<std::size_t>(q)] - center_[static_cast<std::size_t>(q)]);
    return 0.5 * v * (quad / (s_ * s_) - sigma.trace() / s_);
}

QvReport spde_qv_check(std::span<const SimPath> paths, const TestField& phi,
                       const RunConfig& config, double tol) {
    if (paths.empty()) throw ConfigError("spde_qv_check: no replicas");
    const int d = config.model.dim();
    if (phi.dim() != d) throw ConfigError("spde_qv_check: field dimension mismatch");

    const Eigen::MatrixXd sigma = config.model.sigma();
    const Eigen::MatrixXd& A = config.model.a();
    const auto& g = config.model.common_amplitude();
    const bool common = config.model.has_common_noise();
    const double gs2 = config.gamma * config.sigma2;

    StreamingMoments residual, prediction;
    std::vector<double> u;
    double grad[3];
    auto phival = [&phi](std::span<const double> x) { return phi.value(x); };

    for (const SimPath& path : paths) {
        if (path.clouds.size() < 2 || path.clouds.front().time != 0.0 ||
            std::fabs(path.clouds.back().time - config.horizon) > 1e-9)
            throw ConfigError("spde_qv_check: paths need snapshots at 0 and horizon");
        if (path.steps.empty() && config.horizon > 0)
            throw ConfigError("spde_qv_check: paths must retain step records");
        const double m0 = path.clouds.front().masses.front();

        double drift = 0, pred = 0;
        for (const StepRecord& rec : path.steps) {
            const std::size_t n = rec.count();
            double phi2 = 0, gen = 0, ind = 0;
            u.clear();
            for (std::size_t i = 0; i < n; ++i) {
                const auto x = rec.position(i);
                const double v = phi.value(x);
                phi2 += v * v;
                gen += phi.generator(x, sigma);
                phi.gradient(x, {grad, static_cast<std::size_t>(d)});
                for (int p = 0; p < d; ++p)
                    for (int q = 0; q < d; ++q) ind += grad[p] * A(p, q) * grad[q];
                if (common) {
                    double dot = 0;
                    for (int p = 0; p < d; ++p) dot += g[static_cast<std::size_t>(p)] * grad[p];
                    u.push_back(dot);
                }
            }
            double env = 0;
            if (common) {
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j <= i; ++j) {
                        const double corr =
                            config.model.rho_scalar_fast(dist2(rec.position(i), rec.position(j)));
                        env += (i == j ? 1.0 : 2.0) * u[i] * u[j] * corr;
                    }
                env *= m0 * m0;
            }
            drift += rec.dt * m0 * gen;
            pred += rec.dt * (gs2 * m0 * phi2 + env + m0 * m0 * ind);
        }

        const double res = pair_empirical(path.clouds.back(), phival) -
                           pair_empirical(path.clouds.front(), phival) - drift;
        residual.add(res);
        prediction.add(pred);
    }

    QvReport r;
    r.replicas = residual.count();
    r.mean = residual.mean();
    r.se_mean = residual.se_mean();
    r.variance = residual.variance();
    r.se_variance = residual.se_variance();
    r.predicted = prediction.mean();
    r.se_predicted = prediction.se_mean();
    r.tol = tol;
    r.mean_ok = std::fabs(r.mean) <= tol * r.se_mean;
    r.var_ok = std::fabs(r.variance - r.predicted) <=
               tol * std::hypot(r.se_variance, r.se_predicted);
    return r;
}

}  // namespace sdsmlab
