#include "sdsmlab/dual.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "sdsmlab/kernels.hpp"
#include "sdsmlab/stats.hpp"

namespace sdsmlab {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

double dist2(std::span<const double> x, std::span<const double> y) {
    double s = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double d = x[k] - y[k];
        s += d * d;
    }
    return s;
}

// Streams for the two Monte-Carlo sides of duality_check.
constexpr std::uint64_t kParticleSideComponent = 3;
constexpr std::uint64_t kDualSideComponent = 4;

}  // namespace

void ProductFunction::validate() const {
    if (dim < 1 || dim > 3) throw ConfigError("ProductFunction: dimension must be 1, 2 or 3");
    if (factors.empty()) throw ConfigError("ProductFunction: needs at least one factor");
    for (const auto& f : factors) {
        if (!(f.s > 0)) throw ConfigError("ProductFunction: factor bandwidth must be positive");
        if (static_cast<int>(f.z.size()) != dim)
            throw ConfigError("ProductFunction: factor center dimension mismatch");
    }
}

double ProductFunction::value(std::span<const double> points) const {
    const auto d = static_cast<std::size_t>(dim);
    if (points.size() != factors.size() * d)
        throw std::invalid_argument("ProductFunction: wrong number of packed coordinates");
    double v = 1;
    for (std::size_t k = 0; k < factors.size(); ++k)
        v *= gaussian_density_r2(factors[k].s, dist2(points.subspan(k * d, d), factors[k].z),
                                 dim);
    return v;
}

double DualState::value(std::span<const double> points) const {
    const auto d = static_cast<std::size_t>(dim);
    if (points.size() != coords.size() * d)
        throw std::invalid_argument("DualState: wrong number of packed coordinates");
    double lg = log_prefactor;
    for (std::size_t k = 0; k < coords.size(); ++k) {
        const auto x = points.subspan(k * d, d);
        for (const auto& f : coords[k]) {
            lg += -0.5 * dim * std::log(kTwoPi * f.s) - dist2(x, f.z) / (2.0 * f.s);
        }
    }
    return std::exp(lg);
}

DualState dual_from_function(const ProductFunction& f) {
    f.validate();
    DualState s;
    s.dim = f.dim;
    s.coords.reserve(f.factors.size());
    for (const auto& g : f.factors) s.coords.push_back({g});
    return s;
}

DualState evolve(DualState state, double dt) {
    if (dt < 0) throw std::invalid_argument("evolve: negative time");
    for (auto& coord : state.coords)
        for (auto& f : coord) f.s += dt;
    state.elapsed += dt;
    return state;
}

DualState apply_jump(DualState state, std::size_t i, std::size_t j) {
    const std::size_t J = state.coords.size();
    if (J < 2) throw std::logic_error("apply_jump: fewer than two coordinates");
    if (i == j || i >= J || j >= J) throw std::logic_error("apply_jump: bad coordinate pair");

    auto& into = state.coords[i];
    auto& from = state.coords[j];
    into.insert(into.end(), std::make_move_iterator(from.begin()),
                std::make_move_iterator(from.end()));
    state.coords.erase(state.coords.begin() + static_cast<std::ptrdiff_t>(j));
    auto& list = state.coords[i < j ? i : i - 1];

    while (list.size() > 1) {
        const GaussianFactor a = std::move(list[list.size() - 2]);
        const GaussianFactor b = std::move(list.back());
        list.pop_back();
        list.pop_back();
        const auto gp = gaussian_product(a.s, b.s, state.dim);
        GaussianFactor merged;
        merged.s = gp.z;
        merged.z.resize(a.z.size());
        for (std::size_t k = 0; k < a.z.size(); ++k)
            merged.z[k] = (b.s * a.z[k] + a.s * b.z[k]) / gp.w;
        state.log_prefactor +=
            -0.5 * state.dim * std::log(kTwoPi * gp.w) - dist2(a.z, b.z) / (2.0 * gp.w);
        list.push_back(std::move(merged));
    }
    state.jumps.push_back(state.elapsed);
    return state;
}

std::vector<double> jump_times(std::size_t m, double gamma_sigma2, double t, RngStream& rng) {
    if (m < 1) throw ConfigError("jump_times: start count must be at least 1");
    if (gamma_sigma2 < 0) throw ConfigError("jump_times: negative rate");
    std::vector<double> out;
    if (gamma_sigma2 == 0) return out;
    double tau = 0;
    for (std::size_t l = m; l >= 2; --l) {
        const double rate = gamma_sigma2 * static_cast<double>(l) * static_cast<double>(l - 1) / 2.0;
        tau += -std::log(1.0 - rng.uniform()) / rate;
        if (tau > t) break;
        out.push_back(tau);
    }
    return out;
}

double dual_weight_integral(std::size_t m, std::span<const double> jumps, double t) {
    double acc = 0;
    double prev = 0;
    double l = static_cast<double>(m);
    for (double tau : jumps) {
        if (tau > t) break;
        acc += l * (l - 1.0) * (tau - prev);
        prev = tau;
        l -= 1.0;
    }
    acc += l * (l - 1.0) * (t - prev);
    return acc;
}

double DualRunResult::value() const { return std::exp(log_weight) * pairing; }

DualRunResult run_dual(const ProductFunction& f, const MeasureSpec& mu0, double t,
                       double gamma_sigma2, RngStream& rng) {
    if (t < 0) throw ConfigError("run_dual: negative horizon");
    if (mu0.dim != f.dim) throw ConfigError("run_dual: measure and function dimension mismatch");
    DualState state = dual_from_function(f);
    const auto taus = jump_times(f.m(), gamma_sigma2, t, rng);

    double prev = 0;
    for (double tau : taus) {
        state = evolve(std::move(state), tau - prev);
        const std::size_t J = state.count();
        // Ordered pair uniform over J(J-1) choices.
        auto i = static_cast<std::size_t>(rng.uniform() * static_cast<double>(J));
        if (i >= J) i = J - 1;
        auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(J - 1));
        if (j >= J - 1) j = J - 2;
        if (j >= i) ++j;
        state = apply_jump(std::move(state), i, j);
        prev = tau;
    }
    state = evolve(std::move(state), t - prev);

    DualRunResult out;
    out.log_weight = 0.5 * gamma_sigma2 * dual_weight_integral(f.m(), taus, t);
    double pairing = std::exp(state.log_prefactor);
    for (const auto& coord : state.coords)
        for (const auto& g : coord)
            pairing *= pair(mu0, Field::gaussian(g.s, g.z)).value();
    out.pairing = pairing;
    out.state = std::move(state);
    return out;
}

MCEstimate duality_rhs(const ProductFunction& f, const MeasureSpec& mu0, double t,
                       double gamma_sigma2, std::size_t replicas, RngStream& rng) {
    f.validate();
    MCEstimate est;
    if (f.m() == 1) {
        est.estimate = run_dual(f, mu0, t, gamma_sigma2, rng).value();
        est.se = 0;
        est.replicas = 1;
        return est;
    }
    if (replicas < 2) throw ConfigError("duality_rhs: need at least 2 replicas for m >= 2");
    StreamingMoments acc;
    for (std::size_t r = 0; r < replicas; ++r) acc.add(run_dual(f, mu0, t, gamma_sigma2, rng).value());
    est.estimate = acc.mean();
    est.se = acc.se_mean();
    est.replicas = replicas;
    return est;
}

DualityReport duality_check(const ProductFunction& f, const RunConfig& config,
                            std::size_t particle_replicas, std::size_t dual_replicas,
                            double tol) {
    f.validate();
    const std::size_t m = f.m();
    if (m != 1 && m != 2)
        throw ConfigError("duality_check: particle comparison supports m = 1 and m = 2 only");
    if (config.model.has_common_noise() || config.model.c_kind() != CKind::Identity)
        throw ConfigError("duality_check: exact dual requires the degenerate kernel");
    if (f.dim != config.model.dim()) throw ConfigError("duality_check: dimension mismatch");
    if (particle_replicas < 2) throw ConfigError("duality_check: need at least 2 particle replicas");

    auto run_cfg = config;
    run_cfg.keep_steps = false;
    run_cfg.snapshots.clear();

    StreamingMoments lhs;
    for (std::size_t r = 0; r < particle_replicas; ++r) {
        run_cfg.seed = derive_stream(config.seed, kParticleSideComponent, r);
        const auto path = run_sdsm(run_cfg);
        const auto& cloud = path.clouds.back();
        double v = 1;
        for (const auto& g : f.factors) {
            const Field field = Field::gaussian(g.s, g.z);
            v *= pair_empirical(cloud, [&field](std::span<const double> x) { return field(x); });
        }
        lhs.add(v);
    }

    RngStream rng(derive_stream(config.seed, kDualSideComponent, 0));
    const auto rhs = duality_rhs(f, config.mu0, config.horizon,
                                 config.gamma * config.sigma2, dual_replicas, rng);

    DualityReport rep;
    rep.lhs = lhs.mean();
    rep.lhs_se = lhs.se_mean();
    rep.rhs = rhs.estimate;
    rep.rhs_se = rhs.se;
    rep.particle_replicas = particle_replicas;
    rep.dual_replicas = rhs.replicas;
    const double comb = std::hypot(rep.lhs_se, rep.rhs_se);
    const double diff = rep.lhs - rep.rhs;
    rep.z_score = comb > 0 ? diff / comb : (diff == 0 ? 0 : std::numeric_limits<double>::infinity());
    rep.pass = std::fabs(diff) <= tol * comb;
    return rep;
}

}  // namespace sdsmlab
