#include "sdsmlab/localtime.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sdsmlab/core.hpp"
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

// Snapshot index whose time matches t, or -1.
std::ptrdiff_t find_snapshot(const SimPath& path, double t) {
    const double tol = 1e-9 * std::max(1.0, std::fabs(t));
    for (std::size_t k = 0; k < path.snapshot_times.size(); ++k)
        if (std::fabs(path.snapshot_times[k] - t) <= tol) return static_cast<std::ptrdiff_t>(k);
    return -1;
}

double cloud_pairing_eps(const ParticleCloud& c, std::span<const double> x, double eps) {
    double s = 0;
    for (std::size_t i = 0; i < c.size(); ++i)
        s += c.masses[i] * gaussian_density_r2(eps, dist2(x, c.at(i)), c.dim);
    return s;
}

}  // namespace

GreenEvaluator::GreenEvaluator(double lambda, const KernelModel& model)
    : lambda_(lambda), dim_(model.dim()), model_(model) {
    if (!(lambda > 0)) throw ConfigError("GreenEvaluator: lambda must be positive");
    identity_ = model.c_kind() == CKind::Identity && !model.has_common_noise();
    if (!identity_) {
        const Eigen::MatrixXd sigma = model.sigma();
        Eigen::LLT<Eigen::MatrixXd> llt(sigma);
        if (llt.info() != Eigen::Success)
            throw ConfigError("GreenEvaluator: one-particle covariance not positive definite");
        lfac_ = llt.matrixL();
        det_scale_ = 1.0;
        for (int k = 0; k < dim_; ++k) det_scale_ /= lfac_(k, k);
    }

    if (dim_ == 2) {
        // Hermite table in u = log r for log Qr and its log-slope
        // g = r Qr'/Qr. Both are mild in u even deep into the Bessel tail,
        // where Qr itself steepens like e^{-r sqrt(2 lambda)}.
        const double root = std::sqrt(2.0 * lambda_);
        u_lo_ = std::log(0.5 * kRcut);
        u_hi_ = std::log(640.0 / root);
        const std::size_t nodes = 2048;
        du_ = (u_hi_ - u_lo_) / static_cast<double>(nodes - 1);
        tab_q_.resize(nodes);
        tab_dq_.resize(nodes);
        tab_g_.resize(nodes);
        tab_dg_.resize(nodes);
        for (std::size_t k = 0; k < nodes; ++k) {
            const double r = std::exp(u_lo_ + du_ * static_cast<double>(k));
            const double z = root * r;
            const double q = green_Q_closed(lambda_, r, 2);
            const double dq = green_Q_closed_deriv(lambda_, r, 2);
            // Qr'' from K1' = -(K0 + K1/z).
            const double ddq = (2.0 * lambda_) *
                               (std::cyl_bessel_k(0.0, z) + std::cyl_bessel_k(1.0, z) / z) / M_PI;
            const double g = r * dq / q;
            tab_q_[k] = std::log(q);
            tab_dq_[k] = g;
            tab_g_[k] = g;
            tab_dg_[k] = (r * dq + r * r * ddq) / q - g * g;
        }
    }
}

double GreenEvaluator::radial(double r) const {
    if (dim_ != 2) return green_Q_closed(lambda_, r, dim_);
    const double u = std::log(r);
    if (u < u_lo_ || u > u_hi_) return green_Q_closed(lambda_, r, 2);
    const double s = (u - u_lo_) / du_;
    const auto k = std::min(static_cast<std::size_t>(s), tab_q_.size() - 2);
    const double t = s - static_cast<double>(k);
    const double t2 = t * t, t3 = t2 * t;
    const double v = (2 * t3 - 3 * t2 + 1) * tab_q_[k] + (t3 - 2 * t2 + t) * du_ * tab_dq_[k] +
                     (-2 * t3 + 3 * t2) * tab_q_[k + 1] + (t3 - t2) * du_ * tab_dq_[k + 1];
    return std::exp(v);
}

double GreenEvaluator::radial_deriv(double r) const {
    if (dim_ != 2) return green_Q_closed_deriv(lambda_, r, dim_);
    const double u = std::log(r);
    if (u < u_lo_ || u > u_hi_) return green_Q_closed_deriv(lambda_, r, 2);
    const double s = (u - u_lo_) / du_;
    const auto k = std::min(static_cast<std::size_t>(s), tab_g_.size() - 2);
    const double t = s - static_cast<double>(k);
    const double t2 = t * t, t3 = t2 * t;
    const double g = (2 * t3 - 3 * t2 + 1) * tab_g_[k] + (t3 - 2 * t2 + t) * du_ * tab_dg_[k] +
                     (-2 * t3 + 3 * t2) * tab_g_[k + 1] + (t3 - t2) * du_ * tab_dg_[k + 1];
    return g * radial(r) / r;
}

double GreenEvaluator::whiten(std::span<const double> x, std::span<double> y) const {
    if (identity_) {
        double r2 = 0;
        for (std::size_t k = 0; k < x.size(); ++k) {
            y[k] = x[k];
            r2 += x[k] * x[k];
        }
        return std::sqrt(r2);
    }
    Eigen::Map<Eigen::VectorXd> yv(y.data(), dim_);
    yv = Eigen::Map<const Eigen::VectorXd>(x.data(), dim_);
    lfac_.triangularView<Eigen::Lower>().solveInPlace(yv);
    return yv.norm();
}

double GreenEvaluator::q(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != dim_) throw ConfigError("GreenEvaluator: point dimension");
    ++evals_;
    double buf[3];
    double r = whiten(x, std::span<double>(buf, x.size()));
    if (dim_ >= 2 && r < kRcut) {
        ++clamps_;
        r = kRcut;
    }
    return det_scale_ * radial(r);
}

void GreenEvaluator::grad_q(std::span<const double> x, std::span<double> out) const {
    if (static_cast<int>(x.size()) != dim_ || out.size() != x.size())
        throw ConfigError("GreenEvaluator: point dimension");
    ++evals_;
    double buf[3];
    const double r = whiten(x, std::span<double>(buf, x.size()));
    if (r == 0.0) {
        if (dim_ >= 2) ++clamps_;
        std::fill(out.begin(), out.end(), 0.0);
        return;
    }
    double rr = r;
    if (dim_ >= 2 && r < kRcut) {
        ++clamps_;
        rr = kRcut;
    }
    const double mag = det_scale_ * radial_deriv(rr) / r;
    if (identity_) {
        for (std::size_t k = 0; k < x.size(); ++k) out[k] = mag * x[k];
        return;
    }
    Eigen::Map<Eigen::VectorXd> w(buf, dim_);  // currently y = L^{-1} x
    lfac_.transpose().triangularView<Eigen::Upper>().solveInPlace(w);
    for (int k = 0; k < dim_; ++k) out[static_cast<std::size_t>(k)] = mag * buf[k];
}

double occupation_local_time(const SimPath& path, std::span<const double> x, double t,
                             double eps) {
    if (!(eps > 0)) throw ConfigError("occupation_local_time: bandwidth must be positive");
    if (path.clouds.empty()) throw ConfigError("occupation_local_time: path has no snapshots");
    if (x.size() != static_cast<std::size_t>(path.clouds.front().dim))
        throw ConfigError("occupation_local_time: point dimension mismatch");
    const auto idx = find_snapshot(path, t);
    if (idx < 0)
        throw ConfigError("occupation_local_time: t must coincide with a recorded snapshot");

    double acc = 0;
    double prev = cloud_pairing_eps(path.clouds[0], x, eps);
    for (std::ptrdiff_t k = 1; k <= idx; ++k) {
        const double cur = cloud_pairing_eps(path.clouds[static_cast<std::size_t>(k)], x, eps);
        acc += 0.5 * (prev + cur) *
               (path.snapshot_times[static_cast<std::size_t>(k)] -
                path.snapshot_times[static_cast<std::size_t>(k - 1)]);
        prev = cur;
    }
    return acc;
}

TanakaBreakdown tanaka_local_time(const SimPath& path, std::span<const double> x, double t,
                                  const GreenEvaluator& green) {
    if (path.clouds.empty()) throw ConfigError("tanaka_local_time: path has no snapshots");
    const int dim = path.clouds.front().dim;
    if (green.dim() != dim || x.size() != static_cast<std::size_t>(dim))
        throw ConfigError("tanaka_local_time: dimension mismatch");
    const auto idx = find_snapshot(path, t);
    if (idx < 0) throw ConfigError("tanaka_local_time: t must coincide with a recorded snapshot");
    const bool common = green.model().has_common_noise();
    if (common && t > 0 && path.steps.empty())
        throw ConfigError("tanaka_local_time: common-noise model needs step records (keep_steps)");

    const std::size_t evals0 = green.eval_count();
    const std::size_t clamps0 = green.clamp_count();

    TanakaBreakdown out;
    out.lambda = green.lambda();
    out.x.assign(x.begin(), x.end());
    out.horizon = t;

    std::vector<double> diff(static_cast<std::size_t>(dim));
    std::vector<double> grad(static_cast<std::size_t>(dim));
    const auto pair_q = [&](const ParticleCloud& c) {
        double s = 0;
        for (std::size_t i = 0; i < c.size(); ++i) {
            const auto p = c.at(i);
            for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = x[k] - p[k];
            s += c.masses[i] * green.q(diff);
        }
        return s;
    };

    out.term_initial = pair_q(path.clouds.front());
    out.term_terminal = -pair_q(path.clouds[static_cast<std::size_t>(idx)]);

    // lambda * int <Q, mu_s> ds, trapezoid over the snapshot grid. The
    // initial/terminal pairings are recomputed here; clarity over the two
    // saved cloud scans.
    double acc = 0;
    double prev = out.term_initial;
    for (std::ptrdiff_t k = 1; k <= idx; ++k) {
        const double cur = pair_q(path.clouds[static_cast<std::size_t>(k)]);
        acc += 0.5 * (prev + cur) *
               (path.snapshot_times[static_cast<std::size_t>(k)] -
                path.snapshot_times[static_cast<std::size_t>(k - 1)]);
        prev = cur;
    }
    out.term_lambda = green.lambda() * acc;

    if (common && t > 0) {
        const double m0 = path.clouds.front().masses.front();
        double env = 0;
        for (const auto& rec : path.steps) {
            if (rec.t0 >= t - 0.5 * rec.dt) break;
            for (std::size_t i = 0; i < rec.count(); ++i) {
                const auto p = rec.position(i);
                for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = x[k] - p[k];
                green.grad_q(diff, grad);
                const auto dw = rec.common_inc(i);
                double dot = 0;
                for (std::size_t k = 0; k < grad.size(); ++k) dot += grad[k] * dw[k];
                env -= m0 * dot;
            }
        }
        out.term_env = env;
    }

    double branch = 0;
    for (const auto& ev : path.events) {
        if (ev.time > t + 1e-12) continue;
        for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = x[k] - ev.position[k];
        branch += ev.delta_mass * green.q(diff);
    }
    out.term_branch = branch;

    out.evaluations = green.eval_count() - evals0;
    out.clamped = green.clamp_count() - clamps0;
    return out;
}

TanakaBreakdown tanaka_local_time(const SimPath& path, std::span<const double> x, double t,
                                  double lambda, const KernelModel& model) {
    const GreenEvaluator green(lambda, model);
    return tanaka_local_time(path, x, t, green);
}

LTIdentityReport check_LT_identity(std::span<const SimPath> paths, const Field& phi, double t,
                                   const SearchBox& grid, double eps, double tol) {
    if (paths.empty()) throw ConfigError("check_LT_identity: no replicas");
    if (!(eps > 0)) throw ConfigError("check_LT_identity: bandwidth must be positive");
    const int dim = paths.front().clouds.empty() ? 0 : paths.front().clouds.front().dim;
    if (dim < 1 || grid.lo.size() != static_cast<std::size_t>(dim) ||
        grid.hi.size() != grid.lo.size())
        throw ConfigError("check_LT_identity: grid does not match the path dimension");
    if (grid.points_per_dim < 1) throw ConfigError("check_LT_identity: empty grid");

    // Cell-centered tensor grid; weight = cell volume.
    const auto d = static_cast<std::size_t>(dim);
    std::size_t n_nodes = 1;
    std::vector<double> h(d);
    for (std::size_t k = 0; k < d; ++k) {
        if (!(grid.hi[k] > grid.lo[k])) throw ConfigError("check_LT_identity: empty grid box");
        h[k] = (grid.hi[k] - grid.lo[k]) / grid.points_per_dim;
        n_nodes *= static_cast<std::size_t>(grid.points_per_dim);
    }
    std::vector<double> nodes(n_nodes * d);
    double weight = 1;
    for (std::size_t k = 0; k < d; ++k) weight *= h[k];
    for (std::size_t f = 0; f < n_nodes; ++f) {
        std::size_t rem = f;
        for (std::size_t k = 0; k < d; ++k) {
            const auto digit = rem % static_cast<std::size_t>(grid.points_per_dim);
            rem /= static_cast<std::size_t>(grid.points_per_dim);
            nodes[f * d + k] = grid.lo[k] + (static_cast<double>(digit) + 0.5) * h[k];
        }
    }

    std::vector<double> mean_lt(n_nodes, 0.0);
    StreamingMoments rhs_acc;
    std::vector<double> cur(n_nodes), prevv(n_nodes), acc(n_nodes);
    for (const auto& path : paths) {
        const auto idx = find_snapshot(path, t);
        if (idx < 0) throw ConfigError("check_LT_identity: t must coincide with a snapshot");
        std::fill(acc.begin(), acc.end(), 0.0);
        double rhs_path = 0, rhs_prev = 0;
        for (std::ptrdiff_t k = 0; k <= idx; ++k) {
            const auto& c = path.clouds[static_cast<std::size_t>(k)];
            std::fill(cur.begin(), cur.end(), 0.0);
            double g = 0;
            for (std::size_t i = 0; i < c.size(); ++i) {
                const auto p = c.at(i);
                g += c.masses[i] * phi(p);
                for (std::size_t f = 0; f < n_nodes; ++f)
                    cur[f] += c.masses[i] *
                              gaussian_density_r2(
                                  eps, dist2(std::span(nodes).subspan(f * d, d), p), dim);
            }
            if (k > 0) {
                const double dt = path.snapshot_times[static_cast<std::size_t>(k)] -
                                  path.snapshot_times[static_cast<std::size_t>(k - 1)];
                for (std::size_t f = 0; f < n_nodes; ++f)
                    acc[f] += 0.5 * (prevv[f] + cur[f]) * dt;
                rhs_path += 0.5 * (rhs_prev + g) * dt;
            }
            std::swap(prevv, cur);
            rhs_prev = g;
        }
        for (std::size_t f = 0; f < n_nodes; ++f) mean_lt[f] += acc[f];
        rhs_acc.add(rhs_path);
    }

    LTIdentityReport rep;
    rep.replicas = paths.size();
    rep.tol = tol;
    double lhs = 0;
    for (std::size_t f = 0; f < n_nodes; ++f)
        lhs += weight * phi(std::span(nodes).subspan(f * d, d)) * mean_lt[f] /
               static_cast<double>(paths.size());
    rep.lhs = lhs;
    rep.rhs = rhs_acc.mean();
    rep.rel_err = std::fabs(rep.lhs - rep.rhs) / std::max(std::fabs(rep.rhs), 1e-300);
    if (rep.lhs == 0.0 && rep.rhs == 0.0) rep.rel_err = 0.0;
    rep.pass = rep.rel_err <= tol;
    return rep;
}

bool QvEstimates::within(double tol) const {
    const auto ok = [tol](const QvEntry& e) {
        if (e.predicted == 0.0 && e.empirical == 0.0) return true;
        return e.ratio <= 1.0 + tol;
    };
    return ok(branch_time) && ok(branch_space) && ok(env_time) && ok(env_space);
}

QvEstimates qv_estimates(std::span<const SimPath> paths, std::span<const double> x,
                         std::span<const double> z, double s, double t, double lambda,
                         const KernelModel& model, double gamma_sigma2) {
    if (paths.empty()) throw ConfigError("qv_estimates: no replicas");
    if (!(0.0 <= s && s < t)) throw ConfigError("qv_estimates: need 0 <= s < t");
    if (gamma_sigma2 < 0) throw ConfigError("qv_estimates: negative branching rate");
    const auto d = static_cast<std::size_t>(model.dim());
    if (x.size() != d || z.size() != d) throw ConfigError("qv_estimates: point dimension");

    const GreenEvaluator green(lambda, model);
    const auto& g = model.common_amplitude();
    const bool common = model.has_common_noise();

    StreamingMoments emp_bt, emp_bs, emp_et, emp_es, pred_bt, pred_bs, pred_et, pred_es;
    std::vector<double> diff(d), gx(d), gz(d);
    std::vector<double> ux, us;  // per-particle amplitude-weighted gradients

    for (const auto& path : paths) {
        if (path.steps.empty()) throw ConfigError("qv_estimates: paths need step records");
        const double m0 = path.clouds.front().masses.front();

        double bt = 0, bs = 0;
        for (const auto& ev : path.events) {
            if (ev.time > t + 1e-12) continue;
            for (std::size_t k = 0; k < d; ++k) diff[k] = x[k] - ev.position[k];
            const double qx = green.q(diff);
            for (std::size_t k = 0; k < d; ++k) diff[k] = z[k] - ev.position[k];
            const double qz = green.q(diff);
            bs += ev.delta_mass * (qz - qx);
            if (ev.time > s + 1e-12) bt += ev.delta_mass * qx;
        }

        double et = 0, es = 0, p_bt = 0, p_bs = 0, p_et = 0, p_es = 0;
        for (const auto& rec : path.steps) {
            if (rec.t0 >= t - 0.5 * rec.dt) break;
            const bool in_window = rec.t0 > s - 0.5 * rec.dt;
            const std::size_t n = rec.count();
            ux.assign(n, 0.0);
            us.assign(n, 0.0);
            double q2x = 0, q2d = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const auto p = rec.position(i);
                for (std::size_t k = 0; k < d; ++k) diff[k] = x[k] - p[k];
                const double qx = green.q(diff);
                green.grad_q(diff, gx);
                for (std::size_t k = 0; k < d; ++k) diff[k] = z[k] - p[k];
                const double qz = green.q(diff);
                green.grad_q(diff, gz);

                if (in_window) q2x += qx * qx;
                q2d += (qz - qx) * (qz - qx);
                if (common) {
                    double ax = 0, as = 0;
                    for (std::size_t k = 0; k < d; ++k) {
                        ax += g[k] * gx[k];
                        as += g[k] * (gz[k] - gx[k]);
                    }
                    ux[i] = ax;
                    us[i] = as;
                    const auto dw = rec.common_inc(i);
                    double dotx = 0, dots = 0;
                    for (std::size_t k = 0; k < d; ++k) {
                        dotx += gx[k] * dw[k];
                        dots += (gz[k] - gx[k]) * dw[k];
                    }
                    if (in_window) et -= m0 * dotx;
                    es -= m0 * dots;
                }
            }
            if (in_window) p_bt += gamma_sigma2 * rec.dt * m0 * q2x;
            p_bs += gamma_sigma2 * rec.dt * m0 * q2d;
            if (common) {
                double qt = 0, qs = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    const auto pi = rec.position(i);
                    for (std::size_t j = 0; j <= i; ++j) {
                        const double w = (i == j) ? 1.0 : 2.0;
                        const double corr =
                            model.rho_scalar_fast(dist2(pi, rec.position(j)));
                        qt += w * ux[i] * ux[j] * corr;
                        qs += w * us[i] * us[j] * corr;
                    }
                }
                if (in_window) p_et += rec.dt * m0 * m0 * qt;
                p_es += rec.dt * m0 * m0 * qs;
            }
        }

        emp_bt.add(bt * bt);
        emp_bs.add(bs * bs);
        emp_et.add(et * et);
        emp_es.add(es * es);
        pred_bt.add(p_bt);
        pred_bs.add(p_bs);
        pred_et.add(p_et);
        pred_es.add(p_es);
    }

    const auto entry = [](const StreamingMoments& emp, const StreamingMoments& pred) {
        QvEntry e;
        e.empirical = emp.mean();
        e.predicted = pred.mean();
        e.se_empirical = emp.se_mean();
        e.se_predicted = pred.se_mean();
        if (e.predicted == 0.0)
            e.ratio = e.empirical == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
        else
            e.ratio = e.empirical / e.predicted;
        return e;
    };

    QvEstimates out;
    out.replicas = paths.size();
    out.branch_time = entry(emp_bt, pred_bt);
    out.branch_space = entry(emp_bs, pred_bs);
    out.env_time = entry(emp_et, pred_et);
    out.env_space = entry(emp_es, pred_es);
    return out;
}

LocalTimeField::LocalTimeField(std::vector<double> times, std::vector<std::vector<double>> points,
                               double eps)
    : times_(std::move(times)), points_(std::move(points)), eps_(eps) {
    if (times_.empty() || points_.empty()) throw ConfigError("LocalTimeField: empty grid");
    if (!(eps_ > 0)) throw ConfigError("LocalTimeField: bandwidth must be positive");
    for (std::size_t k = 1; k < times_.size(); ++k)
        if (!(times_[k] > times_[k - 1]))
            throw ConfigError("LocalTimeField: times must be strictly increasing");
    for (const auto& p : points_)
        if (p.size() != points_.front().size() || p.empty())
            throw ConfigError("LocalTimeField: inconsistent point dimensions");
}

std::size_t LocalTimeField::idx(std::size_t ti, std::size_t xi) const {
    return ti * points_.size() + xi;
}

void LocalTimeField::add_path(const SimPath& path) {
    if (path.clouds.empty()) throw ConfigError("LocalTimeField: path has no snapshots");
    if (path.clouds.front().dim != static_cast<int>(points_.front().size()))
        throw ConfigError("LocalTimeField: path dimension mismatch");

    // Map every field time onto a snapshot index up front.
    std::vector<std::size_t> snap(times_.size());
    for (std::size_t ti = 0; ti < times_.size(); ++ti) {
        const auto k = find_snapshot(path, times_[ti]);
        if (k < 0) throw ConfigError("LocalTimeField: field time misses the snapshot grid");
        snap[ti] = static_cast<std::size_t>(k);
    }

    std::vector<double> row(times_.size() * points_.size());
    for (std::size_t xi = 0; xi < points_.size(); ++xi) {
        const std::span<const double> x(points_[xi]);
        double acc = 0;
        double prev = cloud_pairing_eps(path.clouds[0], x, eps_);
        std::size_t ti = 0;
        for (; ti < times_.size() && snap[ti] == 0; ++ti) row[idx(ti, xi)] = 0.0;
        for (std::size_t k = 1; k < path.clouds.size() && ti < times_.size(); ++k) {
            const double cur = cloud_pairing_eps(path.clouds[k], x, eps_);
            acc += 0.5 * (prev + cur) * (path.snapshot_times[k] - path.snapshot_times[k - 1]);
            prev = cur;
            for (; ti < times_.size() && snap[ti] == k; ++ti) row[idx(ti, xi)] = acc;
        }
    }
    samples_.push_back(std::move(row));
}

void LocalTimeField::add_samples(std::span<const double> flat) {
    if (flat.size() != times_.size() * points_.size())
        throw ConfigError("LocalTimeField: sample block has the wrong size");
    samples_.emplace_back(flat.begin(), flat.end());
}

double LocalTimeField::value(std::size_t ti, std::size_t xi) const {
    StreamingMoments m;
    for (const auto& rowv : samples_) m.add(rowv[idx(ti, xi)]);
    return m.mean();
}

double LocalTimeField::se(std::size_t ti, std::size_t xi) const {
    if (samples_.size() < 2) return 0.0;
    StreamingMoments m;
    for (const auto& rowv : samples_) m.add(rowv[idx(ti, xi)]);
    return m.se_mean();
}

HolderEstimate holder_estimate(const LocalTimeField& field, HolderMode mode, int n) {
    if (n < 1) throw ConfigError("holder_estimate: moment order must be >= 1");
    if (field.replicas() == 0) throw ConfigError("holder_estimate: field has no replicas");
    const auto& times = field.times();
    const auto& points = field.points();
    const std::size_t P = points.size();

    HolderEstimate out;
    out.n = n;

    if (mode == HolderMode::Time) {
        if (times.size() < 2) throw ConfigError("holder_estimate: time grid too small");
        const double base = times[1] - times[0];
        for (std::size_t k = 1; k < times.size(); ++k)
            if (std::fabs(times[k] - times[k - 1] - base) > 1e-9 * std::max(1.0, base))
                throw ConfigError("holder_estimate: time mode needs a uniform grid");
        std::vector<std::size_t> strides;
        for (std::size_t sft = 1; sft < times.size(); sft *= 2) strides.push_back(sft);
        if (strides.size() < 4)
            throw ConfigError("holder_estimate: need at least 4 dyadic lag levels");
        for (const auto stride : strides) {
            StreamingMoments mom;
            for (const auto& rowv : field.samples())
                for (std::size_t k = 0; k + stride < times.size(); ++k)
                    for (std::size_t xi = 0; xi < P; ++xi) {
                        const double dlt =
                            rowv[(k + stride) * P + xi] - rowv[k * P + xi];
                        mom.add(std::pow(std::fabs(dlt), 2.0 * n));
                    }
            out.lags.push_back(base * static_cast<double>(stride));
            out.moments.push_back(mom.mean());
        }
    } else {
        if (P < 5) throw ConfigError("holder_estimate: space mode needs a base point and >= 4 lags");
        for (std::size_t xi = 1; xi < P; ++xi) {
            const double lag =
                std::sqrt(dist2(std::span(points[xi]), std::span(points[0])));
            if (!(lag > 0) || (xi > 1 && lag <= out.lags.back()))
                throw ConfigError("holder_estimate: space lags must be positive and increasing");
            StreamingMoments mom;
            for (const auto& rowv : field.samples())
                for (std::size_t k = 0; k < times.size(); ++k) {
                    const double dlt = rowv[k * P + xi] - rowv[k * P + 0];
                    mom.add(std::pow(std::fabs(dlt), 2.0 * n));
                }
            out.lags.push_back(lag);
            out.moments.push_back(mom.mean());
        }
        if (out.lags.size() < 4)
            throw ConfigError("holder_estimate: need at least 4 dyadic lag levels");
    }

    bool positive = true;
    for (double m : out.moments) positive = positive && m > 0;
    for (std::size_t k = 1; k < out.moments.size(); ++k)
        if (out.moments[k] < out.moments[k - 1] * (1.0 - 1e-12)) out.monotone = false;
    if (!out.monotone || !positive) {
        out.exponent = std::numeric_limits<double>::quiet_NaN();
        out.monotone = out.monotone && positive;
        out.resolved = false;
        return out;
    }

    std::vector<double> lx(out.lags.size()), ly(out.lags.size());
    for (std::size_t k = 0; k < out.lags.size(); ++k) {
        lx[k] = std::log(out.lags[k]);
        ly[k] = std::log(out.moments[k]);
    }
    const auto fit = linfit(lx, ly);
    out.exponent = fit.slope / (2.0 * n);
    out.r2 = fit.r2;
    out.resolved = out.exponent < 0.9;
    return out;
}

}  // namespace sdsmlab
