#include "sdsmlab/cli.hpp"

#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sdsmlab/core.hpp"
#include "sdsmlab/dual.hpp"
#include "sdsmlab/kernels.hpp"
#include "sdsmlab/localtime.hpp"
#include "sdsmlab/measures.hpp"
#include "sdsmlab/particle.hpp"
#include "sdsmlab/rng.hpp"
#include "sdsmlab/stats.hpp"

namespace sdsmlab {

namespace {

// Seed-stream components; replica i of a command draws
// derive_stream(master_seed, component, i). Components 1..13 are taken by
// the library and its tests.
constexpr std::uint64_t kSimStream = 21;
constexpr std::uint64_t kLtStream = 22;
constexpr std::uint64_t kHolderStream = 23;

int log_level() {
    static const int level = [] {
        const char* env = std::getenv("SDSMLAB_LOG");
        if (env == nullptr || *env == '\0') return 0;
        const std::string v(env);
        if (v == "error") return 0;
        if (v == "info") return 1;
        if (v == "debug") return 2;
        throw ConfigError("SDSMLAB_LOG must be error, info, or debug");
    }();
    return level;
}

void log_info(const std::string& msg) {
    if (log_level() >= 1) std::cerr << "[info] " << msg << '\n';
}

// Command-wide effective settings after CLI overrides.
struct Effective {
    std::string out_dir;
    std::uint64_t seed = 1;
    int threads = 1;
    std::optional<std::size_t> replicas;
};

// Runs make(0..n-1) and feeds the results to consume in index order, so
// output produced inside consume is byte-identical for every thread count.
// Replicas are processed in chunks of 2*threads to bound the number of
// results held in memory.
template <typename Make, typename Consume>
void stream_replicas(std::size_t n, int threads, Make&& make, Consume&& consume) {
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) consume(i, make(i));
        return;
    }
    using Out = decltype(make(std::size_t{0}));
    const auto nworkers = static_cast<std::size_t>(threads);
    const std::size_t chunk = 2 * nworkers;
    for (std::size_t base = 0; base < n; base += chunk) {
        const std::size_t count = std::min(chunk, n - base);
        std::vector<std::optional<Out>> results(count);
        std::atomic<std::size_t> next{0};
        std::vector<std::exception_ptr> errors(nworkers);
        std::vector<std::thread> pool;
        pool.reserve(nworkers);
        for (std::size_t w = 0; w < nworkers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t k = next.fetch_add(1); k < count; k = next.fetch_add(1))
                        results[k].emplace(make(base + k));
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (const auto& e : errors)
            if (e) std::rethrow_exception(e);
        for (std::size_t k = 0; k < count; ++k) consume(base + k, std::move(*results[k]));
    }
}

[[noreturn]] void missing_section(const char* ptr) {
    throw ConfigError(std::string("config error at ") + ptr +
                      ": required by this command but missing");
}

RunConfig build_run_config(const ExperimentConfig& cfg) {
    if (!cfg.has_model) missing_section("/model");
    if (!cfg.has_mu0) missing_section("/initial_measure");
    if (!cfg.has_sim) missing_section("/sim");
    RunConfig rc;
    rc.model = cfg.model;
    rc.mu0 = cfg.mu0;
    rc.particles = cfg.sim.particles;
    rc.dt = cfg.sim.dt;
    rc.horizon = cfg.sim.horizon;
    rc.gamma = cfg.sim.gamma;
    rc.sigma2 = cfg.sim.sigma2;
    rc.snapshots = cfg.sim.snapshots;
    if (cfg.sim.snapshot_every > 0) {
        for (std::size_t k = 1;; ++k) {
            const double s = static_cast<double>(k) * cfg.sim.snapshot_every;
            if (s >= cfg.sim.horizon * (1.0 - 1e-12)) break;
            rc.snapshots.push_back(s);
        }
    }
    rc.keep_steps = cfg.sim.keep_steps;
    return rc;
}

std::string coord_header(int dim) {
    std::string h;
    for (int k = 0; k < dim; ++k) {
        if (k) h += ',';
        h += 'x';
        h += std::to_string(k + 1);
    }
    return h;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    return out;
}

CheckResult ellipticity_check(const KernelModel& model) {
    const auto d = static_cast<std::size_t>(model.dim());
    std::vector<double> origin(d, 0.0), unit(d, 0.0), far(d, 0.0);
    unit[0] = 1.0;
    far[0] = 2.5;
    const EllipticityReport rep =
        check_ellipticity(model, {{origin}, {origin, origin}, {origin, unit}, {origin, far}});
    CheckResult c;
    c.name = "two-sided ellipticity";
    c.pass = rep.valid;
    c.values = {{"lambda_min", rep.lambda_min}, {"lambda_max", rep.lambda_max}};
    c.note = rep.valid ? "HOLDS" : "FAILS";
    return c;
}

void cmd_validate(const ExperimentConfig& cfg, RunReport& report) {
    if (!cfg.has_model) missing_section("/model");
    if (!cfg.has_mu0) missing_section("/initial_measure");
    report.checks.push_back(ellipticity_check(cfg.model));

    const ExtendedReal ups = upsilon(cfg.mu0, cfg.validate.horizon);
    CheckResult u;
    u.name = "bounded smoothed density";
    u.pass = ups.is_finite();
    if (ups.is_finite()) u.values = {{"sup", ups.value()}};
    u.note = ups.is_finite() ? "HOLDS" : "INFINITE";
    report.checks.push_back(std::move(u));

    const ExtendedReal integ = check_uniform_integ(cfg.mu0, cfg.validate.mollifier_a);
    CheckResult w;
    w.name = "uniform integrability";
    w.pass = integ.is_finite();
    if (integ.is_finite()) w.values = {{"pairing", integ.value()}};
    w.note = integ.is_finite() ? "HOLDS" : "INFINITE";
    report.checks.push_back(std::move(w));
}

void cmd_simulate(const ExperimentConfig& cfg, const Effective& eff, RunReport& report) {
    const RunConfig base = build_run_config(cfg);
    const std::size_t R = eff.replicas.value_or(cfg.sim.replicas);
    const int d = cfg.model.dim();

    std::ofstream paths_out = open_out(eff.out_dir + "/paths.csv");
    std::ofstream events_out = open_out(eff.out_dir + "/events.csv");
    paths_out << "replica,snapshot_time,particle," << coord_header(d) << ",mass\n";
    events_out << "replica,time," << coord_header(d) << ",delta_mass\n";

    StreamingMoments initial_mass, final_mass;
    double max_abs_err = 0;
    std::size_t extinct = 0;
    std::vector<double> row;

    auto make = [&](std::size_t i) {
        RunConfig rc = base;
        rc.seed = derive_stream(eff.seed, kSimStream, i);
        return run_sdsm(rc);
    };
    auto consume = [&](std::size_t i, SimPath path) {
        for (std::size_t si = 0; si < path.clouds.size(); ++si) {
            const ParticleCloud& cloud = path.clouds[si];
            for (std::size_t p = 0; p < cloud.size(); ++p) {
                row.clear();
                row.push_back(static_cast<double>(i));
                row.push_back(path.snapshot_times[si]);
                row.push_back(static_cast<double>(p));
                const auto x = cloud.at(p);
                row.insert(row.end(), x.begin(), x.end());
                row.push_back(cloud.masses[p]);
                paths_out << csv_row(row);
            }
        }
        for (const BranchEvent& ev : path.events) {
            row.clear();
            row.push_back(static_cast<double>(i));
            row.push_back(ev.time);
            row.insert(row.end(), ev.position.begin(), ev.position.end());
            row.push_back(ev.delta_mass);
            events_out << csv_row(row);
        }
        const double m0 = path.clouds.front().total_mass();
        const double mT = path.clouds.back().total_mass();
        initial_mass.add(m0);
        final_mass.add(mT);
        max_abs_err = std::max(max_abs_err, std::abs(mT - m0));
        if (path.extinct) ++extinct;
    };
    stream_replicas(R, eff.threads, make, consume);
    if (!paths_out || !events_out) throw ConfigError("write failed under " + eff.out_dir);

    CheckResult c;
    c.name = "mean total mass is conserved";
    c.values = {{"replicas", static_cast<double>(R)},
                {"extinct", static_cast<double>(extinct)},
                {"initial_mass", initial_mass.mean()},
                {"final_mass_mean", final_mass.mean()}};
    if (base.gamma == 0) {
        c.pass = max_abs_err <= 1e-9 * std::max(1.0, initial_mass.mean());
        c.values.push_back({"max_abs_err", max_abs_err});
        c.note = "deterministic mass (no branching)";
    } else if (R >= 2) {
        const double se = final_mass.se_mean();
        const double gap = std::abs(final_mass.mean() - initial_mass.mean());
        c.pass = gap <= 3.0 * se + 1e-12;
        c.values.push_back({"se", se});
        c.values.push_back({"z_score", gap / (se > 0 ? se : 1e-300)});
    } else {
        c.pass = true;
        c.note = "too few replicas for a mean test";
    }
    report.checks.push_back(std::move(c));
}

void cmd_duality(const ExperimentConfig& cfg, const Effective& eff, RunReport& report) {
    if (!cfg.has_duality) missing_section("/duality");
    RunConfig rc = build_run_config(cfg);
    rc.seed = eff.seed;
    rc.keep_steps = false;  // the duality pairing only reads terminal clouds
    const DualitySection& du = cfg.duality;

    ProductFunction f;
    f.dim = cfg.model.dim();
    for (std::size_t k = 0; k < du.centers.size(); ++k) {
        if (du.centers[k].size() != static_cast<std::size_t>(f.dim))
            throw ConfigError("config error at /duality/centers/" + std::to_string(k) +
                              ": dimension differs from /model/dim");
        f.factors.push_back(GaussianFactor{du.bandwidths[k], du.centers[k]});
    }

    const std::size_t pr = eff.replicas.value_or(du.particle_replicas);
    const DualityReport rep = duality_check(f, rc, pr, du.dual_replicas, du.tolerance);

    CheckResult c;
    c.name = "moment duality (m=" + std::to_string(f.m()) + ")";
    c.pass = rep.pass;
    c.values = {{"lhs", rep.lhs}, {"lhs_se", rep.lhs_se}, {"rhs", rep.rhs}, {"rhs_se", rep.rhs_se}};
    if (std::isfinite(rep.z_score))
        c.values.push_back({"z_score", rep.z_score});
    else
        c.note = "z-score not finite";
    report.checks.push_back(std::move(c));
}

struct LtReplica {
    std::vector<double> occ;
    std::vector<TanakaBreakdown> tb;
};

void cmd_localtime(const ExperimentConfig& cfg, const Effective& eff, RunReport& report) {
    if (!cfg.has_localtime) missing_section("/localtime");
    RunConfig base = build_run_config(cfg);
    const LocalTimeSection& lt = cfg.localtime;
    const auto d = static_cast<std::size_t>(cfg.model.dim());
    for (std::size_t k = 0; k < lt.points.size(); ++k)
        if (lt.points[k].size() != d)
            throw ConfigError("config error at /localtime/points/" + std::to_string(k) +
                              ": dimension differs from /model/dim");
    if (lt.t > base.horizon * (1.0 + 1e-12))
        throw ConfigError("config error at /localtime/t: exceeds /sim/horizon");
    base.snapshots.push_back(lt.t);
    if (cfg.model.has_common_noise()) base.keep_steps = true;
    const std::size_t R = eff.replicas.value_or(lt.replicas);
    if (R < 2)
        throw ConfigError("config error at /localtime/replicas: the z-test needs at least 2");

    const std::size_t P = lt.points.size();
    std::vector<StreamingMoments> occ_m(P), tot_m(P), diff_m(P);
    std::vector<std::array<double, 5>> term_sum(P, std::array<double, 5>{});
    std::size_t evals = 0, clamps = 0;

    auto make = [&](std::size_t i) {
        RunConfig rc = base;
        rc.seed = derive_stream(eff.seed, kLtStream, i);
        const SimPath path = run_sdsm(rc);
        const GreenEvaluator green(lt.lambda, cfg.model);  // per replica: counters are not shared
        LtReplica out;
        out.occ.reserve(P);
        out.tb.reserve(P);
        for (const auto& p : lt.points) {
            out.occ.push_back(occupation_local_time(path, p, lt.t, lt.eps));
            out.tb.push_back(tanaka_local_time(path, p, lt.t, green));
        }
        return out;
    };
    auto consume = [&](std::size_t, LtReplica out) {
        for (std::size_t k = 0; k < P; ++k) {
            const TanakaBreakdown& tb = out.tb[k];
            occ_m[k].add(out.occ[k]);
            tot_m[k].add(tb.total());
            diff_m[k].add(out.occ[k] - tb.total());
            term_sum[k][0] += tb.term_initial;
            term_sum[k][1] += tb.term_terminal;
            term_sum[k][2] += tb.term_lambda;
            term_sum[k][3] += tb.term_env;
            term_sum[k][4] += tb.term_branch;
            evals += tb.evaluations;
            clamps += tb.clamped;
        }
    };
    stream_replicas(R, eff.threads, make, consume);

    const double clamp_share = evals ? static_cast<double>(clamps) / static_cast<double>(evals) : 0.0;
    std::string csv = "point,t," + coord_header(static_cast<int>(d)) +
                      ",lambda,term_initial,term_terminal,term_lambda,term_env,term_branch,"
                      "total_mean,total_se,occupation_mean,occupation_se,z_score,clamp_share\n";
    std::vector<double> row;
    for (std::size_t k = 0; k < P; ++k) {
        const double se = diff_m[k].se_mean();
        double z = 0;
        if (se > 0)
            z = std::abs(diff_m[k].mean()) / se;
        else if (std::abs(diff_m[k].mean()) > 1e-12)
            z = std::numeric_limits<double>::max();

        row.clear();
        row.push_back(static_cast<double>(k));
        row.push_back(lt.t);
        row.insert(row.end(), lt.points[k].begin(), lt.points[k].end());
        row.push_back(lt.lambda);
        for (double s : term_sum[k]) row.push_back(s / static_cast<double>(R));
        row.push_back(tot_m[k].mean());
        row.push_back(tot_m[k].se_mean());
        row.push_back(occ_m[k].mean());
        row.push_back(occ_m[k].se_mean());
        row.push_back(z);
        row.push_back(clamp_share);
        csv += csv_row(row);

        CheckResult c;
        c.name = "decomposition vs occupation (point " + std::to_string(k) + ")";
        c.pass = z <= lt.tolerance;
        c.values = {{"z_score", z},
                    {"total_mean", tot_m[k].mean()},
                    {"occupation_mean", occ_m[k].mean()},
                    {"clamp_share", clamp_share}};
        report.checks.push_back(std::move(c));
    }
    write_text_file(eff.out_dir + "/localtime.csv", csv);
}

void cmd_holder(const ExperimentConfig& cfg, const Effective& eff, RunReport& report) {
    if (!cfg.has_holder) missing_section("/holder");
    RunConfig base = build_run_config(cfg);
    const HolderSection& h = cfg.holder;
    const auto d = static_cast<std::size_t>(cfg.model.dim());
    for (std::size_t k = 0; k < h.points.size(); ++k)
        if (h.points[k].size() != d)
            throw ConfigError("config error at /holder/points/" + std::to_string(k) +
                              ": dimension differs from /model/dim");
    for (std::size_t k = 0; k < h.times.size(); ++k)
        if (!(h.times[k] >= 0) || h.times[k] > base.horizon * (1.0 + 1e-12))
            throw ConfigError("config error at /holder/times/" + std::to_string(k) +
                              ": outside [0, /sim/horizon]");
    base.snapshots.insert(base.snapshots.end(), h.times.begin(), h.times.end());
    base.keep_steps = false;

    LocalTimeField field(h.times, h.points, h.eps);
    const std::size_t R = eff.replicas.value_or(h.replicas);
    auto make = [&](std::size_t i) {
        RunConfig rc = base;
        rc.seed = derive_stream(eff.seed, kHolderStream, i);
        return run_sdsm(rc);
    };
    auto consume = [&](std::size_t, const SimPath& path) { field.add_path(path); };
    stream_replicas(R, eff.threads, make, consume);

    const HolderEstimate est = holder_estimate(field, h.mode, h.moment_order);

    nlohmann::ordered_json hj;
    hj["mode"] = h.mode == HolderMode::Time ? "time" : "space";
    hj["moment_order"] = h.moment_order;
    hj["eps"] = h.eps;
    hj["replicas"] = R;
    hj["lags"] = est.lags;
    hj["moments"] = est.moments;
    if (std::isfinite(est.exponent))
        hj["exponent"] = est.exponent;
    else
        hj["exponent"] = nullptr;
    hj["r2"] = est.r2;
    hj["monotone"] = est.monotone;
    hj["resolved"] = est.resolved;
    write_text_file(eff.out_dir + "/holder.json", hj.dump(2) + "\n");

    CheckResult mono;
    mono.name = "moment ladder monotone";
    mono.pass = est.monotone;
    mono.values = {{"levels", static_cast<double>(est.lags.size())},
                   {"replicas", static_cast<double>(R)}};
    report.checks.push_back(std::move(mono));

    CheckResult fit;
    fit.name = "exponent fit";
    fit.pass = est.monotone && est.resolved;
    if (std::isfinite(est.exponent)) {
        fit.values = {{"exponent", est.exponent}, {"r2", est.r2}};
        if (!est.resolved) fit.note = "slope at the smooth-field resolution limit";
    } else {
        fit.note = "ladder not monotone; no fit";
    }
    report.checks.push_back(std::move(fit));
}

void cmd_kernel_checks(const ExperimentConfig& cfg, RunReport& report) {
    const KernelChecksSection& kc = cfg.kernel_checks;
    std::vector<double> radii(static_cast<std::size_t>(kc.r_points));
    const double llo = std::log(kc.r_lo), lhi = std::log(kc.r_hi);
    for (std::size_t i = 0; i < radii.size(); ++i)
        radii[i] = std::exp(llo + (lhi - llo) * static_cast<double>(i) /
                                      static_cast<double>(radii.size() - 1));

    for (int d : kc.dims) {
        double max_rel = 0;
        for (double r : radii) {
            const double qc = green_Q_closed(kc.lambda, r, d);
            const double qr = green_Q_radial(kc.lambda, r, d);
            max_rel = std::max(max_rel, std::abs(qc - qr) / std::max(std::abs(qc), 1e-300));
            const double dc = green_Q_closed_deriv(kc.lambda, r, d);
            const double dr = green_Q_radial_deriv(kc.lambda, r, d);
            max_rel = std::max(max_rel, std::abs(dc - dr) / std::max(std::abs(dc), 1e-300));
        }
        CheckResult c;
        c.name = "resolvent closed form vs quadrature (d=" + std::to_string(d) + ")";
        c.pass = max_rel <= 1e-6;
        c.values = {{"max_rel_err", max_rel}};
        report.checks.push_back(std::move(c));
    }

    for (int d : kc.dims) {
        const SquareVsGtilde sq = check_square_vs_gtilde(kc.lambda, d, radii);
        CheckResult c;
        c.name = "resolvent square vs companion transform (d=" + std::to_string(d) + ")";
        c.pass = sq.part_i_holds && sq.no_growth_trend;
        c.values = {{"K_sup", sq.K_sup},
                    {"ratio_max", sq.ratio_max},
                    {"small_x_slope", sq.small_x_slope}};
        report.checks.push_back(std::move(c));
    }

    {
        std::size_t trials = 0, violations = 0;
        std::vector<double> vs = {0.0};
        for (int i = 0; i < 30; ++i)
            vs.push_back(std::exp(std::log(1e-3) + (std::log(1e3) - std::log(1e-3)) * i / 29.0));
        for (double g : {0.3, 0.5, 1.0, 2.0, 3.0})
            for (double b : {0.25, 1.0, 2.0, 2.9})
                for (double v : vs) {
                    ++trials;
                    if (!exp_poly_bound(g, b, v).holds) ++violations;
                }
        CheckResult c;
        c.name = "exponential-polynomial bound sweep";
        c.pass = violations == 0;
        c.values = {{"trials", static_cast<double>(trials)},
                    {"violations", static_cast<double>(violations)}};
        report.checks.push_back(std::move(c));
    }

    if (cfg.has_model) {
        report.checks.push_back(ellipticity_check(cfg.model));
        if (cfg.model.has_common_noise()) {
            const auto d = static_cast<std::size_t>(cfg.model.dim());
            const double scale =
                cfg.model.rho(std::vector<double>(d, 0.0)).cwiseAbs().maxCoeff();
            double max_err = 0;
            for (double r : {0.0, 0.25, 1.0, 2.5}) {
                std::vector<double> x(d, 0.0);
                x[0] = r;
                max_err = std::max(
                    max_err, (cfg.model.rho_fast(x) - cfg.model.rho(x)).cwiseAbs().maxCoeff());
                std::vector<double> y(d, r / std::sqrt(static_cast<double>(d)));
                max_err = std::max(
                    max_err, (cfg.model.rho_fast(y) - cfg.model.rho(y)).cwiseAbs().maxCoeff());
            }
            CheckResult c;
            c.name = "correlation fast path vs quadrature";
            c.pass = max_err <= 1e-6 * std::max(scale, 1e-300);
            c.values = {{"max_abs_err", max_err}, {"scale", scale}};
            report.checks.push_back(std::move(c));
        }
    }
}

void print_report(const RunReport& report) {
    std::size_t npass = 0;
    for (const CheckResult& c : report.checks) {
        std::string line = c.pass ? "[PASS] " : "[FAIL] ";
        line += c.name;
        if (!c.values.empty()) {
            line += " (";
            bool first = true;
            for (const auto& [k, v] : c.values) {
                if (!first) line += ", ";
                first = false;
                char buf[40];
                std::snprintf(buf, sizeof buf, "%.6g", v);
                line += k;
                line += '=';
                line += buf;
            }
            line += ')';
        }
        if (!c.note.empty()) {
            line += " -- ";
            line += c.note;
        }
        std::cout << line << '\n';
        if (c.pass) ++npass;
    }
    std::cout << npass << "/" << report.checks.size() << " checks passed\n";
}

}  // namespace

RunReport run_command(const CliOptions& opt, const ExperimentConfig& cfg) {
    Effective eff;
    eff.out_dir = opt.out_dir.empty() ? cfg.out_dir : opt.out_dir;
    eff.seed = opt.seed.value_or(cfg.seed);
    eff.threads = opt.threads.value_or(cfg.threads);
    eff.replicas = opt.replicas;
    if (eff.threads < 1) throw ConfigError("threads must be at least 1");
    if (opt.replicas && (opt.command == "validate" || opt.command == "kernel-checks"))
        throw ConfigError("--replicas does not apply to " + opt.command);
    std::filesystem::create_directories(eff.out_dir);

    log_info(opt.command + ": seed=" + std::to_string(eff.seed) +
             " threads=" + std::to_string(eff.threads) + " out=" + eff.out_dir);

    RunReport report;
    report.command = opt.command;
    report.seed = eff.seed;
    report.config_hash = opt.config_hash;
    report.threads = eff.threads;

    const auto t0 = std::chrono::steady_clock::now();
    if (opt.command == "validate")
        cmd_validate(cfg, report);
    else if (opt.command == "simulate")
        cmd_simulate(cfg, eff, report);
    else if (opt.command == "duality")
        cmd_duality(cfg, eff, report);
    else if (opt.command == "localtime")
        cmd_localtime(cfg, eff, report);
    else if (opt.command == "holder")
        cmd_holder(cfg, eff, report);
    else if (opt.command == "kernel-checks")
        cmd_kernel_checks(cfg, report);
    else
        throw ConfigError("unknown command: " + opt.command);
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    write_text_file(eff.out_dir + "/report.json", report.to_json());
    print_report(report);
    return report;
}

int run_cli(int argc, const char* const* argv) {
    try {
        (void)log_level();  // reject a malformed SDSMLAB_LOG before any work

        CLI::App app{"measure-valued branching diffusions with interacting spatial motion"};
        app.require_subcommand(1);

        std::string config_path, out_dir;
        std::uint64_t seed = 0;
        int threads = 0;
        std::uint64_t replicas = 0;

        const std::pair<const char*, const char*> subs[] = {
            {"validate", "admissibility checks for the configured model and initial measure"},
            {"simulate", "run replica simulations and write snapshot/event tables"},
            {"duality", "particle moments vs the exact dual process"},
            {"localtime", "local-time decomposition vs the occupation estimate"},
            {"holder", "moment-ladder exponent fit for the local-time field"},
            {"kernel-checks", "resolvent and inequality checks (config optional)"},
        };
        for (const auto& [name, blurb] : subs) {
            CLI::App* sub = app.add_subcommand(name, blurb);
            sub->add_option("-c,--config", config_path, "JSON experiment description");
            sub->add_option("-o,--out", out_dir, "output directory (overrides the config)");
            sub->add_option("-s,--seed", seed, "master seed (overrides the config)");
            sub->add_option("-t,--threads", threads, "worker threads (overrides the config)");
            sub->add_option("-r,--replicas", replicas, "replica count for this command");
        }

        try {
            app.parse(argc, argv);
        } catch (const CLI::CallForHelp& e) {
            return app.exit(e);
        } catch (const CLI::CallForAllHelp& e) {
            return app.exit(e);
        } catch (const CLI::ParseError& e) {
            app.exit(e);
            return 2;
        }

        CLI::App* sub = app.get_subcommands().front();
        CliOptions opt;
        opt.command = sub->get_name();
        opt.out_dir = out_dir;
        if (sub->count("--seed")) opt.seed = seed;
        if (sub->count("--threads")) opt.threads = threads;
        if (sub->count("--replicas")) opt.replicas = static_cast<std::size_t>(replicas);

        ExperimentConfig cfg;
        if (sub->count("--config")) {
            const std::string text = read_text_file(config_path);
            opt.config_hash = fnv1a64(text.data(), text.size());
            cfg = parse_config_text(text);
        } else if (opt.command != "kernel-checks") {
            throw ConfigError(opt.command + " needs --config");
        }

        return run_command(opt, cfg).all_pass() ? 0 : 1;
    } catch (const ConfigError& e) {
        std::cerr << e.what() << '\n';
        return 2;
    } catch (const ModelRejection& e) {
        std::cerr << "model rejected: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace sdsmlab
