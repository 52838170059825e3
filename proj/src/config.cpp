#include "sdsmlab/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include <json.hpp>

#include "sdsmlab/core.hpp"

namespace sdsmlab {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& ptr, const std::string& what) {
    throw ConfigError("config error at " + (ptr.empty() ? std::string("/") : ptr) + ": " + what);
}

void need_object(const json& j, const std::string& ptr) {
    if (!j.is_object()) fail(ptr, "expected an object");
}

void known_keys(const json& j, const std::string& ptr,
                std::initializer_list<const char*> keys) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : keys) ok = ok || it.key() == k;
        if (!ok) fail(ptr + "/" + it.key(), "unknown key");
    }
}

const json* find_key(const json& j, const char* key) {
    const auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

const json& need_key(const json& j, const std::string& ptr, const char* key) {
    const json* v = find_key(j, key);
    if (!v) fail(ptr + "/" + key, "required key is missing");
    return *v;
}

double get_num(const json& j, const std::string& ptr) {
    if (!j.is_number()) fail(ptr, "expected a number");
    return j.get<double>();
}

double get_pos(const json& j, const std::string& ptr) {
    const double v = get_num(j, ptr);
    if (!(v > 0)) fail(ptr, "must be positive");
    return v;
}

double get_nonneg(const json& j, const std::string& ptr) {
    const double v = get_num(j, ptr);
    if (!(v >= 0)) fail(ptr, "must be nonnegative");
    return v;
}

std::uint64_t get_u64(const json& j, const std::string& ptr) {
    if (!j.is_number_unsigned()) fail(ptr, "expected an unsigned integer");
    return j.get<std::uint64_t>();
}

std::size_t get_count(const json& j, const std::string& ptr) {
    const std::uint64_t v = get_u64(j, ptr);
    if (v == 0) fail(ptr, "must be at least 1");
    return static_cast<std::size_t>(v);
}

bool get_bool(const json& j, const std::string& ptr) {
    if (!j.is_boolean()) fail(ptr, "expected a boolean");
    return j.get<bool>();
}

std::string get_str(const json& j, const std::string& ptr) {
    if (!j.is_string()) fail(ptr, "expected a string");
    return j.get<std::string>();
}

std::vector<double> get_vec(const json& j, const std::string& ptr) {
    if (!j.is_array()) fail(ptr, "expected an array of numbers");
    std::vector<double> out;
    out.reserve(j.size());
    for (std::size_t k = 0; k < j.size(); ++k)
        out.push_back(get_num(j[k], ptr + "/" + std::to_string(k)));
    return out;
}

std::vector<std::vector<double>> get_points(const json& j, const std::string& ptr) {
    if (!j.is_array() || j.empty()) fail(ptr, "expected a nonempty array of points");
    std::vector<std::vector<double>> out;
    out.reserve(j.size());
    for (std::size_t k = 0; k < j.size(); ++k)
        out.push_back(get_vec(j[k], ptr + "/" + std::to_string(k)));
    return out;
}

HSpec parse_h(const json& j, const std::string& ptr) {
    need_object(j, ptr);
    const std::string kind = get_str(need_key(j, ptr, "kind"), ptr + "/kind");
    HSpec h;
    if (kind == "zero") {
        known_keys(j, ptr, {"kind"});
        h.kind = HKind::Zero;
    } else if (kind == "gaussian") {
        known_keys(j, ptr, {"kind", "bandwidth", "amplitude"});
        h.kind = HKind::Gaussian;
        h.bandwidth = get_pos(need_key(j, ptr, "bandwidth"), ptr + "/bandwidth");
        h.amplitude = get_vec(need_key(j, ptr, "amplitude"), ptr + "/amplitude");
    } else if (kind == "table") {
        known_keys(j, ptr, {"kind", "values", "grid_lo", "grid_hi"});
        h.kind = HKind::Table;
        h.table = get_vec(need_key(j, ptr, "values"), ptr + "/values");
        h.grid_lo = get_num(need_key(j, ptr, "grid_lo"), ptr + "/grid_lo");
        h.grid_hi = get_num(need_key(j, ptr, "grid_hi"), ptr + "/grid_hi");
    } else {
        fail(ptr + "/kind", "must be one of zero, gaussian, table");
    }
    return h;
}

KernelModel parse_model(const json& j, const std::string& ptr) {
    need_object(j, ptr);
    known_keys(j, ptr, {"dim", "h", "c"});
    const auto dim = static_cast<int>(get_count(need_key(j, ptr, "dim"), ptr + "/dim"));

    HSpec h;
    if (const json* hj = find_key(j, "h")) h = parse_h(*hj, ptr + "/h");

    CKind ck = CKind::Identity;
    Eigen::MatrixXd c;
    if (const json* cj = find_key(j, "c")) {
        const std::string cptr = ptr + "/c";
        need_object(*cj, cptr);
        const std::string kind = get_str(need_key(*cj, cptr, "kind"), cptr + "/kind");
        if (kind == "identity") {
            known_keys(*cj, cptr, {"kind"});
        } else if (kind == "constant") {
            known_keys(*cj, cptr, {"kind", "matrix"});
            const auto rows = get_points(need_key(*cj, cptr, "matrix"), cptr + "/matrix");
            ck = CKind::Constant;
            c.resize(static_cast<Eigen::Index>(rows.size()),
                     static_cast<Eigen::Index>(rows.front().size()));
            for (std::size_t r = 0; r < rows.size(); ++r) {
                if (rows[r].size() != rows.front().size())
                    fail(cptr + "/matrix", "rows must have equal length");
                for (std::size_t k = 0; k < rows[r].size(); ++k)
                    c(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = rows[r][k];
            }
        } else {
            fail(cptr + "/kind", "must be identity or constant");
        }
    }

    try {
        return KernelModel::make(dim, std::move(h), ck, std::move(c));
    } catch (const std::exception& e) {
        fail(ptr, e.what());
    }
}

MeasureSpec parse_measure(const json& j, const std::string& ptr) {
    need_object(j, ptr);
    const std::string kind = get_str(need_key(j, ptr, "kind"), ptr + "/kind");
    try {
        if (kind == "lebesgue") {
            known_keys(j, ptr, {"kind", "dim", "scale"});
            const auto dim = static_cast<int>(get_count(need_key(j, ptr, "dim"), ptr + "/dim"));
            double scale = 1.0;
            if (const json* s = find_key(j, "scale")) scale = get_pos(*s, ptr + "/scale");
            return MeasureSpec::lebesgue(dim, scale);
        }
        if (kind == "lebesgue_window") {
            known_keys(j, ptr, {"kind", "lo", "hi", "scale"});
            auto lo = get_vec(need_key(j, ptr, "lo"), ptr + "/lo");
            auto hi = get_vec(need_key(j, ptr, "hi"), ptr + "/hi");
            double scale = 1.0;
            if (const json* s = find_key(j, "scale")) scale = get_pos(*s, ptr + "/scale");
            return MeasureSpec::lebesgue_window(std::move(lo), std::move(hi), scale);
        }
        if (kind == "gaussian_mixture") {
            known_keys(j, ptr, {"kind", "weights", "centers", "bandwidths"});
            return MeasureSpec::gaussian_mixture(
                get_vec(need_key(j, ptr, "weights"), ptr + "/weights"),
                get_points(need_key(j, ptr, "centers"), ptr + "/centers"),
                get_vec(need_key(j, ptr, "bandwidths"), ptr + "/bandwidths"));
        }
        if (kind == "dirac") {
            known_keys(j, ptr, {"kind", "point", "mass"});
            auto point = get_vec(need_key(j, ptr, "point"), ptr + "/point");
            double mass = 1.0;
            if (const json* m = find_key(j, "mass")) mass = get_pos(*m, ptr + "/mass");
            return MeasureSpec::dirac(std::move(point), mass);
        }
        if (kind == "ia_density") {
            known_keys(j, ptr, {"kind", "dim", "a", "scale"});
            const auto dim = static_cast<int>(get_count(need_key(j, ptr, "dim"), ptr + "/dim"));
            const double a = get_pos(need_key(j, ptr, "a"), ptr + "/a");
            double scale = 1.0;
            if (const json* s = find_key(j, "scale")) scale = get_pos(*s, ptr + "/scale");
            return MeasureSpec::ia_density(dim, a, scale);
        }
    } catch (const ConfigError&) {
        throw;  // already carries a pointer
    } catch (const std::exception& e) {
        fail(ptr, e.what());
    }
    fail(ptr + "/kind",
         "must be one of lebesgue, lebesgue_window, gaussian_mixture, dirac, ia_density");
}

SimSection parse_sim(const json& j, const std::string& ptr) {
    need_object(j, ptr);
    known_keys(j, ptr, {"particles", "dt", "horizon", "gamma", "sigma2", "snapshots",
                        "snapshot_every", "keep_steps", "replicas"});
    SimSection s;
    s.particles = get_count(need_key(j, ptr, "particles"), ptr + "/particles");
    s.dt = get_pos(need_key(j, ptr, "dt"), ptr + "/dt");
    s.horizon = get_nonneg(need_key(j, ptr, "horizon"), ptr + "/horizon");
    if (const json* v = find_key(j, "gamma")) s.gamma = get_nonneg(*v, ptr + "/gamma");
    if (const json* v = find_key(j, "sigma2")) s.sigma2 = get_pos(*v, ptr + "/sigma2");
    if (const json* v = find_key(j, "snapshots")) s.snapshots = get_vec(*v, ptr + "/snapshots");
    if (const json* v = find_key(j, "snapshot_every"))
        s.snapshot_every = get_pos(*v, ptr + "/snapshot_every");
    if (const json* v = find_key(j, "keep_steps")) s.keep_steps = get_bool(*v, ptr + "/keep_steps");
    if (const json* v = find_key(j, "replicas")) s.replicas = get_count(*v, ptr + "/replicas");
    return s;
}

DualitySection parse_duality(const json& j, const std::string& ptr) {
    need_object(j, ptr);
    known_keys(j, ptr,
               {"centers", "bandwidths", "particle_replicas", "dual_replicas", "tolerance"});
    DualitySection d;
    d.centers = get_points(need_key(j, ptr, "centers"), ptr + "/centers");
    d.bandwidths = get_vec(need_key(j, ptr, "bandwidths"), ptr + "/bandwidths");
    if (d.bandwidths.size() != d.centers.size())
        fail(ptr + "/bandwidths", "must have one entry per center");
    for (std::size_t k = 0; k < d.bandwidths.size(); ++k)
        if (!(d.bandwidths[k] > 0))
            fail(ptr + "/bandwidths/" + std::to_string(k), "must be positive");
    if (const json* v = find_key(j, "particle_replicas"))
        d.particle_replicas = get_count(*v, ptr + "/particle_replicas");
    if (const json* v = find_key(j, "dual_replicas"))
        d.dual_replicas = get_count(*v, ptr + "/dual_replicas");
    if (const json* v = find_key(j, "tolerance")) d.tolerance = get_pos(*v, ptr + "/tolerance");
    return d;
}

LocalTimeSection parse_localtime(const json& j, const std::string& ptr) {
    need_object(j, ptr);
    known_keys(j, ptr, {"lambda", "eps", "t", "points", "replicas", "tolerance"});
    LocalTimeSection lt;
    lt.t = get_nonneg(need_key(j, ptr, "t"), ptr + "/t");
    lt.points = get_points(need_key(j, ptr, "points"), ptr + "/points");
    if (const json* v = find_key(j, "lambda")) lt.lambda = get_pos(*v, ptr + "/lambda");
    if (const json* v = find_key(j, "eps")) lt.eps = get_pos(*v, ptr + "/eps");
    if (const json* v = find_key(j, "replicas")) lt.replicas = get_count(*v, ptr + "/replicas");
    if (const json* v = find_key(j, "tolerance")) lt.tolerance = get_pos(*v, ptr + "/tolerance");
    return lt;
}

HolderSection parse_holder(const json& j, const std::string& ptr) {
    need_object(j, ptr);
    known_keys(j, ptr, {"mode", "eps", "moment_order", "times", "points", "replicas"});
    HolderSection h;
    if (const json* v = find_key(j, "mode")) {
        const std::string mode = get_str(*v, ptr + "/mode");
        if (mode == "time")
            h.mode = HolderMode::Time;
        else if (mode == "space")
            h.mode = HolderMode::Space;
        else
            fail(ptr + "/mode", "must be time or space");
    }
    h.times = get_vec(need_key(j, ptr, "times"), ptr + "/times");
    if (h.times.empty()) fail(ptr + "/times", "expected a nonempty array");
    h.points = get_points(need_key(j, ptr, "points"), ptr + "/points");
    if (const json* v = find_key(j, "eps")) h.eps = get_pos(*v, ptr + "/eps");
    if (const json* v = find_key(j, "moment_order")) {
        h.moment_order = static_cast<int>(get_count(*v, ptr + "/moment_order"));
    }
    if (const json* v = find_key(j, "replicas")) h.replicas = get_count(*v, ptr + "/replicas");
    return h;
}

ValidateSection parse_validate(const json& j, const std::string& ptr) {
    need_object(j, ptr);
    known_keys(j, ptr, {"horizon", "mollifier_a"});
    ValidateSection v;
    if (const json* k = find_key(j, "horizon")) v.horizon = get_pos(*k, ptr + "/horizon");
    if (const json* k = find_key(j, "mollifier_a"))
        v.mollifier_a = get_pos(*k, ptr + "/mollifier_a");
    return v;
}

KernelChecksSection parse_kernel_checks(const json& j, const std::string& ptr) {
    need_object(j, ptr);
    known_keys(j, ptr, {"lambda", "dims", "r_lo", "r_hi", "r_points"});
    KernelChecksSection kc;
    if (const json* v = find_key(j, "lambda")) kc.lambda = get_pos(*v, ptr + "/lambda");
    if (const json* v = find_key(j, "dims")) {
        const auto dims = get_vec(*v, ptr + "/dims");
        if (dims.empty()) fail(ptr + "/dims", "expected a nonempty array");
        kc.dims.clear();
        for (std::size_t k = 0; k < dims.size(); ++k) {
            const double d = dims[k];
            if (d != 1.0 && d != 2.0 && d != 3.0)
                fail(ptr + "/dims/" + std::to_string(k), "must be 1, 2, or 3");
            kc.dims.push_back(static_cast<int>(d));
        }
    }
    if (const json* v = find_key(j, "r_lo")) kc.r_lo = get_pos(*v, ptr + "/r_lo");
    if (const json* v = find_key(j, "r_hi")) kc.r_hi = get_pos(*v, ptr + "/r_hi");
    if (kc.r_hi <= kc.r_lo) fail(ptr + "/r_hi", "must exceed r_lo");
    if (const json* v = find_key(j, "r_points")) {
        kc.r_points = static_cast<int>(get_count(*v, ptr + "/r_points"));
        if (kc.r_points < 8) fail(ptr + "/r_points", "need at least 8 grid points");
    }
    return kc;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    need_object(j, "");
    known_keys(j, "", {"seed", "out_dir", "threads", "model", "initial_measure", "sim",
                       "duality", "localtime", "holder", "validate", "kernel_checks"});

    ExperimentConfig cfg;
    if (const json* v = find_key(j, "seed")) cfg.seed = get_u64(*v, "/seed");
    if (const json* v = find_key(j, "out_dir")) cfg.out_dir = get_str(*v, "/out_dir");
    if (const json* v = find_key(j, "threads"))
        cfg.threads = static_cast<int>(get_count(*v, "/threads"));

    if (const json* v = find_key(j, "model")) {
        cfg.model = parse_model(*v, "/model");
        cfg.has_model = true;
    }
    if (const json* v = find_key(j, "initial_measure")) {
        cfg.mu0 = parse_measure(*v, "/initial_measure");
        cfg.has_mu0 = true;
    }
    if (const json* v = find_key(j, "sim")) {
        cfg.sim = parse_sim(*v, "/sim");
        cfg.has_sim = true;
    }
    if (const json* v = find_key(j, "duality")) {
        cfg.duality = parse_duality(*v, "/duality");
        cfg.has_duality = true;
    }
    if (const json* v = find_key(j, "localtime")) {
        cfg.localtime = parse_localtime(*v, "/localtime");
        cfg.has_localtime = true;
    }
    if (const json* v = find_key(j, "holder")) {
        cfg.holder = parse_holder(*v, "/holder");
        cfg.has_holder = true;
    }
    if (const json* v = find_key(j, "validate")) cfg.validate = parse_validate(*v, "/validate");
    if (const json* v = find_key(j, "kernel_checks"))
        cfg.kernel_checks = parse_kernel_checks(*v, "/kernel_checks");

    if (cfg.has_model && cfg.has_mu0 && cfg.mu0.dim != cfg.model.dim())
        fail("/initial_measure", "dimension differs from /model/dim");
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

}  // namespace sdsmlab
