#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdsmlab/kernels.hpp"
#include "sdsmlab/localtime.hpp"
#include "sdsmlab/measures.hpp"

namespace sdsmlab {

// Config sections mirror the JSON schema one to one; presence flags let
// each command demand exactly the sections it consumes. Numbers are
// validated at parse time, deeper consistency (dt vs snapshot grid,
// branch-rate guard) stays with the modules that own it.

struct SimSection {
    std::size_t particles = 200;
    double dt = 1e-3;
    double horizon = 0.5;
    double gamma = 0.0;
    double sigma2 = 1.0;
    std::vector<double> snapshots;
    double snapshot_every = 0;  // 0 = none; expands to multiples below horizon
    bool keep_steps = false;
    std::size_t replicas = 1;
};

struct DualitySection {
    std::vector<std::vector<double>> centers;  // one Gaussian factor each
    std::vector<double> bandwidths;
    std::size_t particle_replicas = 100;
    std::size_t dual_replicas = 1;
    double tolerance = 3.0;  // z-score threshold
};

struct LocalTimeSection {
    double lambda = 1.0;
    double eps = 0.01;
    double t = 0.0;
    std::vector<std::vector<double>> points;
    std::size_t replicas = 50;
    double tolerance = 3.0;
};

struct HolderSection {
    HolderMode mode = HolderMode::Time;
    double eps = 0.0025;
    int moment_order = 2;
    std::vector<double> times;
    std::vector<std::vector<double>> points;
    std::size_t replicas = 100;
};

struct ValidateSection {
    double horizon = 1.0;
    double mollifier_a = 3.0;
};

struct KernelChecksSection {
    double lambda = 1.0;
    std::vector<int> dims = {1, 2, 3};
    double r_lo = 1e-3;
    double r_hi = 10.0;
    int r_points = 40;
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::string out_dir = ".";
    int threads = 1;

    KernelModel model = KernelModel::standard(1);
    MeasureSpec mu0 = MeasureSpec::dirac({0.0});
    SimSection sim;
    DualitySection duality;
    LocalTimeSection localtime;
    HolderSection holder;
    ValidateSection validate;
    KernelChecksSection kernel_checks;

    bool has_model = false;
    bool has_mu0 = false;
    bool has_sim = false;
    bool has_duality = false;
    bool has_localtime = false;
    bool has_holder = false;
};

// Strict parse: unknown keys, wrong types, and out-of-domain values raise
// ConfigError carrying the JSON pointer of the offending key.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

}  // namespace sdsmlab
