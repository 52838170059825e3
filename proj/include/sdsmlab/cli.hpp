#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "sdsmlab/config.hpp"
#include "sdsmlab/report.hpp"

namespace sdsmlab {

struct CliOptions {
    std::string command;
    std::string out_dir;  // overrides the config value when nonempty
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::size_t> replicas;  // command-specific replica override
    std::uint64_t config_hash = 0;
};

// Dispatch a parsed config: run the command, write its data files and
// report.json under the effective output directory, print one line per
// check. Throws ConfigError on structural problems; check failures are
// encoded in the returned report, not thrown.
RunReport run_command(const CliOptions& opt, const ExperimentConfig& cfg);

// argv front end. Subcommands: validate, simulate, duality, localtime,
// holder, kernel-checks. Exit code 0 = all checks pass, 1 = some check
// failed, 2 = configuration or usage error.
int run_cli(int argc, const char* const* argv);

}  // namespace sdsmlab
