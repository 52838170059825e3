#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace sdsmlab {

// One verdict per check. `values` keeps insertion order in the emitted
// JSON; keep them finite (divergent quantities go into `note` as text).
struct CheckResult {
    std::string name;
    bool pass = false;
    std::vector<std::pair<std::string, double>> values;
    std::string note;
};

// One run = one report. Everything except wall_seconds is reproducible
// for a fixed config file, seed, and replica count; thread count never
// changes the numbers, only the wall clock.
struct RunReport {
    std::string command;
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;  // fingerprint of the config file bytes
    int threads = 1;
    double wall_seconds = 0;
    std::vector<CheckResult> checks;

    bool all_pass() const;
    std::string to_json() const;
};

// %.17g: enough digits to round-trip a double, so equal inputs give
// byte-equal data files.
std::string g17(double v);
// Comma-joined %.17g row with trailing newline.
std::string csv_row(std::span<const double> values);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace sdsmlab
