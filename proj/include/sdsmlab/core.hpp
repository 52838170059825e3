#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace sdsmlab {

inline constexpr const char* kVersion = "0.1.0";

// Malformed or inconsistent user input (config files, CLI arguments).
// The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {
inline std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}
}  // namespace detail

// FNV-1a over raw bytes; used for config and path fingerprints where we
// need reproducibility across runs, not cryptographic strength.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 14695981039346656037ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

// A numeric routine failed to reach its accuracy target. Carries the
// error estimate that was actually achieved.
class NumericError : public std::runtime_error {
public:
    NumericError(const std::string& what, double achieved)
        : std::runtime_error(what + " (achieved error estimate " + detail::sci(achieved) + ")"),
          achieved_(achieved) {}
    double achieved() const noexcept { return achieved_; }

private:
    double achieved_;
};

// Raised when a kernel model violates a structural requirement
// (e.g. the diffusion covariance fails uniform ellipticity).
class ModelRejection : public std::runtime_error {
public:
    explicit ModelRejection(const std::string& what) : std::runtime_error(what) {}
};

// Finite-or-infinite value. Quantities that can legitimately diverge
// (suprema over singular measures, non-integrable pairings) return this
// instead of leaking bare IEEE infinities into reports.
class ExtendedReal {
public:
    static ExtendedReal finite(double v) { return ExtendedReal(v, false); }
    static ExtendedReal infinity() { return ExtendedReal(0.0, true); }

    bool is_infinite() const noexcept { return infinite_; }
    bool is_finite() const noexcept { return !infinite_; }

    // Throws on infinite values; call is_finite() first.
    double value() const {
        if (infinite_) throw std::logic_error("ExtendedReal: value() on infinite");
        return value_;
    }

    std::string str() const { return infinite_ ? "inf" : std::to_string(value_); }

private:
    ExtendedReal(double v, bool inf) : value_(v), infinite_(inf) {}
    double value_;
    bool infinite_;
};

}  // namespace sdsmlab
