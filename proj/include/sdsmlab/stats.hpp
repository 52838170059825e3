#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>

namespace sdsmlab {

// Online central moments up to order 4 (Pébay's single-pass updates).
// Supports order-independent merging so replica results can be reduced
// in index order regardless of completion order.
class StreamingMoments {
public:
    void add(double x) {
        const double n1 = static_cast<double>(n_);
        n_ += 1;
        const double n = static_cast<double>(n_);
        const double delta = x - mean_;
        const double dn = delta / n;
        const double dn2 = dn * dn;
        const double term1 = delta * dn * n1;
        mean_ += dn;
        m4_ += term1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * m2_ - 4.0 * dn * m3_;
        m3_ += term1 * dn * (n - 2.0) - 3.0 * dn * m2_;
        m2_ += term1;
    }

    void combine(const StreamingMoments& o) {
        if (o.n_ == 0) return;
        if (n_ == 0) { *this = o; return; }
        const double na = static_cast<double>(n_), nb = static_cast<double>(o.n_);
        const double n = na + nb;
        const double delta = o.mean_ - mean_;
        const double d2 = delta * delta;
        const double m2 = m2_ + o.m2_ + d2 * na * nb / n;
        const double m3 = m3_ + o.m3_ + d2 * delta * na * nb * (na - nb) / (n * n)
                        + 3.0 * delta * (na * o.m2_ - nb * m2_) / n;
        const double m4 = m4_ + o.m4_
                        + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
                        + 6.0 * d2 * (na * na * o.m2_ + nb * nb * m2_) / (n * n)
                        + 4.0 * delta * (na * o.m3_ - nb * m3_) / n;
        mean_ = (na * mean_ + nb * o.mean_) / n;
        m2_ = m2; m3_ = m3; m4_ = m4;
        n_ += o.n_;
    }

    std::int64_t count() const noexcept { return n_; }
    double mean() const noexcept { return mean_; }

    double variance() const {
        if (n_ < 2) throw std::logic_error("StreamingMoments: variance needs n >= 2");
        return m2_ / static_cast<double>(n_ - 1);
    }

    double se_mean() const { return std::sqrt(variance() / static_cast<double>(n_)); }

    // Standard error of the sample variance, using the fourth central moment:
    // Var(s^2) = (m4 - (n-3)/(n-1) s^4) / n.
    double se_variance() const {
        const double n = static_cast<double>(n_);
        if (n_ < 4) throw std::logic_error("StreamingMoments: se_variance needs n >= 4");
        const double s2 = variance();
        const double m4 = m4_ / n;
        double v = (m4 - (n - 3.0) / (n - 1.0) * s2 * s2) / n;
        if (v < 0) v = 0;
        return std::sqrt(v);
    }

private:
    std::int64_t n_ = 0;
    double mean_ = 0, m2_ = 0, m3_ = 0, m4_ = 0;
};

struct LinFit {
    double slope = 0;
    double intercept = 0;
    double r2 = 0;
};

inline LinFit linfit(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("linfit: need two equal-length samples of size >= 2");
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) { sx += x[i]; sy += y[i]; }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx; sxy += dx * dy; syy += dy * dy;
    }
    if (sxx == 0) throw std::invalid_argument("linfit: degenerate abscissae");
    LinFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r2 = (syy == 0) ? 1.0 : (sxy * sxy) / (sxx * syy);
    return f;
}

}  // namespace sdsmlab
