#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>

namespace cvp {

/// Monte Carlo point estimate.
struct Estimate {
    double mean = 0.0;
    double std_error = 0.0;  // sample standard deviation / sqrt(n)
    std::size_t n = 0;
    double truncation_fraction = 0.0;
    std::size_t failures = 0;
    int k = 0;  // mollification level, 0 when not applicable
};

/// Mean and standard error of `values` (summed in index order, so the result
/// does not depend on how the values were produced). Constant samples give
/// exactly that constant with zero standard error.
inline Estimate summarize(std::span<const double> values) {
    Estimate e;
    e.n = values.size();
    if (values.empty()) return e;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    if (*lo == *hi) {
        e.mean = *lo;
        return e;
    }
    double s = 0.0;
    for (double v : values) s += v;
    e.mean = s / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - e.mean) * (v - e.mean);
    const double n = static_cast<double>(values.size());
    e.std_error = n > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
    return e;
}

/// sqrt(se_a^2 + se_b^2).
inline double combined_stderr(const Estimate& a, const Estimate& b) {
    return std::hypot(a.std_error, b.std_error);
}

}  // namespace cvp
