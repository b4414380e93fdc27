#pragma once

#include <cmath>
#include <span>

#include "flr/error.hpp"

namespace flr {

struct LineFit {
    double slope;
    double intercept;
    double slope_stderr;
};

/// Ordinary least squares y = intercept + slope * x.
inline LineFit least_squares_line(std::span<const double> x, std::span<const double> y) {
    const auto n = x.size();
    if (n < 2 || y.size() != n) {
        fail(ErrorCode::InvalidArgument, "line fit needs >= 2 paired points");
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (!(sxx > 0.0)) {
        fail(ErrorCode::InvalidArgument, "line fit needs at least two distinct x values");
    }
    const double slope = sxy / sxx;
    const double intercept = my - slope * mx;
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - intercept - slope * x[i];
        sse += r * r;
    }
    const double stderr_ = n > 2 ? std::sqrt(sse / static_cast<double>(n - 2) / sxx) : 0.0;
    return {slope, intercept, stderr_};
}

} // namespace flr
