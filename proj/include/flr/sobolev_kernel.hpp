#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "flr/bernoulli.hpp"
#include "flr/error.hpp"
#include "flr/grid.hpp"

namespace flr {

namespace detail {

inline double factorial(int k) {
    double f = 1.0;
    for (int i = 2; i <= k; ++i) f *= i;
    return f;
}

/// k! / (k - q)!
inline double falling_factorial(int k, int q) {
    double f = 1.0;
    for (int i = 0; i < q; ++i) f *= (k - i);
    return f;
}

inline void check_unit_interval(double s, double t) {
    if (!(s >= 0.0 && s <= 1.0 && t >= 0.0 && t <= 1.0)) {
        fail(ErrorCode::InvalidArgument, "kernel arguments must lie in [0, 1]");
    }
}

} // namespace detail

/**
 * Reproducing kernel of the penalized component of W_2^m[0,1] under the
 * penalty J(f) = int (f^(m))^2:
 *
 *   K(s,t) = B_m(s) B_m(t) / (m!)^2 + (-1)^(m-1) B_2m(|s-t|) / (2m)!
 *
 * The unpenalized null space is spanned by 1, t, ..., t^(m-1).
 */
class SobolevKernel {
public:
    static constexpr int kMaxOrder = 4;

    explicit SobolevKernel(int order = 2) : order_(order), bernoulli_(2 * checked(order)) {}

    int order() const noexcept { return order_; }
    int null_space_dim() const noexcept { return order_; }
    const BernoulliTable& bernoulli() const noexcept { return bernoulli_; }

    double operator()(double s, double t) const {
        const double m_fact = detail::factorial(order_);
        const double sign = (order_ % 2 == 1) ? 1.0 : -1.0;
        return bernoulli_(order_, s) * bernoulli_(order_, t) / (m_fact * m_fact) +
               sign * bernoulli_(2 * order_, std::abs(s - t)) / detail::factorial(2 * order_);
    }

private:
    static int checked(int order) {
        if (order < 1 || order > kMaxOrder) {
            fail(ErrorCode::InvalidArgument,
                 "kernel order must lie in [1, 4], got " + std::to_string(order));
        }
        return order;
    }

    int order_;
    BernoulliTable bernoulli_;
};

inline double kernel_eval(const SobolevKernel& k, double s, double t) {
    detail::check_unit_interval(s, t);
    return k(s, t);
}

/**
 * q-th partial derivative of K(s,t) in t, 0 <= q <= m-1.
 *
 * Uses B_j' = j B_{j-1}; the |s-t| term picks up sign(t-s)^q. At s = t the odd
 * q terms carry B_{2m-q}(0) = 0 (2m-q is odd and >= 3), so the one-sided limits
 * agree and the value is that common limit.
 */
inline double kernel_partial_t(const SobolevKernel& k, double s, double t, int q) {
    const int m = k.order();
    if (q < 0 || q >= m) {
        fail(ErrorCode::UnsupportedDerivativeOrder,
             "derivative order " + std::to_string(q) + " requires q <= m - 1 = " + std::to_string(m - 1));
    }
    detail::check_unit_interval(s, t);
    if (q == 0) {
        return k(s, t);
    }
    const auto& b = k.bernoulli();
    const double m_fact = detail::factorial(m);
    const double smooth =
        b(m, s) * detail::falling_factorial(m, q) * b(m - q, t) / (m_fact * m_fact);
    const double sign = (m % 2 == 1) ? 1.0 : -1.0;
    const double dir = (q % 2 == 1 && t < s) ? -1.0 : 1.0;
    const double kink = sign * dir * detail::falling_factorial(2 * m, q) *
                        b(2 * m - q, std::abs(s - t)) / detail::factorial(2 * m);
    return smooth + kink;
}

/// (K f)(t) = int K(t,s) f(s) ds by grid quadrature.
inline double kernel_apply(const SobolevKernel& k, const Curve& f, double t) {
    const auto& grid = *f.grid();
    double sum = 0.0;
    for (Eigen::Index p = 0; p < grid.size(); ++p) {
        sum += grid.weights()[p] * k(t, grid.points()[p]) * f[p];
    }
    return sum;
}

/// Monomials 1, t, ..., t^(m-1) on the grid.
inline std::vector<Curve> null_space_basis(const SobolevKernel& k, const GridPtr& grid) {
    std::vector<Curve> basis;
    for (int j = 0; j < k.null_space_dim(); ++j) {
        basis.push_back(Curve::sample(grid, [j](double t) { return std::pow(t, j); }));
    }
    return basis;
}

/// Generic symmetric kernel on [0,1]^2.
using KernelFunction = std::function<double(double, double)>;

/// [kernel(t_i, t_j)], filled on the upper triangle and mirrored.
template <typename Kernel>
Matrix kernel_matrix(const Kernel& kernel, const Grid& grid) {
    const auto p = grid.size();
    Matrix gram(p, p);
    for (Eigen::Index j = 0; j < p; ++j) {
        for (Eigen::Index i = 0; i <= j; ++i) {
            gram(i, j) = kernel(grid.points()[i], grid.points()[j]);
            gram(j, i) = gram(i, j);
        }
    }
    return gram;
}

inline double brownian_covariance(double s, double t) { return std::min(s, t); }

inline double ou_covariance(double s, double t) { return std::exp(-std::abs(s - t)); }

} // namespace flr
