#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <boost/rational.hpp>

#include "flr/error.hpp"

namespace flr {

/**
 * Monomial coefficients of the Bernoulli polynomials B_0..B_max.
 *
 * Built from B_0 = 1 by integrating B_j' = j B_{j-1} and fixing the constant
 * so that B_j integrates to zero over [0, 1]. The recurrence runs in exact
 * rational arithmetic; only the final table is rounded to double.
 */
class BernoulliTable {
public:
    using Rational = boost::rational<std::int64_t>;

    explicit BernoulliTable(int max_degree) : max_degree_(max_degree) {
        if (max_degree < 0 || max_degree > 16) {
            fail(ErrorCode::InvalidArgument, "Bernoulli table degree must lie in [0, 16]");
        }
        std::vector<std::vector<Rational>> exact;
        exact.push_back({Rational(1)});
        for (int j = 1; j <= max_degree; ++j) {
            const auto& prev = exact.back();
            std::vector<Rational> next(static_cast<std::size_t>(j) + 1, Rational(0));
            // Antiderivative of j * B_{j-1}: coefficient of x^{k+1} is j * a_k / (k + 1).
            for (std::size_t k = 0; k < prev.size(); ++k) {
                next[k + 1] = Rational(j) * prev[k] / Rational(static_cast<std::int64_t>(k) + 1);
            }
            // Constant term makes the integral over [0,1] vanish.
            Rational integral(0);
            for (std::size_t k = 1; k < next.size(); ++k) {
                integral += next[k] / Rational(static_cast<std::int64_t>(k) + 1);
            }
            next[0] = -integral;
            exact.push_back(std::move(next));
        }
        coeffs_.reserve(exact.size());
        for (const auto& poly : exact) {
            std::vector<double> c;
            c.reserve(poly.size());
            for (const auto& r : poly) {
                c.push_back(boost::rational_cast<double>(r));
            }
            coeffs_.push_back(std::move(c));
        }
        exact_ = std::move(exact);
    }

    int max_degree() const noexcept { return max_degree_; }

    /// Coefficients a_0..a_j with B_j(x) = sum_k a_k x^k.
    const std::vector<double>& coefficients(int j) const {
        check_degree(j);
        return coeffs_[static_cast<std::size_t>(j)];
    }

    const std::vector<Rational>& exact_coefficients(int j) const {
        check_degree(j);
        return exact_[static_cast<std::size_t>(j)];
    }

    double operator()(int j, double x) const {
        const auto& c = coefficients(j);
        double value = 0.0;
        for (auto it = c.rbegin(); it != c.rend(); ++it) {
            value = value * x + *it;
        }
        return value;
    }

private:
    void check_degree(int j) const {
        if (j < 0 || j > max_degree_) {
            fail(ErrorCode::InvalidArgument, "Bernoulli index " + std::to_string(j) +
                                                 " outside [0, " + std::to_string(max_degree_) + "]");
        }
    }

    int max_degree_;
    std::vector<std::vector<double>> coeffs_;
    std::vector<std::vector<Rational>> exact_;
};

inline double bernoulli_poly(const BernoulliTable& table, int j, double x) {
    if (!(x >= 0.0 && x <= 1.0)) {
        fail(ErrorCode::InvalidArgument, "Bernoulli argument must lie in [0, 1]");
    }
    return table(j, x);
}

} // namespace flr
