#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "flr/error.hpp"
#include "flr/estimator.hpp"
#include "flr/grid.hpp"
#include "flr/regression.hpp"

namespace flr {

enum class Spacing { Well, Close };

inline std::string to_string(Spacing s) { return s == Spacing::Well ? "well" : "close"; }

inline Spacing parse_spacing(const std::string& s) {
    if (s == "well") return Spacing::Well;
    if (s == "close") return Spacing::Close;
    fail(ErrorCode::InvalidArgument, "spacing must be 'well' or 'close', got '" + s + "'");
}

struct SimScenario {
    Spacing spacing = Spacing::Well;
    double nu = 2.0;
    double sigma = 0.5;
    int n = 100;
    int replicates = 200;
    std::uint64_t seed = 42;
    int series_terms = 50;
    int grid_points = 201;
    double truth_decay = 2.0;
    int order = 2;
    LambdaSearch search{-12.0, 2.0, 60, false};
    unsigned threads = 0; // 0: hardware concurrency

    void validate() const {
        if (!(nu > 1.0)) fail(ErrorCode::InvalidArgument, "nu must exceed 1");
        if (!(sigma > 0.0)) fail(ErrorCode::InvalidArgument, "sigma must be positive");
        if (replicates < 1) fail(ErrorCode::InvalidArgument, "replicates must be >= 1");
        if (series_terms < 1) fail(ErrorCode::InvalidArgument, "series_terms must be >= 1");
        if (n < order + 1) fail(ErrorCode::InvalidArgument, "n must exceed the kernel order");
        if (grid_points < 2) fail(ErrorCode::InvalidArgument, "grid_points must be >= 2");
        search.validate();
    }
};

/// φ_1 ≡ 1, φ_{k+1}(t) = √2 cos(kπt).
inline double cosine_basis(int k, double t) {
    if (k < 1) fail(ErrorCode::InvalidArgument, "cosine basis index starts at 1");
    if (k == 1) return 1.0;
    return std::sqrt(2.0) * std::cos(static_cast<double>(k - 1) * M_PI * t);
}

/// Standard deviations ζ_k of the predictor scores (ζ_k² are the covariance eigenvalues).
inline std::vector<double> zeta_sequence(Spacing spacing, double nu, int terms) {
    if (terms < 1) fail(ErrorCode::InvalidArgument, "need at least one term");
    std::vector<double> zeta(static_cast<std::size_t>(terms));
    for (int k = 1; k <= terms; ++k) {
        const double sign = (k % 2 == 1) ? 1.0 : -1.0;
        double value = 0.0;
        if (spacing == Spacing::Well) {
            value = sign * std::pow(static_cast<double>(k), -nu / 2.0);
        } else if (k == 1) {
            value = 1.0;
        } else if (k <= 4) {
            value = 0.2 * sign * (1.0 - 0.0001 * k);
        } else {
            const double block = 5.0 * static_cast<double>(k / 5);
            value = 0.2 * sign * (std::pow(block, -nu / 2.0) - 0.0001 * static_cast<double>(k % 5));
        }
        zeta[static_cast<std::size_t>(k - 1)] = value;
    }
    return zeta;
}

/// β₀ = Σ b_k φ_k with b_k = 4(−1)^{k+1} k^{-decay}, and the predictor law.
struct TruthModel {
    Vector b;
    Vector zeta;
    GridPtr grid;
    Matrix basis; // P x K, column k-1 holds φ_k

    TruthModel(const SimScenario& s, GridPtr g) : grid(std::move(g)) {
        const int terms = s.series_terms;
        b.resize(terms);
        zeta.resize(terms);
        const auto z = zeta_sequence(s.spacing, s.nu, terms);
        for (int k = 1; k <= terms; ++k) {
            const double sign = (k % 2 == 1) ? 1.0 : -1.0;
            b[k - 1] = 4.0 * sign * std::pow(static_cast<double>(k), -s.truth_decay);
            zeta[k - 1] = z[static_cast<std::size_t>(k - 1)];
        }
        basis.resize(grid->size(), terms);
        for (Eigen::Index p = 0; p < grid->size(); ++p) {
            for (int k = 1; k <= terms; ++k) {
                basis(p, k - 1) = cosine_basis(k, grid->points()[p]);
            }
        }
    }
};

inline Curve beta0_on_grid(const TruthModel& truth) {
    return Curve(truth.grid, truth.basis * truth.b);
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

} // namespace detail

/// Independent engine per (seed, replicate) so replicates can run in any order.
inline std::mt19937_64 replicate_engine(std::uint64_t seed, std::uint64_t replicate) {
    return std::mt19937_64(detail::splitmix64(detail::splitmix64(seed) ^ detail::splitmix64(~replicate)));
}

/**
 * X_i = Σ ζ_k Z_ik φ_k with Z_ik ~ U[−√3, √3]; y_i = Σ ζ_k Z_ik b_k + ε_i,
 * ε_i ~ N(0, σ²). The response uses the exact coefficient sum, so the
 * generator carries no quadrature error.
 */
inline Dataset simulate_dataset(const SimScenario& scenario, const TruthModel& truth,
                                std::uint64_t replicate_index) {
    if (!(scenario.sigma >= 0.0)) fail(ErrorCode::InvalidArgument, "sigma must be >= 0");
    if (scenario.n < 1) fail(ErrorCode::InvalidArgument, "n must be >= 1");
    auto engine = replicate_engine(scenario.seed, replicate_index);
    const double root3 = std::sqrt(3.0);
    std::uniform_real_distribution<double> score(-root3, root3);
    std::normal_distribution<double> noise(0.0, 1.0);
    const auto terms = truth.zeta.size();
    Matrix scores(scenario.n, terms);
    Vector y(scenario.n);
    for (int i = 0; i < scenario.n; ++i) {
        for (Eigen::Index k = 0; k < terms; ++k) {
            scores(i, k) = truth.zeta[k] * score(engine);
        }
        y[i] = scores.row(i).dot(truth.b) + scenario.sigma * noise(engine);
    }
    Matrix curves = scores * truth.basis.transpose();
    return Dataset(truth.grid, std::move(curves), std::move(y));
}

/// ‖β̂ − β₀‖²_{L2} by quadrature.
inline double estimation_error(const Curve& beta_hat, const Curve& beta0) {
    require_same_grid(beta_hat.grid(), beta0.grid());
    const Curve diff(beta_hat.grid(), beta_hat.values() - beta0.values());
    return inner_product(diff, diff);
}

/// ‖β̂ − β₀‖₀² = Σ ζ_k² (⟨β̂, φ_k⟩ − b_k)².
inline double prediction_error(const Curve& beta_hat, const TruthModel& truth) {
    require_same_grid(beta_hat.grid(), truth.grid);
    const Vector proj = truth.basis.transpose() * (truth.grid->weights().asDiagonal() * beta_hat.values());
    return (truth.zeta.array().square() * (proj - truth.b).array().square()).sum();
}

enum class TuningMethod { Gcv, OraclePred, OracleEst };

inline std::string to_string(TuningMethod m) {
    switch (m) {
    case TuningMethod::Gcv: return "gcv";
    case TuningMethod::OraclePred: return "oracle_pred";
    case TuningMethod::OracleEst: return "oracle_est";
    }
    return "unknown";
}

inline TuningMethod parse_tuning_method(const std::string& s) {
    if (s == "gcv") return TuningMethod::Gcv;
    if (s == "oracle_pred") return TuningMethod::OraclePred;
    if (s == "oracle_est") return TuningMethod::OracleEst;
    fail(ErrorCode::ParseError, "unknown tuning method '" + s + "'");
}

struct ReplicateResult {
    int replicate;
    TuningMethod method;
    double lambda;
    double est_error;
    double pred_error;
};

struct ReplicateBatch {
    std::vector<ReplicateResult> results; // ordered by (replicate, method)
    int failures = 0;
};

namespace detail {

struct ReplicateOutcome {
    bool ok = false;
    ReplicateResult rows[3];
};

/**
 * One dataset, one spectral factorization, then every grid λ: GCV picks its
 * own minimizer and the two oracles pick theirs from the same grid. Ties go to
 * the larger λ throughout.
 */
inline ReplicateOutcome run_one(const SimScenario& s, const TruthModel& truth, const Curve& beta0,
                                const KernelOnGridPtr& kernel, const std::vector<double>& lambdas,
                                int replicate) {
    ReplicateOutcome out;
    const auto data = simulate_dataset(s, truth, static_cast<std::uint64_t>(replicate));
    const LambdaPath path(std::make_shared<const FlrProblem>(data, kernel));
    const auto& pb = path.problem();
    const auto& w = truth.grid->weights();
    const double inf = std::numeric_limits<double>::infinity();
    double best_gcv = inf, best_pred = inf, best_est = inf;
    ReplicateResult gcv_row{replicate, TuningMethod::Gcv, 0.0, inf, inf};
    ReplicateResult pred_row{replicate, TuningMethod::OraclePred, 0.0, inf, inf};
    ReplicateResult est_row{replicate, TuningMethod::OracleEst, 0.0, inf, inf};
    for (double lambda : lambdas) {
        const auto point = path.at(lambda);
        const Vector representer = pb.centered().centered.curves().transpose() * point.c;
        const Vector beta = kernel->null_basis * point.d + kernel->gram * (w.asDiagonal() * representer);
        const Curve beta_hat(truth.grid, beta);
        const double est = estimation_error(beta_hat, beta0);
        const double pred = prediction_error(beta_hat, truth);
        const double g = path.gcv(lambda);
        if (std::isfinite(g) && g <= best_gcv) {
            best_gcv = g;
            gcv_row = {replicate, TuningMethod::Gcv, lambda, est, pred};
        }
        if (pred <= best_pred) {
            best_pred = pred;
            pred_row = {replicate, TuningMethod::OraclePred, lambda, est, pred};
        }
        if (est <= best_est) {
            best_est = est;
            est_row = {replicate, TuningMethod::OracleEst, lambda, est, pred};
        }
    }
    if (!std::isfinite(best_gcv)) {
        fail(ErrorCode::SelectionFailure, "GCV is undefined at every grid point");
    }
    out.ok = true;
    out.rows[0] = gcv_row;
    out.rows[1] = pred_row;
    out.rows[2] = est_row;
    return out;
}

} // namespace detail

/**
 * Monte Carlo replicates of one scenario. Each replicate owns its RNG stream
 * and the reduction is ordered by replicate index, so the output does not
 * depend on the thread count.
 */
inline ReplicateBatch run_replicates(const SimScenario& scenario) {
    scenario.validate();
    const auto grid = make_uniform_grid(scenario.grid_points);
    const TruthModel truth(scenario, grid);
    const Curve beta0 = beta0_on_grid(truth);
    const auto kernel = make_kernel_on_grid(scenario.order, grid);
    const auto lambdas = scenario.search.grid();

    std::vector<detail::ReplicateOutcome> outcomes(static_cast<std::size_t>(scenario.replicates));
    std::atomic<int> next{0};
    const auto worker = [&] {
        for (int r = next++; r < scenario.replicates; r = next++) {
            try {
                outcomes[static_cast<std::size_t>(r)] =
                    detail::run_one(scenario, truth, beta0, kernel, lambdas, r);
            } catch (const Error&) {
                outcomes[static_cast<std::size_t>(r)].ok = false;
            }
        }
    };
    unsigned threads = scenario.threads ? scenario.threads : std::thread::hardware_concurrency();
    threads = std::clamp<unsigned>(threads, 1u, static_cast<unsigned>(scenario.replicates));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
    }

    ReplicateBatch batch;
    for (const auto& o : outcomes) {
        if (!o.ok) {
            ++batch.failures;
            continue;
        }
        batch.results.insert(batch.results.end(), std::begin(o.rows), std::end(o.rows));
    }
    return batch;
}

struct RateFit {
    std::vector<double> sample_sizes;
    std::vector<double> mean_errors;
    double slope;
    double intercept;
    double slope_stderr;
};

/// Slope of log(mean error) against log(n).
inline RateFit fit_rate(const std::map<int, std::vector<double>>& errors_by_n,
                        std::size_t min_replicates = 30) {
    if (errors_by_n.size() < 3) {
        fail(ErrorCode::InvalidArgument, "rate fit needs at least 3 distinct sample sizes");
    }
    RateFit out{};
    std::vector<double> x, y;
    for (const auto& [n, errors] : errors_by_n) {
        if (errors.size() < min_replicates) {
            fail(ErrorCode::InvalidArgument, "sample size " + std::to_string(n) + " has only " +
                                                 std::to_string(errors.size()) + " replicates");
        }
        double mean = 0.0;
        for (double e : errors) mean += e;
        mean /= static_cast<double>(errors.size());
        if (!(mean > 0.0)) {
            fail(ErrorCode::InvalidArgument, "mean error must be positive for a log-log fit");
        }
        out.sample_sizes.push_back(n);
        out.mean_errors.push_back(mean);
        x.push_back(std::log(static_cast<double>(n)));
        y.push_back(std::log(mean));
    }
    const auto line = least_squares_line(x, y);
    out.slope = line.slope;
    out.intercept = line.intercept;
    out.slope_stderr = line.slope_stderr;
    return out;
}

inline double mean_of(const ReplicateBatch& batch, TuningMethod method, bool prediction) {
    double sum = 0.0;
    int count = 0;
    for (const auto& r : batch.results) {
        if (r.method != method) continue;
        sum += prediction ? r.pred_error : r.est_error;
        ++count;
    }
    if (count == 0) fail(ErrorCode::InvalidArgument, "no results for the requested method");
    return sum / count;
}

} // namespace flr
