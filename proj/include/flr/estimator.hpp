#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "flr/error.hpp"
#include "flr/grid.hpp"
#include "flr/sobolev_kernel.hpp"

namespace flr {

/// Log-spaced λ grid with optional golden-section refinement.
struct LambdaSearch {
    double log10_lower = -12.0;
    double log10_upper = 2.0;
    int grid_size = 60;
    bool refine = true;

    void validate() const {
        if (!(log10_lower < log10_upper)) {
            fail(ErrorCode::InvalidArgument, "lambda search needs lower < upper");
        }
        if (grid_size < 2) {
            fail(ErrorCode::InvalidArgument, "lambda search grid needs at least 2 points");
        }
    }

    std::vector<double> grid() const {
        validate();
        std::vector<double> out(static_cast<std::size_t>(grid_size));
        const double step = (log10_upper - log10_lower) / (grid_size - 1);
        for (int i = 0; i < grid_size; ++i) {
            out[static_cast<std::size_t>(i)] = std::pow(10.0, log10_lower + step * i);
        }
        return out;
    }
};

struct FLRConfig {
    int order = 2;
    std::optional<double> lambda; // empty: select by GCV
    LambdaSearch search;

    void validate() const {
        if (order < 1 || order > SobolevKernel::kMaxOrder) {
            fail(ErrorCode::InvalidArgument, "kernel order must lie in [1, 4]");
        }
        if (lambda && !(*lambda > 0.0 && std::isfinite(*lambda))) {
            fail(ErrorCode::InvalidArgument, "fixed lambda must be positive and finite");
        }
        if (!lambda) search.validate();
    }
};

/**
 * Sobolev kernel evaluated on a grid, plus a square-root factor of its Gram
 * matrix (gram = factor * factor^T). Shared by every dataset on that grid.
 */
struct KernelOnGrid {
    SobolevKernel kernel;
    GridPtr grid;
    Matrix gram;
    Matrix factor;
    Matrix null_basis; // P x m monomials

    KernelOnGrid(SobolevKernel k, GridPtr g) : kernel(std::move(k)), grid(std::move(g)) {
        gram = kernel_matrix(kernel, *grid);
        Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
        const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
        factor = eig.eigenvectors() * root.asDiagonal();
        null_basis.resize(grid->size(), kernel.null_space_dim());
        for (int j = 0; j < kernel.null_space_dim(); ++j) {
            null_basis.col(j) = grid->points().array().pow(j);
        }
    }
};

using KernelOnGridPtr = std::shared_ptr<const KernelOnGrid>;

inline KernelOnGridPtr make_kernel_on_grid(int order, const GridPtr& grid) {
    return std::make_shared<const KernelOnGrid>(SobolevKernel(order), grid);
}

/// Σ_ij = ∫∫ x̃_i(s) K(t,s) x̃_j(t) ds dt by double quadrature.
inline Matrix assemble_sigma(const Dataset& centered, const SobolevKernel& k,
                             const Matrix* gram = nullptr) {
    const auto& grid = *centered.grid();
    Matrix local;
    if (!gram) {
        local = kernel_matrix(k, grid);
        gram = &local;
    }
    const Matrix weighted = centered.curves() * grid.weights().asDiagonal();
    Matrix sigma = weighted * (*gram) * weighted.transpose();
    sigma.triangularView<Eigen::StrictlyLower>() = sigma.transpose();
    return sigma;
}

/// T_ij = ∫ x̃_i(t) t^(j-1) dt, j = 1..m.
inline Matrix assemble_t_matrix(const Dataset& centered, int m) {
    const auto& grid = *centered.grid();
    Matrix basis(grid.size(), m);
    for (int j = 0; j < m; ++j) {
        basis.col(j) = grid.points().array().pow(j);
    }
    return centered.curves() * grid.weights().asDiagonal() * basis;
}

/**
 * Everything about a training set that does not depend on λ: centering, the
 * kernel on the grid, Σ and T. Immutable once built.
 */
class FlrProblem {
public:
    FlrProblem(const Dataset& data, KernelOnGridPtr kernel)
        : kernel_(std::move(kernel)), centered_(center_dataset(data)) {
        if (!same_grid(kernel_->grid, data.grid())) {
            fail(ErrorCode::GridMismatch, "kernel was tabulated on a different grid");
        }
        const auto& w = data.grid()->weights();
        weighted_ = centered_.centered.curves() * w.asDiagonal();
        sigma_ = weighted_ * kernel_->gram * weighted_.transpose();
        sigma_.triangularView<Eigen::StrictlyLower>() = sigma_.transpose();
        tmat_ = weighted_ * kernel_->null_basis;
        if (size() < order()) {
            fail(ErrorCode::DegenerateDesign, "need at least m observations");
        }
    }

    FlrProblem(const Dataset& data, int order)
        : FlrProblem(data, make_kernel_on_grid(order, data.grid())) {}

    const KernelOnGridPtr& kernel() const noexcept { return kernel_; }
    int order() const noexcept { return kernel_->kernel.order(); }
    const CenteredDataset& centered() const noexcept { return centered_; }
    const Vector& y() const noexcept { return centered_.centered.responses(); }
    const Matrix& sigma() const noexcept { return sigma_; }
    const Matrix& t_matrix() const noexcept { return tmat_; }
    /// Centered curves times quadrature weights (n x P).
    const Matrix& weighted_curves() const noexcept { return weighted_; }
    Eigen::Index size() const noexcept { return centered_.centered.size(); }

private:
    KernelOnGridPtr kernel_;
    CenteredDataset centered_;
    Matrix weighted_;
    Matrix sigma_;
    Matrix tmat_;
};

/// A fitted regularized functional linear model.
class FittedFLR {
public:
    FittedFLR(KernelOnGridPtr kernel, Curve mean_curve, double mean_response, Matrix centered_curves,
              Vector d, Vector c, double lambda, double hat_trace, double gcv_value)
        : kernel_(std::move(kernel)), mean_curve_(std::move(mean_curve)),
          mean_response_(mean_response), centered_curves_(std::move(centered_curves)),
          d_(std::move(d)), c_(std::move(c)), lambda_(lambda), hat_trace_(hat_trace),
          gcv_value_(gcv_value) {
        const auto n = centered_curves_.rows();
        if (d_.size() != kernel_->kernel.order() || c_.size() != n ||
            centered_curves_.cols() != kernel_->grid->size()) {
            fail(ErrorCode::InvalidArgument, "fitted model has inconsistent dimensions");
        }
        if (!(lambda_ > 0.0)) {
            fail(ErrorCode::InvalidArgument, "fitted lambda must be positive");
        }
        representer_ = centered_curves_.transpose() * c_;
        const auto& w = kernel_->grid->weights();
        beta_grid_ = kernel_->null_basis * d_ + kernel_->gram * (w.asDiagonal() * representer_);
        alpha_hat_ = mean_response_ - inner_product(mean_curve_, Curve(kernel_->grid, beta_grid_));
    }

    double alpha_hat() const noexcept { return alpha_hat_; }
    const Vector& d() const noexcept { return d_; }
    const Vector& c() const noexcept { return c_; }
    const Curve& mean_curve() const noexcept { return mean_curve_; }
    double mean_response() const noexcept { return mean_response_; }
    const Matrix& centered_curves() const noexcept { return centered_curves_; }
    const SobolevKernel& kernel() const noexcept { return kernel_->kernel; }
    const KernelOnGridPtr& kernel_on_grid() const noexcept { return kernel_; }
    const GridPtr& grid() const noexcept { return kernel_->grid; }
    double lambda() const noexcept { return lambda_; }
    double hat_trace() const noexcept { return hat_trace_; }
    double gcv_value() const noexcept { return gcv_value_; }

    /// Σ_i c_i x̃_i on the grid; β̂ = Σ d_k t^(k-1) + K(this).
    const Vector& representer() const noexcept { return representer_; }
    const Vector& beta_values() const noexcept { return beta_grid_; }

private:
    KernelOnGridPtr kernel_;
    Curve mean_curve_;
    double mean_response_;
    Matrix centered_curves_;
    Vector d_;
    Vector c_;
    double lambda_;
    double hat_trace_;
    double gcv_value_;
    Vector representer_;
    Vector beta_grid_;
    double alpha_hat_ = 0.0;
};

namespace detail {

struct ClosedForm {
    Eigen::LLT<Matrix> w_factor;
    Matrix winv_t;        // W^{-1} T
    Eigen::LDLT<Matrix> m_factor; // T' W^{-1} T
};

inline ClosedForm factor_closed_form(const FlrProblem& problem, double lambda) {
    if (!(lambda > 0.0 && std::isfinite(lambda))) {
        fail(ErrorCode::InvalidArgument, "lambda must be positive and finite");
    }
    const auto n = problem.size();
    Matrix w = problem.sigma();
    w.diagonal().array() += static_cast<double>(n) * lambda;
    ClosedForm out;
    out.w_factor.compute(w);
    if (out.w_factor.info() != Eigen::Success) {
        const double jitter = 1e-10 * w.trace() / static_cast<double>(n);
        w.diagonal().array() += jitter;
        out.w_factor.compute(w);
        if (out.w_factor.info() != Eigen::Success) {
            fail(ErrorCode::FactorizationFailure, "W = Sigma + n*lambda*I is not positive definite");
        }
    }
    const Matrix& t = problem.t_matrix();
    out.winv_t = out.w_factor.solve(t);
    const Matrix m = t.transpose() * out.winv_t;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(m, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi / lo > 1e12) {
        fail(ErrorCode::DegenerateDesign, "T' W^-1 T is rank deficient (condition > 1e12)");
    }
    out.m_factor.compute(m);
    return out;
}

inline Matrix hat_matrix_from(const FlrProblem& problem, const ClosedForm& cf) {
    const auto n = problem.size();
    const Matrix& t = problem.t_matrix();
    // A = (T'W^-1T)^-1 T'W^-1, B = W^-1 (I - T A), H = T A + Σ B.
    const Matrix a = cf.m_factor.solve(cf.winv_t.transpose());
    const Matrix b = cf.w_factor.solve(Matrix::Identity(n, n) - t * a);
    Matrix h = t * a + problem.sigma() * b;
    return h;
}

} // namespace detail

inline Matrix hat_matrix(const FlrProblem& problem, double lambda) {
    return detail::hat_matrix_from(problem, detail::factor_closed_form(problem, lambda));
}

inline Matrix hat_matrix(const Dataset& data, int order, double lambda) {
    return hat_matrix(FlrProblem(data, order), lambda);
}

namespace detail {

/// Degrees of freedom of the full fit: the centered hat trace plus the intercept.
inline double full_trace(double centered_trace) { return centered_trace + 1.0; }

inline double gcv_from(const Vector& y, const Vector& fitted, double trace) {
    const auto n = static_cast<double>(y.size());
    const double ratio = full_trace(trace) / n;
    if (ratio >= 1.0 - 1e-9) {
        fail(ErrorCode::GcvUndefined, "(trace(H) + 1)/n is at or above 1");
    }
    const double denom = (1.0 - ratio) * (1.0 - ratio);
    return (y - fitted).squaredNorm() / n / denom;
}

} // namespace detail

/**
 * GCV(λ) = (1/n)‖y − ŷ‖² / (1 − tr(H_full)/n)², where ŷ includes α̂. The
 * residuals equal the centered ones and tr(H_full) = tr(H) + 1.
 */
inline double gcv(const FlrProblem& problem, double lambda) {
    const Matrix h = hat_matrix(problem, lambda);
    return detail::gcv_from(problem.y(), h * problem.y(), h.trace());
}

inline double gcv(const Dataset& data, int order, double lambda) {
    return gcv(FlrProblem(data, order), lambda);
}

/**
 * Closed-form minimizer of (1/n)‖ỹ − Td − Σc‖² + λ c'Σc:
 *   d = (T'W⁻¹T)⁻¹T'W⁻¹ỹ,  c = W⁻¹(ỹ − Td),  W = Σ + nλI.
 */
inline FittedFLR solve(const FlrProblem& problem, double lambda) {
    const auto cf = detail::factor_closed_form(problem, lambda);
    const Vector& y = problem.y();
    const Matrix& t = problem.t_matrix();
    const Vector winv_y = cf.w_factor.solve(y);
    const Vector d = cf.m_factor.solve(t.transpose() * winv_y);
    const Vector c = winv_y - cf.winv_t * d;
    const Matrix h = detail::hat_matrix_from(problem, cf);
    const double trace = h.trace();
    double gcv_value = std::numeric_limits<double>::infinity();
    if (detail::full_trace(trace) / static_cast<double>(problem.size()) < 1.0 - 1e-9) {
        gcv_value = detail::gcv_from(y, h * y, trace);
    }
    const auto& cd = problem.centered();
    return FittedFLR(problem.kernel(), cd.mean_curve, cd.mean_response, cd.centered.curves(), d, c,
                     lambda, trace, gcv_value);
}

/// Fitted centered values T d + Σ c.
inline Vector fitted_values(const FlrProblem& problem, const FittedFLR& fit) {
    return problem.t_matrix() * fit.d() + problem.sigma() * fit.c();
}

inline double penalized_objective(const FlrProblem& problem, const Vector& c, const Vector& d,
                                  double lambda) {
    const auto n = static_cast<double>(problem.size());
    const Vector resid = problem.y() - problem.t_matrix() * d - problem.sigma() * c;
    return resid.squaredNorm() / n + lambda * c.dot(problem.sigma() * c);
}

/// Gradient of the penalized objective in (c, d), stacked as [grad_c; grad_d].
inline Vector objective_gradient(const FlrProblem& problem, const Vector& c, const Vector& d,
                                 double lambda) {
    const auto n = static_cast<double>(problem.size());
    const Vector sc = problem.sigma() * c;
    const Vector resid = problem.y() - problem.t_matrix() * d - sc;
    Vector grad(c.size() + d.size());
    grad.head(c.size()) = -2.0 / n * (problem.sigma() * resid) + 2.0 * lambda * sc;
    grad.tail(d.size()) = -2.0 / n * (problem.t_matrix().transpose() * resid);
    return grad;
}

/**
 * λ-independent spectral form of the closed-form solution.
 *
 * With T = Q [R; 0] and Q2 spanning the complement of range(T), the solution is
 * c = Q2 (Q2'ΣQ2 + nλI)⁻¹ Q2'ỹ and ỹ − ŷ = nλc. Factoring Q2'ΣQ2 = U D U'
 * once makes every later λ cost O(n·rank).
 */
class LambdaPath {
public:
    struct Point {
        double lambda;
        Vector c;
        Vector d;
        double hat_trace;
        double rss;
    };

    explicit LambdaPath(std::shared_ptr<const FlrProblem> problem) : problem_(std::move(problem)) {
        const auto& pb = *problem_;
        const auto n = pb.size();
        const int m = pb.order();
        qr_.compute(pb.t_matrix());
        const Matrix r = qr_.matrixQR().topRows(m).triangularView<Eigen::Upper>();
        const Vector rdiag = r.diagonal().cwiseAbs();
        if (!(rdiag.minCoeff() > 0.0) || rdiag.maxCoeff() / rdiag.minCoeff() > 1e6) {
            fail(ErrorCode::DegenerateDesign, "T does not have full column rank");
        }
        // Q' [Xw L] then drop the first m rows: B = Q2' X̃ W L, so Q2'ΣQ2 = B B'.
        Matrix b = pb.weighted_curves() * pb.kernel()->factor;
        b.applyOnTheLeft(qr_.householderQ().adjoint());
        const Matrix b2 = b.bottomRows(n - m);
        Vector qy = pb.y();
        qy.applyOnTheLeft(qr_.householderQ().adjoint());
        z_ = qy.tail(n - m);

        Eigen::BDCSVD<Matrix> svd(b2, Eigen::ComputeThinU);
        const Vector s = svd.singularValues();
        const double tol = s.size() > 0 ? 1e-10 * s[0] : 0.0; // squared: 1e-20 relative in D
        Eigen::Index rank = 0;
        while (rank < s.size() && s[rank] > tol) ++rank;
        d_ = s.head(rank).cwiseAbs2();
        u_ = svd.matrixU().leftCols(rank);
        uz_ = u_.transpose() * z_;
        null_rss_ = std::max(0.0, z_.squaredNorm() - uz_.squaredNorm());
        null_dim_ = static_cast<double>(n - m - rank);
    }

    const FlrProblem& problem() const noexcept { return *problem_; }

    double hat_trace(double lambda) const {
        const double nl = nlambda(lambda);
        const double resid_dim = (nl / (d_.array() + nl)).sum() + null_dim_;
        return static_cast<double>(problem_->size()) - resid_dim;
    }

    /// ‖ỹ − Hỹ‖².
    double rss(double lambda) const {
        const double nl = nlambda(lambda);
        return ((nl / (d_.array() + nl)).square() * uz_.array().square()).sum() + null_rss_;
    }

    /// +∞ where (trace(H) + 1)/n ≥ 1 − 1e-9.
    double gcv(double lambda) const {
        const auto n = static_cast<double>(problem_->size());
        const double ratio = detail::full_trace(hat_trace(lambda)) / n;
        if (ratio >= 1.0 - 1e-9) return std::numeric_limits<double>::infinity();
        return rss(lambda) / n / ((1.0 - ratio) * (1.0 - ratio));
    }

    Point at(double lambda) const {
        const auto& pb = *problem_;
        const double nl = nlambda(lambda);
        const int m = pb.order();
        // c in the rotated coordinates, then back through Q.
        const Vector scaled = uz_.array() / (d_.array() + nl);
        Vector inner = u_ * scaled + (z_ - u_ * uz_) / nl;
        Vector c(pb.size());
        c.head(m).setZero();
        c.tail(pb.size() - m) = inner;
        c.applyOnTheLeft(qr_.householderQ());
        // T d = ỹ − Σc − nλc.
        Vector rhs = pb.y() - pb.sigma() * c - nl * c;
        rhs.applyOnTheLeft(qr_.householderQ().adjoint());
        const Matrix r = qr_.matrixQR().topRows(m).triangularView<Eigen::Upper>();
        Vector d = r.topLeftCorner(m, m).triangularView<Eigen::Upper>().solve(rhs.head(m));
        return {lambda, std::move(c), std::move(d), hat_trace(lambda), rss(lambda)};
    }

    FittedFLR fit(double lambda) const {
        auto p = at(lambda);
        const auto& cd = problem_->centered();
        return FittedFLR(problem_->kernel(), cd.mean_curve, cd.mean_response, cd.centered.curves(),
                         std::move(p.d), std::move(p.c), lambda, p.hat_trace, gcv(lambda));
    }

private:
    double nlambda(double lambda) const {
        if (!(lambda > 0.0 && std::isfinite(lambda))) {
            fail(ErrorCode::InvalidArgument, "lambda must be positive and finite");
        }
        return static_cast<double>(problem_->size()) * lambda;
    }

    std::shared_ptr<const FlrProblem> problem_;
    Eigen::HouseholderQR<Matrix> qr_;
    Vector z_;
    Vector d_;
    Matrix u_;
    Vector uz_;
    double null_rss_ = 0.0;
    double null_dim_ = 0.0;
};

struct LambdaSelection {
    double lambda;
    double gcv;
    /// (λ, GCV) ascending in λ; +∞ marks gcv-undefined points.
    std::vector<std::pair<double, double>> profile;
};

/**
 * Minimizes GCV over the log-spaced grid, ties going to the larger λ, then
 * optionally runs golden-section search in log10 λ on the bracketing cells.
 */
inline LambdaSelection select_lambda_gcv(const LambdaPath& path, const LambdaSearch& search) {
    const auto lambdas = search.grid();
    LambdaSelection out{0.0, std::numeric_limits<double>::infinity(), {}};
    out.profile.reserve(lambdas.size());
    std::size_t best = lambdas.size();
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        const double g = path.gcv(lambdas[i]);
        out.profile.emplace_back(lambdas[i], g);
        if (std::isfinite(g) && g <= out.gcv) {
            out.gcv = g;
            best = i;
        }
    }
    if (best == lambdas.size()) {
        fail(ErrorCode::SelectionFailure, "GCV is undefined at every grid point");
    }
    out.lambda = lambdas[best];
    if (!search.refine) {
        return out;
    }
    double lo = std::log10(lambdas[best == 0 ? 0 : best - 1]);
    double hi = std::log10(lambdas[std::min(best + 1, lambdas.size() - 1)]);
    const auto objective = [&](double log_lambda) { return path.gcv(std::pow(10.0, log_lambda)); };
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - inv_phi * (hi - lo);
    double x2 = lo + inv_phi * (hi - lo);
    double f1 = objective(x1);
    double f2 = objective(x2);
    for (int iter = 0; iter < 60 && hi - lo > 1e-8; ++iter) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = objective(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = objective(x2);
        }
    }
    const double x = f1 < f2 ? x1 : x2;
    const double fx = std::min(f1, f2);
    if (std::isfinite(fx) && fx < out.gcv) {
        out.lambda = std::pow(10.0, x);
        out.gcv = fx;
    }
    return out;
}

inline LambdaSelection select_lambda_gcv(const Dataset& data, const FLRConfig& cfg) {
    cfg.validate();
    LambdaPath path(std::make_shared<const FlrProblem>(data, cfg.order));
    return select_lambda_gcv(path, cfg.search);
}

/// Fixed λ goes through the closed form; otherwise GCV picks λ first.
inline FittedFLR fit(const Dataset& data, const FLRConfig& cfg) {
    cfg.validate();
    auto problem = std::make_shared<const FlrProblem>(data, cfg.order);
    double lambda = 0.0;
    if (cfg.lambda) {
        lambda = *cfg.lambda;
    } else {
        LambdaPath path(problem);
        lambda = select_lambda_gcv(path, cfg.search).lambda;
    }
    return solve(*problem, lambda);
}

inline FittedFLR solve(const Dataset& data, const FLRConfig& cfg) {
    cfg.validate();
    if (!cfg.lambda) {
        fail(ErrorCode::InvalidArgument, "solve requires a fixed lambda");
    }
    return solve(FlrProblem(data, cfg.order), *cfg.lambda);
}

inline void check_in_unit_interval(double t) {
    if (!(t >= 0.0 && t <= 1.0)) {
        fail(ErrorCode::InvalidArgument, "evaluation point must lie in [0, 1]");
    }
}

/// β̂^(q)(t) by termwise differentiation of the representer expansion.
inline double evaluate_beta_derivative(const FittedFLR& fit, double t, int q) {
    const int m = fit.kernel().order();
    if (q < 0 || q >= m) {
        fail(ErrorCode::UnsupportedDerivativeOrder,
             "derivative order " + std::to_string(q) + " requires q <= m - 1");
    }
    check_in_unit_interval(t);
    double value = 0.0;
    for (int k = q; k < m; ++k) {
        value += fit.d()[k] * detail::falling_factorial(k, q) * std::pow(t, k - q);
    }
    const auto& grid = *fit.grid();
    const auto& u = fit.representer();
    for (Eigen::Index p = 0; p < grid.size(); ++p) {
        value += grid.weights()[p] * u[p] * kernel_partial_t(fit.kernel(), grid.points()[p], t, q);
    }
    return value;
}

inline double evaluate_beta(const FittedFLR& fit, double t) {
    return evaluate_beta_derivative(fit, t, 0);
}

inline Curve beta_on_grid(const FittedFLR& fit) { return Curve(fit.grid(), fit.beta_values()); }

/// α̂ + ∫ x β̂, written as ȳ + ∫ (x − x̄) β̂.
inline double predict(const FittedFLR& fit, const Curve& x_new) {
    require_same_grid(x_new.grid(), fit.grid());
    const Curve shifted(fit.grid(), x_new.values() - fit.mean_curve().values());
    return fit.mean_response() + inner_product(shifted, beta_on_grid(fit));
}

} // namespace flr
