#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flr/error.hpp"
#include "flr/grid.hpp"
#include "flr/regression.hpp"
#include "flr/sobolev_kernel.hpp"

namespace flr {

/// Leading Mercer pairs of a kernel operator, eigenfunctions as grid columns.
struct MercerSystem {
    GridPtr grid;
    Vector eigenvalues;  // descending, clipped at 1e-12 * max
    Matrix eigenfunctions; // P x M, quadrature-orthonormal

    Eigen::Index size() const noexcept { return eigenvalues.size(); }
    Curve eigenfunction(Eigen::Index k) const { return Curve(grid, eigenfunctions.col(k)); }
};

namespace detail {

/// Flips each column so its first entry with |value| > 1e-8 is positive.
inline void fix_signs(Matrix& columns) {
    for (Eigen::Index k = 0; k < columns.cols(); ++k) {
        for (Eigen::Index p = 0; p < columns.rows(); ++p) {
            if (std::abs(columns(p, k)) > 1e-8) {
                if (columns(p, k) < 0.0) columns.col(k) *= -1.0;
                break;
            }
        }
    }
}

} // namespace detail

/**
 * Nyström eigen-decomposition: the symmetric problem W^½ K W^½ v = λ v has the
 * same spectrum as the quadrature operator, and e = W^-½ v recovers
 * eigenfunctions orthonormal under the grid weights.
 */
inline MercerSystem mercer(const Matrix& kernel_on_grid, const GridPtr& grid, Eigen::Index terms) {
    const auto p = grid->size();
    if (kernel_on_grid.rows() != p || kernel_on_grid.cols() != p) {
        fail(ErrorCode::InvalidKernel, "kernel matrix does not match the grid");
    }
    if (terms < 1 || terms > p) {
        fail(ErrorCode::InvalidArgument, "number of Mercer terms must lie in [1, P]");
    }
    const double scale = std::max(kernel_on_grid.cwiseAbs().maxCoeff(), 1e-300);
    if ((kernel_on_grid - kernel_on_grid.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        fail(ErrorCode::InvalidKernel, "kernel matrix is not symmetric");
    }
    const Vector root_w = grid->weights().cwiseSqrt();
    const Matrix sym = root_w.asDiagonal() * kernel_on_grid * root_w.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
    if (eig.info() != Eigen::Success) {
        fail(ErrorCode::InvalidKernel, "eigen-decomposition did not converge");
    }
    // Eigen returns ascending order.
    Vector values = eig.eigenvalues().reverse().head(terms);
    Matrix vectors = eig.eigenvectors().rowwise().reverse().leftCols(terms);
    const double top = std::max(values.maxCoeff(), 0.0);
    for (Eigen::Index k = 0; k < values.size(); ++k) {
        if (values[k] < 1e-12 * top) values[k] = 0.0;
    }
    Matrix functions = root_w.cwiseInverse().asDiagonal() * vectors;
    detail::fix_signs(functions);
    return {grid, std::move(values), std::move(functions)};
}

/**
 * The (γ_k, ω_k) system in which ⟨C·,·⟩ is the identity and the penalty is
 * diag(1/γ_k), computed inside the span of the first M kernel eigenfunctions.
 */
struct DiagonalizedPair {
    GridPtr grid;
    Vector gamma; // descending
    Vector nu;    // γ / (1 + γ)
    Matrix omega; // P x M on the grid
    Matrix omega_in_psi; // M x M: ω_k = Σ_j omega_in_psi(j,k) ψ_j
    Vector rho;   // truncated kernel eigenvalues used
    Matrix psi;   // P x M kernel eigenfunctions used

    Eigen::Index size() const noexcept { return gamma.size(); }
    Curve omega_curve(Eigen::Index k) const { return Curve(grid, omega.col(k)); }
};

/// ∫∫ f(s) C(s,t) g(t) ds dt for columns of f and g.
inline Matrix covariance_form(const Matrix& c_matrix, const Grid& grid, const Matrix& f,
                              const Matrix& g) {
    const auto& w = grid.weights();
    return f.transpose() * w.asDiagonal() * c_matrix * w.asDiagonal() * g;
}

/**
 * With C̃_jk = ⟨Cψ_j, ψ_k⟩ and f = Σ g_j ψ_j, J(f) = Σ g_j²/ρ_j. The pencil
 * (C̃, diag(1/ρ)) reduces to D^½ C̃ D^½ v = γ v. Its eigenvalues are taken as
 * squared singular values of Lᵀ D^½ (C̃ = L Lᵀ) via Jacobi SVD, which keeps
 * relative accuracy on the strongly graded spectrum.
 */
inline DiagonalizedPair simultaneous_diagonalize(const MercerSystem& ksys, const Matrix& c_matrix,
                                                 const GridPtr& grid, Eigen::Index terms) {
    if (terms < 1 || terms > ksys.size()) {
        fail(ErrorCode::InvalidArgument, "truncation must lie in [1, number of Mercer terms]");
    }
    if (!same_grid(ksys.grid, grid) || c_matrix.rows() != grid->size() ||
        c_matrix.cols() != grid->size()) {
        fail(ErrorCode::GridMismatch, "kernel system and covariance use different grids");
    }
    const Vector rho = ksys.eigenvalues.head(terms);
    if (!(rho.minCoeff() > 0.0)) {
        fail(ErrorCode::TruncationError, "kernel eigenvalues in the truncation must be positive");
    }
    const Matrix psi = ksys.eigenfunctions.leftCols(terms);
    Matrix ctilde = covariance_form(c_matrix, *grid, psi, psi);
    ctilde = 0.5 * (ctilde + ctilde.transpose()).eval();
    const Vector root_rho = rho.cwiseSqrt();

    Vector gamma;
    Matrix v;
    Eigen::LLT<Matrix> llt(ctilde);
    if (llt.info() == Eigen::Success) {
        const Matrix g = Matrix(llt.matrixL()).transpose() * root_rho.asDiagonal();
        Eigen::JacobiSVD<Matrix, Eigen::NoQRPreconditioner> svd(g, Eigen::ComputeFullV);
        gamma = svd.singularValues().cwiseAbs2();
        v = svd.matrixV();
    } else {
        const Matrix a = root_rho.asDiagonal() * ctilde * root_rho.asDiagonal();
        Eigen::SelfAdjointEigenSolver<Matrix> eig(a);
        gamma = eig.eigenvalues().reverse();
        v = eig.eigenvectors().rowwise().reverse();
    }
    if (!(gamma.minCoeff() > 0.0)) {
        fail(ErrorCode::TruncationError, "covariance form is singular on the truncated basis");
    }
    // ω_k = Σ_j √ρ_j v_jk ψ_j / √γ_k gives ⟨Cω_k,ω_k⟩ = 1 and J(ω_k) = 1/γ_k.
    Matrix coeffs = root_rho.asDiagonal() * v * gamma.cwiseSqrt().cwiseInverse().asDiagonal();
    Matrix omega = psi * coeffs;
    for (Eigen::Index k = 0; k < omega.cols(); ++k) {
        for (Eigen::Index p = 0; p < omega.rows(); ++p) {
            if (std::abs(omega(p, k)) > 1e-8) {
                if (omega(p, k) < 0.0) {
                    omega.col(k) *= -1.0;
                    coeffs.col(k) *= -1.0;
                }
                break;
            }
        }
    }
    Vector nu = gamma.array() / (1.0 + gamma.array());
    return {grid, std::move(gamma), std::move(nu), std::move(omega), std::move(coeffs), rho, psi};
}

/// f_k = ⟨Cf, ω_k⟩, equal to ν_k ⟨f, ω_k⟩_R.
inline Vector coefficients_in_omega(const DiagonalizedPair& pair, const Matrix& c_matrix,
                                    const Curve& f) {
    require_same_grid(pair.grid, f.grid());
    return covariance_form(c_matrix, *pair.grid, pair.omega, f.values());
}

/// ⟨Cf,f⟩ + J(f) with J evaluated through the truncated ψ-basis.
inline double r_norm_squared(const DiagonalizedPair& pair, const Matrix& c_matrix, const Curve& f) {
    require_same_grid(pair.grid, f.grid());
    const auto& w = pair.grid->weights();
    const Vector g = pair.psi.transpose() * (w.asDiagonal() * f.values());
    const double penalty = (g.array().square() / pair.rho.array()).sum();
    const double cf = covariance_form(c_matrix, *pair.grid, f.values(), f.values())(0, 0);
    return cf + penalty;
}

/// ‖f‖ₐ² = Σ (1 + γ_k^-a) f_k².
inline double norm_a(const DiagonalizedPair& pair, const Vector& coeffs, double a) {
    if (!(a >= 0.0 && a <= 1.0)) {
        fail(ErrorCode::InvalidArgument, "norm index a must lie in [0, 1]");
    }
    if (coeffs.size() > pair.size()) {
        fail(ErrorCode::InvalidArgument, "more coefficients than diagonalized terms");
    }
    const auto k = coeffs.size();
    return ((1.0 + pair.gamma.head(k).array().pow(-a)) * coeffs.array().square()).sum();
}

/**
 * ‖β̄_∞λ − β₀‖ₐ² for the population-level penalized fit, whose coordinates
 * shrink as a_k / (1 + λ/γ_k).
 */
inline double deterministic_error(const Vector& gamma, const Vector& coeffs, double lambda, double a) {
    if (gamma.size() != coeffs.size()) {
        fail(ErrorCode::InvalidArgument, "gamma and coefficient sequences differ in length");
    }
    if (!(lambda > 0.0)) {
        fail(ErrorCode::InvalidArgument, "lambda must be positive");
    }
    const auto shrink = lambda / (gamma.array() + lambda);
    return ((1.0 + gamma.array().pow(-a)) * shrink.square() * coeffs.array().square()).sum();
}

/// Least-squares slope of log(values[k-1]) on log(k) over k in [first, last].
inline LineFit log_log_decay(const Vector& values, int first, int last) {
    if (first < 1 || last > values.size() || last - first < 1) {
        fail(ErrorCode::InvalidArgument, "invalid decay window");
    }
    std::vector<double> x, y;
    for (int k = first; k <= last; ++k) {
        const double v = values[k - 1];
        if (!(v > 0.0)) {
            fail(ErrorCode::InvalidArgument, "decay window contains a nonpositive value");
        }
        x.push_back(std::log(static_cast<double>(k)));
        y.push_back(std::log(v));
    }
    return least_squares_line(x, y);
}

/// "sobolev:<m>", "brownian" or "ou" tabulated on the grid.
inline Matrix named_kernel_matrix(const std::string& name, const Grid& grid) {
    if (name == "brownian") return kernel_matrix(brownian_covariance, grid);
    if (name == "ou") return kernel_matrix(ou_covariance, grid);
    if (name.rfind("sobolev:", 0) == 0) {
        const auto tail = name.substr(8);
        if (tail.size() == 1 && tail[0] >= '1' && tail[0] <= '4') {
            return kernel_matrix(SobolevKernel(tail[0] - '0'), grid);
        }
    }
    if (name == "sobolev") return kernel_matrix(SobolevKernel(2), grid);
    fail(ErrorCode::InvalidArgument,
         "unknown kernel '" + name + "' (expected sobolev:<1-4>, brownian or ou)");
}

} // namespace flr
