#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "flr/error.hpp"

namespace flr {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/**
 * Quadrature grid on [0, 1].
 *
 * Every integral in the library is a weighted sum over these points, so Σ, T,
 * the error metrics and the operator norms all share one discretization.
 */
class Grid {
public:
    Grid(Vector points, Vector weights) : points_(std::move(points)), weights_(std::move(weights)) {
        const auto p = points_.size();
        if (p < 2 || weights_.size() != p) {
            fail(ErrorCode::InvalidArgument, "grid needs >= 2 points and one weight per point");
        }
        if (points_[0] != 0.0 || points_[p - 1] != 1.0) {
            fail(ErrorCode::InvalidArgument, "grid must start at 0 and end at 1");
        }
        for (Eigen::Index i = 1; i < p; ++i) {
            if (!(points_[i] > points_[i - 1])) {
                fail(ErrorCode::InvalidArgument, "grid points must be strictly increasing");
            }
        }
        if ((weights_.array() <= 0.0).any()) {
            fail(ErrorCode::InvalidArgument, "quadrature weights must be positive");
        }
        if (std::abs(weights_.sum() - 1.0) > 1e-12) {
            fail(ErrorCode::InvalidArgument, "quadrature weights must sum to 1");
        }
    }

    const Vector& points() const noexcept { return points_; }
    const Vector& weights() const noexcept { return weights_; }
    Eigen::Index size() const noexcept { return points_.size(); }

    bool operator==(const Grid& other) const {
        return points_.size() == other.points_.size() && points_ == other.points_ &&
               weights_ == other.weights_;
    }

private:
    Vector points_;
    Vector weights_;
};

using GridPtr = std::shared_ptr<const Grid>;

/// Equally spaced points with composite trapezoid weights.
inline GridPtr make_uniform_grid(Eigen::Index num_points) {
    if (num_points < 2) {
        fail(ErrorCode::InvalidArgument,
             "uniform grid needs at least 2 points, got " + std::to_string(num_points));
    }
    const double h = 1.0 / static_cast<double>(num_points - 1);
    Vector points(num_points);
    Vector weights = Vector::Constant(num_points, h);
    for (Eigen::Index i = 0; i < num_points; ++i) {
        points[i] = static_cast<double>(i) * h;
    }
    points[num_points - 1] = 1.0;
    weights[0] = 0.5 * h;
    weights[num_points - 1] = 0.5 * h;
    return std::make_shared<const Grid>(std::move(points), std::move(weights));
}

inline bool same_grid(const GridPtr& a, const GridPtr& b) {
    return a == b || (a && b && *a == *b);
}

inline void require_same_grid(const GridPtr& a, const GridPtr& b) {
    if (!same_grid(a, b)) {
        fail(ErrorCode::GridMismatch, "curves are sampled on different grids");
    }
}

/// A real function sampled on a Grid.
class Curve {
public:
    Curve(GridPtr grid, Vector values) : grid_(std::move(grid)), values_(std::move(values)) {
        if (!grid_) {
            fail(ErrorCode::InvalidArgument, "curve needs a grid");
        }
        if (values_.size() != grid_->size()) {
            fail(ErrorCode::InvalidArgument, "curve length " + std::to_string(values_.size()) +
                                                 " does not match grid length " +
                                                 std::to_string(grid_->size()));
        }
        if (!values_.allFinite()) {
            fail(ErrorCode::InvalidArgument, "curve values must be finite");
        }
    }

    template <typename F>
    static Curve sample(GridPtr grid, F&& f) {
        Vector v(grid->size());
        for (Eigen::Index p = 0; p < v.size(); ++p) {
            v[p] = f(grid->points()[p]);
        }
        return Curve(std::move(grid), std::move(v));
    }

    const GridPtr& grid() const noexcept { return grid_; }
    const Vector& values() const noexcept { return values_; }
    Eigen::Index size() const noexcept { return values_.size(); }
    double operator[](Eigen::Index p) const { return values_[p]; }

private:
    GridPtr grid_;
    Vector values_;
};

inline double inner_product(const Curve& f, const Curve& g) {
    require_same_grid(f.grid(), g.grid());
    return (f.grid()->weights().array() * f.values().array() * g.values().array()).sum();
}

/**
 * Training sample (x_i, y_i), i = 1..n, with all predictor curves on one grid.
 * Curves are stored row-wise: row i holds x_i at every grid point.
 */
class Dataset {
public:
    Dataset(GridPtr grid, Matrix curves, Vector responses)
        : grid_(std::move(grid)), curves_(std::move(curves)), responses_(std::move(responses)) {
        if (!grid_) {
            fail(ErrorCode::InvalidArgument, "dataset needs a grid");
        }
        if (curves_.rows() < 1) {
            fail(ErrorCode::InvalidArgument, "dataset needs at least one observation");
        }
        if (curves_.cols() != grid_->size()) {
            fail(ErrorCode::InvalidArgument, "curve length does not match grid length");
        }
        if (responses_.size() != curves_.rows()) {
            fail(ErrorCode::InvalidArgument, "one response per curve is required");
        }
        if (!curves_.allFinite() || !responses_.allFinite()) {
            fail(ErrorCode::InvalidArgument, "dataset values must be finite");
        }
    }

    const GridPtr& grid() const noexcept { return grid_; }
    const Matrix& curves() const noexcept { return curves_; }
    const Vector& responses() const noexcept { return responses_; }
    Eigen::Index size() const noexcept { return curves_.rows(); }

    Curve curve(Eigen::Index i) const { return Curve(grid_, curves_.row(i).transpose()); }

private:
    GridPtr grid_;
    Matrix curves_;
    Vector responses_;
};

struct CenteredDataset {
    Curve mean_curve;
    double mean_response;
    Dataset centered;
};

// Shifted mean: exact when all observations coincide.
inline CenteredDataset center_dataset(const Dataset& d) {
    const Vector first = d.curves().row(0).transpose();
    const Vector mean_curve =
        first + (d.curves().rowwise() - first.transpose()).colwise().mean().transpose();
    const double y0 = d.responses()[0];
    const double mean_response = y0 + (d.responses().array() - y0).mean();
    Matrix centered = d.curves().rowwise() - mean_curve.transpose();
    Vector y = d.responses().array() - mean_response;
    return {Curve(d.grid(), mean_curve), mean_response,
            Dataset(d.grid(), std::move(centered), std::move(y))};
}

} // namespace flr
