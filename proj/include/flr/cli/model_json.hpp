#pragma once

#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "flr/dataset_csv.hpp"
#include "flr/estimator.hpp"

namespace flr::cli {

using ojson = nlohmann::ordered_json;

namespace detail {

inline ojson vector_json(const Vector& v) {
    ojson out = ojson::array();
    for (double x : v) out.push_back(x);
    return out;
}

inline Vector json_vector(const ojson& j, const char* field) {
    if (!j.is_array()) fail(ErrorCode::ParseError, std::string("model field '") + field + "' must be an array");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) {
            fail(ErrorCode::ParseError, std::string("model field '") + field + "' holds a non-number");
        }
        v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    }
    return v;
}

inline const ojson& field(const ojson& j, const char* name) {
    if (!j.contains(name)) fail(ErrorCode::ParseError, std::string("model is missing field '") + name + "'");
    return j.at(name);
}

} // namespace detail

/// Serializable fitted model: everything needed to rebuild a FittedFLR.
inline ojson model_to_json(const FittedFLR& fit, const ojson& training) {
    const auto& curves = fit.centered_curves();
    ojson rows = ojson::array();
    for (Eigen::Index i = 0; i < curves.rows(); ++i) rows.push_back(detail::vector_json(curves.row(i).transpose()));
    const double gcv = fit.gcv_value();
    return {{"format", "flr-model/1"},
            {"order", fit.kernel().order()},
            {"lambda", fit.lambda()},
            {"alpha_hat", fit.alpha_hat()},
            {"mean_response", fit.mean_response()},
            {"hat_trace", fit.hat_trace()},
            {"gcv", std::isfinite(gcv) ? ojson(gcv) : ojson(nullptr)},
            {"grid", detail::vector_json(fit.grid()->points())},
            {"mean_curve", detail::vector_json(fit.mean_curve().values())},
            {"d", detail::vector_json(fit.d())},
            {"c", detail::vector_json(fit.c())},
            {"beta", detail::vector_json(fit.beta_values())},
            {"centered_curves", std::move(rows)},
            {"training", training}};
}

/**
 * Rebuilds the model and checks it against the stored derived values: β̂ on
 * the grid and α̂ must reproduce to 1e-9 relative.
 */
inline FittedFLR model_from_json(const ojson& j) {
    if (!j.is_object() || detail::field(j, "format") != "flr-model/1") {
        fail(ErrorCode::ParseError, "not an flr model file");
    }
    const int order = detail::field(j, "order").get<int>();
    const Vector points = detail::json_vector(detail::field(j, "grid"), "grid");
    const auto grid = grid_from_points(points);
    const auto& rows = detail::field(j, "centered_curves");
    if (!rows.is_array() || rows.empty()) fail(ErrorCode::ParseError, "model has no centered curves");
    Matrix curves(static_cast<Eigen::Index>(rows.size()), grid->size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Vector row = detail::json_vector(rows[i], "centered_curves");
        if (row.size() != grid->size()) fail(ErrorCode::ParseError, "centered curve length does not match grid");
        curves.row(static_cast<Eigen::Index>(i)) = row.transpose();
    }
    const Vector mean = detail::json_vector(detail::field(j, "mean_curve"), "mean_curve");
    if (mean.size() != grid->size()) fail(ErrorCode::ParseError, "mean curve length does not match grid");
    const auto& gcv_field = detail::field(j, "gcv");
    const double gcv = gcv_field.is_null() ? std::numeric_limits<double>::infinity() : gcv_field.get<double>();
    FittedFLR fit(make_kernel_on_grid(order, grid), Curve(grid, mean),
                  detail::field(j, "mean_response").get<double>(), std::move(curves),
                  detail::json_vector(detail::field(j, "d"), "d"), detail::json_vector(detail::field(j, "c"), "c"),
                  detail::field(j, "lambda").get<double>(), detail::field(j, "hat_trace").get<double>(), gcv);
    const Vector beta = detail::json_vector(detail::field(j, "beta"), "beta");
    const double scale = 1.0 + beta.cwiseAbs().maxCoeff();
    if (beta.size() != grid->size() || (beta - fit.beta_values()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
        fail(ErrorCode::ParseError, "stored beta does not match the model coefficients");
    }
    const double alpha = detail::field(j, "alpha_hat").get<double>();
    if (std::abs(alpha - fit.alpha_hat()) > 1e-9 * (1.0 + std::abs(alpha))) {
        fail(ErrorCode::ParseError, "stored alpha_hat does not match the model coefficients");
    }
    return fit;
}

} // namespace flr::cli
