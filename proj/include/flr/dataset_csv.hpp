#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "flr/error.hpp"
#include "flr/grid.hpp"

namespace flr {

namespace csv_detail {

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            cells.push_back(line.substr(start));
            return cells;
        }
        cells.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::string where(std::size_t row, std::size_t col) {
    return "row " + std::to_string(row) + ", column " + std::to_string(col);
}

inline double parse_cell(std::string_view cell, std::size_t row, std::size_t col) {
    cell = trim(cell);
    if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(value)) {
        fail(ErrorCode::ParseError,
             "non-numeric cell '" + std::string(cell) + "' at " + where(row, col));
    }
    return value;
}

} // namespace csv_detail

/// Shortest decimal text that reads back to the same double.
inline std::string format_double(double value) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

/**
 * Builds a grid from header points. A header that reproduces the uniform grid
 * bit-for-bit gets the uniform trapezoid weights; anything else gets the
 * general trapezoid rule.
 */
inline GridPtr grid_from_points(const Vector& points) {
    const auto p = points.size();
    auto uniform = make_uniform_grid(p);
    if (uniform->points() == points) {
        return uniform;
    }
    Vector weights(p);
    weights[0] = 0.5 * (points[1] - points[0]);
    weights[p - 1] = 0.5 * (points[p - 1] - points[p - 2]);
    for (Eigen::Index i = 1; i + 1 < p; ++i) {
        weights[i] = 0.5 * (points[i + 1] - points[i - 1]);
    }
    return std::make_shared<const Grid>(points, std::move(weights));
}

/// Parses `t,<t_1>,...,<t_P>` followed by rows `y_i,<x_i(t_1)>,...`. With
/// optional responses an empty first cell reads as 0.
inline Dataset parse_dataset_csv(std::string_view text, bool responses_optional = false) {
    using namespace csv_detail;
    std::vector<std::string_view> lines;
    for (auto cell : split(text, '\n')) {
        if (!trim(cell).empty()) lines.push_back(cell);
    }
    if (lines.empty()) {
        fail(ErrorCode::ParseError, "empty file: missing grid header at row 1");
    }
    const auto header = split(trim(lines[0]));
    if (trim(header[0]) != "t") {
        fail(ErrorCode::ParseError, "header must start with 't' at " + where(1, 1));
    }
    if (header.size() < 3) {
        fail(ErrorCode::ParseError, "header needs at least 2 grid points at row 1");
    }
    const auto p = static_cast<Eigen::Index>(header.size() - 1);
    Vector points(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        points[j] = parse_cell(header[j + 1], 1, j + 2);
        if (j > 0 && !(points[j] > points[j - 1])) {
            fail(ErrorCode::ParseError, "grid header not strictly increasing at " + where(1, j + 2));
        }
    }
    if (points[0] != 0.0 || points[p - 1] != 1.0) {
        fail(ErrorCode::ParseError, "grid header must span [0, 1] at row 1");
    }
    const auto n = static_cast<Eigen::Index>(lines.size() - 1);
    if (n < 1) {
        fail(ErrorCode::ParseError, "no curve rows after the header");
    }
    Matrix curves(n, p);
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto row = static_cast<std::size_t>(i) + 2;
        const auto cells = split(trim(lines[static_cast<std::size_t>(i) + 1]));
        if (static_cast<Eigen::Index>(cells.size()) != p + 1) {
            fail(ErrorCode::ParseError, "ragged row: expected " + std::to_string(p + 1) +
                                            " cells, found " + std::to_string(cells.size()) +
                                            " at row " + std::to_string(row));
        }
        y[i] = (responses_optional && trim(cells[0]).empty()) ? 0.0 : parse_cell(cells[0], row, 1);
        for (Eigen::Index j = 0; j < p; ++j) {
            curves(i, j) = parse_cell(cells[static_cast<std::size_t>(j) + 1], row, j + 2);
        }
    }
    return Dataset(grid_from_points(points), std::move(curves), std::move(y));
}

inline std::string format_dataset_csv(const Dataset& d) {
    std::string out = "t";
    for (Eigen::Index j = 0; j < d.grid()->size(); ++j) {
        out += ',';
        out += format_double(d.grid()->points()[j]);
    }
    out += '\n';
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        out += format_double(d.responses()[i]);
        for (Eigen::Index j = 0; j < d.grid()->size(); ++j) {
            out += ',';
            out += format_double(d.curves()(i, j));
        }
        out += '\n';
    }
    return out;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorCode::IoError, "cannot open '" + path + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline Dataset load_dataset_csv(const std::string& path) {
    return parse_dataset_csv(read_text_file(path));
}

inline void save_dataset_csv(const Dataset& d, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        fail(ErrorCode::IoError, "cannot write '" + path + "'");
    }
    out << format_dataset_csv(d);
}

} // namespace flr
