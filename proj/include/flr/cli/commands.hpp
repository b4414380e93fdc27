#pragma once

#include <glob.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "flr/cli/config.hpp"
#include "flr/cli/io.hpp"
#include "flr/cli/model_json.hpp"
#include "flr/dataset_csv.hpp"
#include "flr/estimator.hpp"
#include "flr/operator_diag.hpp"
#include "flr/simulation.hpp"

namespace flr::cli {

namespace detail {

inline LambdaSearch search_from(const RunConfig& cfg) {
    LambdaSearch s;
    s.log10_lower = cfg.real("lambda_min");
    s.log10_upper = cfg.real("lambda_max");
    s.grid_size = static_cast<int>(cfg.integer("lambda_points"));
    s.refine = cfg.flag("refine");
    return s;
}

inline SimScenario scenario_base(const RunConfig& cfg) {
    SimScenario s;
    s.series_terms = static_cast<int>(cfg.integer("series_terms"));
    s.grid_points = static_cast<int>(cfg.integer("grid_points"));
    s.truth_decay = cfg.real("truth_decay");
    s.order = static_cast<int>(cfg.integer("order"));
    s.threads = static_cast<unsigned>(cfg.integer("threads"));
    s.seed = cfg.u64("seed");
    s.search = search_from(cfg);
    return s;
}

inline std::string results_csv(const ReplicateBatch& batch) {
    std::string out = "replicate,method,lambda,est_error,pred_error\n";
    for (const auto& r : batch.results) {
        out += std::to_string(r.replicate) + ',' + to_string(r.method) + ',' + format_double(r.lambda) + ',' +
               format_double(r.est_error) + ',' + format_double(r.pred_error) + '\n';
    }
    return out;
}

inline std::vector<std::string> expand_glob(const std::string& pattern) {
    glob_t g{};
    const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
    std::vector<std::string> out;
    if (rc == 0) {
        for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
    }
    globfree(&g);
    std::sort(out.begin(), out.end());
    return out;
}

/// Simulate output rows: replicate,method,lambda,est_error,pred_error.
inline std::vector<ReplicateResult> parse_results_csv(const std::string& text, const std::string& path) {
    std::vector<ReplicateResult> out;
    std::size_t row = 0;
    for (auto line : csv_detail::split(text, '\n')) {
        line = csv_detail::trim(line);
        if (line.empty()) continue;
        ++row;
        if (row == 1) {
            if (line != "replicate,method,lambda,est_error,pred_error") {
                fail(ErrorCode::ParseError, "'" + path + "' is not a simulate results file");
            }
            continue;
        }
        const auto cells = csv_detail::split(line);
        if (cells.size() != 5) {
            fail(ErrorCode::ParseError, "'" + path + "': expected 5 cells at row " + std::to_string(row));
        }
        ReplicateResult r{};
        r.replicate = static_cast<int>(csv_detail::parse_cell(cells[0], row, 1));
        r.method = parse_tuning_method(std::string(csv_detail::trim(cells[1])));
        r.lambda = csv_detail::parse_cell(cells[2], row, 3);
        r.est_error = csv_detail::parse_cell(cells[3], row, 4);
        r.pred_error = csv_detail::parse_cell(cells[4], row, 5);
        out.push_back(r);
    }
    return out;
}

inline std::string manifest_value(const json& manifest, const std::string& key, const std::string& path) {
    if (!manifest.contains("config") || !manifest["config"].contains(key)) {
        fail(ErrorCode::ParseError, "manifest for '" + path + "' lacks config key '" + key + "'");
    }
    return manifest["config"][key]["value"].get<std::string>();
}

inline const std::vector<TuningMethod>& all_methods() {
    static const std::vector<TuningMethod> m{TuningMethod::Gcv, TuningMethod::OraclePred, TuningMethod::OracleEst};
    return m;
}

} // namespace detail

inline void run_fit(const RunConfig& cfg, std::ostream& log) {
    const auto& input = cfg.str("input");
    const auto text = read_text_file(input);
    const auto data = parse_dataset_csv(text);
    FLRConfig fc;
    fc.order = static_cast<int>(cfg.integer("order"));
    if (cfg.str("lambda") != "auto") fc.lambda = cfg.real("lambda");
    fc.search = detail::search_from(cfg);
    const auto fitted = fit(data, fc);

    Manifest manifest(cfg);
    manifest.add_input("input", input, text);
    const json training = {{"dataset", input},
                             {"dataset_sha256", sha256_hex(text)},
                             {"config", manifest.to_json()["config"]}};
    const auto& model_path = cfg.str("model");
    manifest.write_output("model", model_path, model_to_json(fitted, training).dump(1) + "\n");
    manifest.write(manifest_path(cfg, model_path));
    log << "fit: n=" << data.size() << " lambda=" << format_double(fitted.lambda())
        << " hat_trace=" << format_double(fitted.hat_trace()) << " gcv=" << format_double(fitted.gcv_value())
        << '\n';
}

inline void run_predict(const RunConfig& cfg, std::ostream& log) {
    const auto& model_path = cfg.str("model");
    const auto model_text = read_text_file(model_path);
    json j;
    try {
        j = json::parse(model_text);
    } catch (const json::exception& e) {
        fail(ErrorCode::ParseError, "model '" + model_path + "' is not valid JSON: " + e.what());
    }
    const auto model = model_from_json(j);
    const auto& input = cfg.str("input");
    const auto text = read_text_file(input);
    const auto curves = parse_dataset_csv(text, true);
    if (!same_grid(curves.grid(), model.grid())) {
        fail(ErrorCode::GridMismatch, "input grid differs from the model grid");
    }
    std::string out = "index,prediction\n";
    for (Eigen::Index i = 0; i < curves.size(); ++i) {
        out += std::to_string(i + 1) + ',' + format_double(predict(model, curves.curve(i))) + '\n';
    }
    Manifest manifest(cfg);
    manifest.add_input("model", model_path, model_text);
    manifest.add_input("input", input, text);
    const auto& output = cfg.str("output");
    manifest.write_output("predictions", output, out);
    manifest.write(manifest_path(cfg, output));
    log << "predict: " << curves.size() << " predictions\n";
}

inline void run_simulate(const RunConfig& cfg, std::ostream& log) {
    auto s = detail::scenario_base(cfg);
    s.spacing = parse_spacing(cfg.str("spacing"));
    s.nu = cfg.real("nu");
    s.sigma = cfg.real("sigma");
    s.n = static_cast<int>(cfg.integer("n"));
    s.replicates = static_cast<int>(cfg.integer("reps"));
    const auto batch = run_replicates(s);
    if (batch.results.empty()) fail(ErrorCode::SelectionFailure, "every replicate failed");
    Manifest manifest(cfg);
    manifest.add_seed("seed", s.seed);
    const auto& out = cfg.str("out");
    manifest.write_output("results", out, detail::results_csv(batch));
    auto doc = manifest.to_json();
    doc["failures"] = batch.failures;
    write_atomic(manifest_path(cfg, out), doc.dump(2) + "\n");
    log << "simulate: " << (s.replicates - batch.failures) << " replicates";
    if (batch.failures) log << ", " << batch.failures << " failed";
    log << '\n';
}

/**
 * Groups every matched results file by (nu, sigma) using the manifest written
 * next to it, then fits log mean error against log n per method and metric.
 */
inline void run_rates(const RunConfig& cfg, std::ostream& log) {
    const auto files = detail::expand_glob(cfg.str("in"));
    if (files.empty()) throw ConfigError("in", "pattern '" + cfg.str("in") + "' matches no files");
    using Key = std::tuple<double, double, std::string, std::string>; // nu, sigma, method, metric
    std::map<Key, std::map<int, std::vector<double>>> groups;
    std::map<std::pair<double, double>, std::string> nu_sigma_text;
    std::string design;
    Manifest manifest(cfg);
    for (const auto& file : files) {
        const auto text = read_text_file(file);
        const auto mpath = file + ".manifest.json";
        const auto mtext = read_text_file(mpath);
        json m;
        try {
            m = json::parse(mtext);
        } catch (const json::exception& e) {
            fail(ErrorCode::ParseError, "manifest '" + mpath + "' is not valid JSON");
        }
        manifest.add_input("results", file, text);
        const auto nu_text = detail::manifest_value(m, "nu", file);
        const auto sigma_text = detail::manifest_value(m, "sigma", file);
        const double nu = *detail::to_real(nu_text);
        const double sigma = *detail::to_real(sigma_text);
        const int n = std::stoi(detail::manifest_value(m, "n", file));
        std::string this_design;
        for (const char* key : {"spacing", "truth_decay", "order", "grid_points", "series_terms"}) {
            this_design += std::string(key) + "=" + detail::manifest_value(m, key, file) + " ";
        }
        if (design.empty()) design = this_design;
        if (this_design != design) {
            fail(ErrorCode::InvalidArgument, "'" + file + "' uses a different design (" + this_design +
                                                 ") than earlier files (" + design + ")");
        }
        nu_sigma_text[{nu, sigma}] = nu_text + "," + sigma_text;
        for (const auto& r : detail::parse_results_csv(text, file)) {
            for (const char* metric : {"pred", "est"}) {
                auto& bucket = groups[{nu, sigma, to_string(r.method), metric}][n];
                bucket.push_back(std::string(metric) == "pred" ? r.pred_error : r.est_error);
            }
        }
    }
    std::string out = "nu,sigma,method,metric,slope,stderr\n";
    for (const auto& [key, by_n] : groups) {
        const auto& [nu, sigma, method, metric] = key;
        const auto fit = fit_rate(by_n, static_cast<std::size_t>(cfg.integer("min_replicates")));
        out += nu_sigma_text[{nu, sigma}] + ',' + method + ',' + metric + ',' + format_double(fit.slope) + ',' +
               format_double(fit.slope_stderr) + '\n';
    }
    const auto& path = cfg.str("out");
    manifest.write_output("rates", path, out);
    manifest.write(manifest_path(cfg, path));
    log << "rates: " << files.size() << " files, " << groups.size() << " slopes\n";
}

/**
 * Figure 1: prediction error, well spaced, sigma 0.5 (GCV and oracle).
 * Figure 2: estimation error, well spaced, sigma 0.5 (GCV and oracle).
 * Figure 3: both errors with GCV, well spaced, sigma 1.
 * Figure 4: both errors with GCV, closely spaced, sigma 0.5 and 1.
 */
inline void run_figures(const RunConfig& cfg, std::ostream& log) {
    const auto dir = std::filesystem::path(cfg.str("out"));
    std::filesystem::create_directories(dir);
    const auto base = detail::scenario_base(cfg);
    base.validate();
    base.search.validate();
    const auto sizes = cfg.int_list("sizes");
    const auto nus = cfg.real_list("nus");
    const auto nu_labels = detail::split_list(cfg.str("nus"));
    const int reps = static_cast<int>(cfg.integer("reps"));

    struct Cell {
        double pred[3];
        double est[3];
    };
    std::map<std::tuple<Spacing, double, std::size_t, int>, Cell> cells; // spacing, sigma, nu index, n
    const auto run_cell = [&](Spacing spacing, double sigma, std::size_t nu_index, int n) {
        const auto key = std::make_tuple(spacing, sigma, nu_index, n);
        if (cells.count(key)) return cells[key];
        auto s = base;
        s.spacing = spacing;
        s.sigma = sigma;
        s.nu = nus[nu_index];
        s.n = n;
        s.replicates = reps;
        const auto batch = run_replicates(s);
        Cell c{};
        for (std::size_t m = 0; m < 3; ++m) {
            c.pred[m] = mean_of(batch, detail::all_methods()[m], true);
            c.est[m] = mean_of(batch, detail::all_methods()[m], false);
        }
        log << "figures: " << to_string(spacing) << " sigma=" << format_double(sigma) << " nu=" << nu_labels[nu_index]
            << " n=" << n << " done\n";
        cells[key] = c;
        return c;
    };

    struct Series {
        Spacing spacing;
        double sigma;
        std::size_t method;
        bool prediction;
    };
    const std::vector<std::vector<Series>> figures = {
        {{Spacing::Well, 0.5, 0, true}, {Spacing::Well, 0.5, 1, true}},
        {{Spacing::Well, 0.5, 0, false}, {Spacing::Well, 0.5, 2, false}},
        {{Spacing::Well, 1.0, 0, true}, {Spacing::Well, 1.0, 0, false}},
        {{Spacing::Close, 0.5, 0, true}, {Spacing::Close, 0.5, 0, false},
         {Spacing::Close, 1.0, 0, true}, {Spacing::Close, 1.0, 0, false}},
    };
    Manifest manifest(cfg);
    manifest.add_seed("seed", base.seed);
    for (std::size_t f = 0; f < figures.size(); ++f) {
        std::string out = "log_n,log_mean_error,series\n";
        for (const auto& series : figures[f]) {
            for (std::size_t v = 0; v < nus.size(); ++v) {
                const std::string label = to_string(detail::all_methods()[series.method]) + " " +
                                          (series.prediction ? "pred" : "est") + " " + to_string(series.spacing) +
                                          " sigma=" + format_double(series.sigma) + " nu=" + nu_labels[v];
                for (int n : sizes) {
                    const auto c = run_cell(series.spacing, series.sigma, v, n);
                    const double err = series.prediction ? c.pred[series.method] : c.est[series.method];
                    out += format_double(std::log(static_cast<double>(n))) + ',' + format_double(std::log(err)) +
                           ',' + label + '\n';
                }
            }
        }
        const auto path = (dir / ("figure" + std::to_string(f + 1) + ".csv")).string();
        manifest.write_output("figure" + std::to_string(f + 1), path, out);
    }
    const auto& explicit_manifest = cfg.str("manifest");
    manifest.write(explicit_manifest.empty() ? (dir / "manifest.json").string() : explicit_manifest);
}

inline void run_eigen(const RunConfig& cfg, std::ostream& log) {
    const auto grid = make_uniform_grid(cfg.integer("grid"));
    const auto sys = mercer(named_kernel_matrix(cfg.str("kernel"), *grid), grid, cfg.integer("terms"));
    std::string out = "k,eigenvalue\n";
    for (Eigen::Index k = 0; k < sys.size(); ++k) {
        out += std::to_string(k + 1) + ',' + format_double(sys.eigenvalues[k]) + '\n';
    }
    Manifest manifest(cfg);
    const auto& path = cfg.str("output");
    manifest.write_output("eigenvalues", path, out);
    manifest.write(manifest_path(cfg, path));
    log << "eigen: " << sys.size() << " eigenvalues\n";
}

inline void run_diag(const RunConfig& cfg, std::ostream& log) {
    const auto grid = make_uniform_grid(cfg.integer("grid"));
    const auto terms = cfg.integer("terms");
    const Matrix k = named_kernel_matrix(cfg.str("k"), *grid);
    const Matrix c = named_kernel_matrix(cfg.str("c"), *grid);
    const auto ksys = mercer(k, grid, terms);
    const auto csys = mercer(c, grid, terms);
    const auto pair = simultaneous_diagonalize(ksys, c, grid, terms);
    std::string out = "k,gamma,rho,mu,ratio\n";
    for (Eigen::Index j = 0; j < pair.size(); ++j) {
        const double rho = ksys.eigenvalues[j];
        const double mu = csys.eigenvalues[j];
        const double ratio = (rho > 0.0 && mu > 0.0) ? pair.gamma[j] / (rho * mu) : std::nan("");
        out += std::to_string(j + 1) + ',' + format_double(pair.gamma[j]) + ',' + format_double(rho) + ',' +
               format_double(mu) + ',' + (std::isnan(ratio) ? std::string("nan") : format_double(ratio)) + '\n';
    }
    Manifest manifest(cfg);
    const auto& path = cfg.str("output");
    manifest.write_output("gamma", path, out);
    manifest.write(manifest_path(cfg, path));
    log << "diag: " << pair.size() << " terms\n";
}

inline void run_command(const RunConfig& cfg, std::ostream& log) {
    const auto& c = cfg.command();
    if (c == "fit") return run_fit(cfg, log);
    if (c == "predict") return run_predict(cfg, log);
    if (c == "simulate") return run_simulate(cfg, log);
    if (c == "rates") return run_rates(cfg, log);
    if (c == "figures") return run_figures(cfg, log);
    if (c == "eigen") return run_eigen(cfg, log);
    if (c == "diag") return run_diag(cfg, log);
    fail(ErrorCode::ConfigError, "unknown command '" + c + "'");
}

/// 0 success, 1 domain error, 2 configuration error.
inline int exit_code_for(const std::exception& e) {
    if (const auto* err = dynamic_cast<const Error*>(&e)) {
        return err->code() == ErrorCode::ConfigError ? 2 : 1;
    }
    return 1;
}

} // namespace flr::cli
