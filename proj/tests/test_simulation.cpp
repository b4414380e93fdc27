#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "flr/simulation.hpp"

using namespace flr;

namespace {

SimScenario small_scenario() {
    SimScenario s;
    s.n = 60;
    s.replicates = 6;
    s.seed = 7;
    s.threads = 1;
    return s;
}

const TruthModel& default_truth() {
    static const TruthModel truth(SimScenario{}, make_uniform_grid(201));
    return truth;
}

Curve basis_curve(const TruthModel& truth, int k) { return Curve(truth.grid, truth.basis.col(k - 1)); }

} // namespace

TEST(CosineBasis, Values) {
    EXPECT_EQ(cosine_basis(1, 0.37), 1.0);
    EXPECT_DOUBLE_EQ(cosine_basis(2, 0.0), std::sqrt(2.0));
    EXPECT_NEAR(cosine_basis(3, 0.25), 0.0, 1e-15);
    EXPECT_THROW(cosine_basis(0, 0.5), Error);
}

TEST(CosineBasis, QuadratureOrthonormal) {
    const auto grid = make_uniform_grid(201);
    for (int j = 1; j <= 10; ++j) {
        const auto fj = Curve::sample(grid, [j](double t) { return cosine_basis(j, t); });
        for (int k = 1; k <= 10; ++k) {
            const auto fk = Curve::sample(grid, [k](double t) { return cosine_basis(k, t); });
            EXPECT_NEAR(inner_product(fj, fk), j == k ? 1.0 : 0.0, 1e-4) << j << "," << k;
        }
    }
}

TEST(ZetaSequence, PaperValues) {
    EXPECT_EQ(zeta_sequence(Spacing::Close, 2.0, 10)[0], 1.0);
    EXPECT_NEAR(zeta_sequence(Spacing::Close, 2.0, 10)[4], 0.04, 1e-15);
    EXPECT_NEAR(zeta_sequence(Spacing::Well, 4.0, 10)[1], -0.25, 1e-15);
    EXPECT_NEAR(zeta_sequence(Spacing::Close, 2.0, 10)[1], -0.2 * (1 - 0.0002), 1e-15);
    EXPECT_NEAR(zeta_sequence(Spacing::Close, 2.0, 10)[6], 0.2 * (0.2 - 0.0002), 1e-15);
    EXPECT_THROW(zeta_sequence(Spacing::Well, 2.0, 0), Error);
}

TEST(ZetaSequence, ParseSpacing) {
    EXPECT_EQ(parse_spacing("well"), Spacing::Well);
    EXPECT_EQ(parse_spacing("close"), Spacing::Close);
    EXPECT_THROW(parse_spacing("wide"), Error);
}

TEST(TruthModel, Coefficients) {
    const auto& truth = default_truth();
    EXPECT_EQ(truth.b[0], 4.0);
    EXPECT_EQ(truth.b[1], -1.0);
    for (int k = 1; k < 50; ++k) EXPECT_LT(std::abs(truth.b[k]), std::abs(truth.b[k - 1]));
}

TEST(TruthModel, BetaAtZeroIsPartialSum) {
    const auto& truth = default_truth();
    double sum = 4.0;
    for (int k = 2; k <= 50; ++k) {
        sum += 4.0 * ((k % 2 == 1) ? 1.0 : -1.0) * std::pow(k, -2.0) * std::sqrt(2.0);
    }
    EXPECT_NEAR(beta0_on_grid(truth)[0], sum, 1e-12);
}

TEST(TruthModel, ReadOffSecondCoefficient) {
    const auto& truth = default_truth();
    EXPECT_NEAR(inner_product(beta0_on_grid(truth), basis_curve(truth, 2)), -1.0, 2e-3);
}

TEST(SimulateDataset, UniformScoresHaveUnitVariance) {
    auto engine = replicate_engine(3, 0);
    std::uniform_real_distribution<double> score(-std::sqrt(3.0), std::sqrt(3.0));
    const int draws = 100000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < draws; ++i) {
        const double z = score(engine);
        sum += z;
        sq += z * z;
    }
    const double mean = sum / draws;
    const double var = (sq - draws * mean * mean) / (draws - 1);
    EXPECT_GE(var, 0.98);
    EXPECT_LE(var, 1.02);
}

TEST(SimulateDataset, FirstScoreVariance) {
    SimScenario s;
    s.n = 10000;
    const auto& truth = default_truth();
    const auto d = simulate_dataset(s, truth, 0);
    const auto phi1 = basis_curve(truth, 1);
    double sum = 0.0, sq = 0.0;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        const double v = inner_product(d.curve(i), phi1);
        sum += v;
        sq += v * v;
    }
    const double n = static_cast<double>(d.size());
    const double var = (sq - sum * sum / n) / (n - 1);
    EXPECT_NEAR(var / std::pow(truth.zeta[0], 2), 1.0, 0.05);
}

TEST(SimulateDataset, NoiselessResponsesMatchQuadrature) {
    SimScenario s;
    s.sigma = 0.0;
    s.n = 50;
    const auto& truth = default_truth();
    const auto d = simulate_dataset(s, truth, 4);
    const auto beta0 = beta0_on_grid(truth);
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        EXPECT_NEAR(d.responses()[i], inner_product(d.curve(i), beta0), 5e-3) << i;
    }
}

TEST(SimulateDataset, DeterministicPerReplicate) {
    const auto s = small_scenario();
    const auto& truth = default_truth();
    const auto a = simulate_dataset(s, truth, 3);
    const auto b = simulate_dataset(s, truth, 3);
    const auto c = simulate_dataset(s, truth, 4);
    EXPECT_EQ(a.curves(), b.curves());
    EXPECT_EQ(a.responses(), b.responses());
    EXPECT_NE(a.responses(), c.responses());
}

TEST(Errors, EstimationError) {
    const auto& truth = default_truth();
    const auto beta0 = beta0_on_grid(truth);
    EXPECT_EQ(estimation_error(beta0, beta0), 0.0);
    EXPECT_NEAR(estimation_error(Curve(truth.grid, beta0.values().array() + 1.0), beta0), 1.0, 1e-10);
    EXPECT_NEAR(estimation_error(Curve(truth.grid, beta0.values() + truth.basis.col(1)), beta0), 1.0, 2e-3);
    EXPECT_THROW(estimation_error(Curve(make_uniform_grid(11), Vector::Zero(11)), beta0), Error);
}

TEST(Errors, PredictionError) {
    const auto& truth = default_truth();
    const auto beta0 = beta0_on_grid(truth);
    EXPECT_LT(prediction_error(beta0, truth), 1e-5);
}

TEST(Errors, PredictionErrorSingleCoordinateExact) {
    const auto& truth = default_truth();
    // β̂ − β₀ = φ_2 with β₀'s own grid coefficients: only coordinate 2 moves.
    const Vector proj = truth.basis.transpose() * (truth.grid->weights().asDiagonal() * beta0_on_grid(truth).values());
    TruthModel shifted = truth;
    shifted.b = proj;
    const Curve beta_hat(truth.grid, beta0_on_grid(truth).values() + truth.basis.col(1));
    const Vector dproj = truth.basis.transpose() * (truth.grid->weights().asDiagonal() * truth.basis.col(1));
    const double expected = (truth.zeta.array().square() * dproj.array().square()).sum();
    EXPECT_NEAR(prediction_error(beta_hat, shifted) / expected, 1.0, 1e-12);
    EXPECT_NEAR(expected / std::pow(truth.zeta[1], 2), 1.0, 1e-4);
}

TEST(Errors, PredictionErrorMatchesDoubleQuadrature) {
    const auto& truth = default_truth();
    const auto& w = truth.grid->weights();
    const Matrix c = truth.basis * truth.zeta.array().square().matrix().asDiagonal() * truth.basis.transpose();
    std::mt19937_64 rng(3);
    std::normal_distribution<double> z;
    for (int trial = 0; trial < 5; ++trial) {
        Vector coeffs(8);
        for (auto& v : coeffs) v = z(rng);
        const Vector diff = truth.basis.leftCols(8) * coeffs;
        const Curve beta_hat(truth.grid, beta0_on_grid(truth).values() + diff);
        const Vector wd = w.asDiagonal() * diff;
        const double oracle = wd.dot(c * wd);
        EXPECT_NEAR(prediction_error(beta_hat, truth) / oracle, 1.0, 1e-3) << trial;
    }
}

TEST(RunReplicates, DeterministicAcrossRunsAndThreads) {
    auto s = small_scenario();
    s.replicates = 1;
    const auto a = run_replicates(s);
    const auto b = run_replicates(s);
    ASSERT_EQ(a.results.size(), 3u);
    for (std::size_t i = 0; i < a.results.size(); ++i) {
        EXPECT_EQ(a.results[i].lambda, b.results[i].lambda);
        EXPECT_EQ(a.results[i].est_error, b.results[i].est_error);
        EXPECT_EQ(a.results[i].pred_error, b.results[i].pred_error);
    }
    s = small_scenario();
    const auto serial = run_replicates(s);
    s.threads = 3;
    const auto parallel = run_replicates(s);
    ASSERT_EQ(serial.results.size(), parallel.results.size());
    for (std::size_t i = 0; i < serial.results.size(); ++i) {
        EXPECT_EQ(serial.results[i].replicate, parallel.results[i].replicate);
        EXPECT_EQ(serial.results[i].method, parallel.results[i].method);
        EXPECT_EQ(serial.results[i].lambda, parallel.results[i].lambda);
        EXPECT_EQ(serial.results[i].pred_error, parallel.results[i].pred_error);
    }
}

TEST(RunReplicates, OraclesDominateGcvPerReplicate) {
    const auto batch = run_replicates(small_scenario());
    EXPECT_EQ(batch.failures, 0);
    ASSERT_EQ(batch.results.size(), 18u);
    for (std::size_t i = 0; i < batch.results.size(); i += 3) {
        const auto& g = batch.results[i];
        const auto& op = batch.results[i + 1];
        const auto& oe = batch.results[i + 2];
        EXPECT_EQ(g.method, TuningMethod::Gcv);
        EXPECT_EQ(op.method, TuningMethod::OraclePred);
        EXPECT_EQ(oe.method, TuningMethod::OracleEst);
        EXPECT_LE(op.pred_error, g.pred_error);
        EXPECT_LE(oe.est_error, g.est_error);
        for (const auto* r : {&g, &op, &oe}) {
            EXPECT_GT(r->lambda, 0.0);
            EXPECT_GE(r->est_error, 0.0);
            EXPECT_GE(r->pred_error, 0.0);
        }
    }
}

TEST(RunReplicates, PredictionBoundedByEstimation) {
    const auto s = small_scenario();
    const auto batch = run_replicates(s);
    const double max_zeta2 = 1.0; // ζ_1² for the well-spaced design
    for (const auto& r : batch.results) {
        EXPECT_LE(r.pred_error, r.est_error * max_zeta2 + 1e-6);
    }
}

TEST(RunReplicates, GcvNearOracleAtLargeSample) {
    SimScenario s;
    s.n = 500;
    s.replicates = 200;
    const auto batch = run_replicates(s);
    EXPECT_EQ(batch.failures, 0);
    EXPECT_LE(mean_of(batch, TuningMethod::Gcv, true), 2.0 * mean_of(batch, TuningMethod::OraclePred, true));
}

TEST(RunReplicates, GcvLambdaShrinksWithSampleSize) {
    const auto median_lambda = [](int n) {
        SimScenario s;
        s.n = n;
        s.replicates = 50;
        const auto batch = run_replicates(s);
        std::vector<double> lambdas;
        for (const auto& r : batch.results) {
            if (r.method == TuningMethod::Gcv) lambdas.push_back(r.lambda);
        }
        std::nth_element(lambdas.begin(), lambdas.begin() + lambdas.size() / 2, lambdas.end());
        return lambdas[lambdas.size() / 2];
    };
    EXPECT_LT(median_lambda(500), median_lambda(50));
}

TEST(RunReplicates, InvalidScenario) {
    SimScenario s;
    s.nu = 1.0;
    EXPECT_THROW(run_replicates(s), Error);
    s = SimScenario{};
    s.sigma = 0.0;
    EXPECT_THROW(run_replicates(s), Error);
    s = SimScenario{};
    s.replicates = 0;
    EXPECT_THROW(run_replicates(s), Error);
}

TEST(TuningMethodNames, RoundTrip) {
    for (auto m : {TuningMethod::Gcv, TuningMethod::OraclePred, TuningMethod::OracleEst}) {
        EXPECT_EQ(parse_tuning_method(to_string(m)), m);
    }
    EXPECT_THROW(parse_tuning_method("cv"), Error);
}

TEST(FitRate, ExactPowerLaw) {
    std::map<int, std::vector<double>> errs;
    for (int n : {50, 100, 200, 500}) errs[n] = std::vector<double>(30, 2.5 * std::pow(n, -0.857));
    const auto fit = fit_rate(errs);
    EXPECT_NEAR(fit.slope, -0.857, 1e-10);
    EXPECT_EQ(fit.sample_sizes.size(), 4u);
}

TEST(FitRate, NoisyPowerLaw) {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> jitter(0.9, 1.1);
    std::map<int, std::vector<double>> errs;
    for (int n : {50, 100, 200, 500}) {
        for (int r = 0; r < 30; ++r) errs[n].push_back(std::pow(n, -0.6) * jitter(rng));
    }
    EXPECT_NEAR(fit_rate(errs).slope, -0.6, 0.1);
}

TEST(FitRate, ConstantErrors) {
    std::map<int, std::vector<double>> errs;
    for (int n : {50, 100, 200}) errs[n] = std::vector<double>(30, 0.3);
    EXPECT_NEAR(fit_rate(errs).slope, 0.0, 1e-12);
}

TEST(FitRate, InsufficientData) {
    std::map<int, std::vector<double>> errs;
    errs[50] = std::vector<double>(30, 1.0);
    errs[100] = std::vector<double>(30, 0.5);
    EXPECT_THROW(fit_rate(errs), Error);
    errs[200] = std::vector<double>(29, 0.25);
    EXPECT_THROW(fit_rate(errs), Error);
}
