#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "mlsmc/bench.hpp"

using namespace mlsmc;

namespace {

Trace<2> constant_trace(std::size_t n, double v, double gate) {
    Trace<2> t;
    t.states.assign(n, State2{v, gate});
    return t;
}

FilterOutput<2> constant_estimate(std::size_t n, double v, double gate) {
    FilterOutput<2> f;
    f.estimates.assign(n, State2{v, gate});
    f.ess.assign(n, 1.0);
    f.log_predictive.assign(n, 0.0);
    return f;
}

ExperimentConfig small_experiment() {
    ExperimentConfig cfg;
    cfg.trials = 4;
    cfg.n_steps = 200;
    cfg.particle_counts = {50, 100};
    cfg.pcrb_trajectories = 10;
    cfg.seed = 77;
    return cfg;
}

}  // namespace

TEST(Rmse, Examples) {
    const std::vector<Trace<2>> truths{constant_trace(3, 1.0, 0.0), constant_trace(3, -1.0, 0.0)};
    const std::vector<FilterOutput<2>> est{constant_estimate(3, 0.0, 0.0), constant_estimate(3, 0.0, 0.0)};
    const auto r = rmse_series<2>(truths, est);
    for (double x : r[kV]) EXPECT_DOUBLE_EQ(x, 1.0);
    for (double x : r[kN]) EXPECT_DOUBLE_EQ(x, 0.0);

    const std::vector<Trace<2>> one{constant_trace(2, 1.0, 1.0)};
    const std::vector<FilterOutput<2>> off{constant_estimate(2, 0.0, 0.0)};
    const auto diag = rmse_series<2>(one, off);
    EXPECT_DOUBLE_EQ(std::hypot(diag[kV][0], diag[kN][0]), std::sqrt(2.0));
}

TEST(Rmse, RejectsMismatchedInput) {
    const std::vector<Trace<2>> truths{constant_trace(3, 1.0, 0.0)};
    const std::vector<FilterOutput<2>> est{constant_estimate(2, 0.0, 0.0)};
    EXPECT_THROW(rmse_series<2>(truths, est), std::invalid_argument);
}

TEST(Efficiency, Examples) {
    const Eigen::Vector2d e = efficiency({0.3, 0.004, 0.0}, 0.2, 0.004);
    EXPECT_DOUBLE_EQ(e[0], 1.5);
    EXPECT_DOUBLE_EQ(e[1], 1.0);
    EXPECT_THROW(efficiency({0.3, 0.004}, 0.0, 1.0), std::domain_error);
}

TEST(TimeAverage, Examples) {
    EXPECT_DOUBLE_EQ(time_average({1.0, 2.0, 6.0}), 3.0);
    EXPECT_DOUBLE_EQ(time_average({}), 0.0);
}

TEST(TrialSeeds, DistinctStreams) {
    const TrialSeeds a = trial_seeds(1, 0), b = trial_seeds(1, 1);
    EXPECT_NE(a.truth, a.observation);
    EXPECT_NE(a.truth, a.filter);
    EXPECT_NE(a.truth, b.truth);
    EXPECT_EQ(a.filter, trial_seeds(1, 0).filter);
}

TEST(Experiment, NoiselessModelTrackedExactly) {
    ExperimentConfig cfg = small_experiment();
    cfg.model.noise.sigma_i_app = 0;
    cfg.model.noise.sigma_g_l = 0;
    cfg.model.noise.sigma_n = 0;
    cfg.model.noise.sigma_y = 1e-9;
    cfg.model.initial.sigma_v = 0;
    cfg.model.initial.sigma_n = 0;
    cfg.pcrb = false;
    cfg.particle_counts = {10};
    const ExperimentReport r = run_experiment(cfg);
    for (int c = 0; c < 2; ++c)
        for (double x : r.counts[0].rmse[c]) EXPECT_LT(x, 1e-8);
}

TEST(Experiment, ReproducibleAndWorkerIndependent) {
    ExperimentConfig cfg = small_experiment();
    const ExperimentReport a = run_experiment(cfg);
    const ExperimentReport b = run_experiment(cfg);
    cfg.workers = 3;
    const ExperimentReport c = run_experiment(cfg);
    ASSERT_EQ(a.counts.size(), 2u);
    for (std::size_t i = 0; i < a.counts.size(); ++i) {
        EXPECT_EQ(a.counts[i].rmse, b.counts[i].rmse);
        EXPECT_EQ(a.counts[i].rmse, c.counts[i].rmse);
    }
    EXPECT_EQ(a.pcrb->bound_v, c.pcrb->bound_v);
    ASSERT_TRUE(a.counts[0].efficiency);
    EXPECT_GT((*a.counts[0].efficiency)[0], 0.0);
}

TEST(Experiment, SummaryListsEveryCount) {
    const ExperimentReport r = run_experiment(small_experiment());
    std::ostringstream os;
    write_summary(os, r);
    const std::string s = os.str();
    EXPECT_NE(s.find("<RMSE>"), std::string::npos);
    EXPECT_NE(s.find("<PCRB>"), std::string::npos);
    EXPECT_NE(s.find("\n50 "), std::string::npos);
    EXPECT_NE(s.find("\n100 "), std::string::npos);
}

TEST(Experiment, SynapticReportsFourCoordinates) {
    ExperimentConfig cfg = small_experiment();
    cfg.model.synaptic = SynapticParams{};
    cfg.pcrb = false;
    cfg.particle_counts = {50};
    const ExperimentReport r = run_experiment(cfg);
    EXPECT_EQ(r.dim, 4);
    EXPECT_EQ(r.counts[0].rmse.size(), 4u);
    EXPECT_EQ(r.counts[0].mean_rmse.size(), 4u);
}

TEST(Experiment, ValidatesSettings) {
    ExperimentConfig cfg = small_experiment();
    cfg.particle_counts = {1};
    EXPECT_THROW(run_experiment(cfg), ConfigError);
    cfg = small_experiment();
    cfg.algorithm = Algorithm::pmcmc;
    EXPECT_THROW(run_experiment(cfg), ConfigError);
    cfg = small_experiment();
    cfg.model.synaptic = SynapticParams{};
    EXPECT_THROW(run_experiment(cfg), ConfigError);
}
