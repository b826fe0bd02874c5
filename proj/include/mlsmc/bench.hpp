#pragma once

// Monte Carlo experiments: simulate, observe, filter (or PMCMC), and compare
// the RMSE over trials with the PCRB.

#include <Eigen/Core>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlsmc/bounds.hpp"
#include "mlsmc/errors.hpp"
#include "mlsmc/filter.hpp"
#include "mlsmc/model.hpp"
#include "mlsmc/parallel.hpp"
#include "mlsmc/pmcmc.hpp"
#include "mlsmc/random.hpp"
#include "mlsmc/simulate.hpp"

namespace mlsmc {

/// rmse[c][k] = sqrt(mean over trials of (x_k[c] - x^_k[c])^2).
template <int D>
std::vector<std::vector<double>> rmse_series(std::span<const Trace<D>> truths,
                                             std::span<const FilterOutput<D>> estimates) {
    if (truths.size() != estimates.size()) throw std::invalid_argument("rmse_series: trial count mismatch");
    if (truths.empty()) throw std::invalid_argument("rmse_series: no trials");
    const std::size_t steps = truths.front().size();
    std::vector<std::vector<double>> out(D, std::vector<double>(steps, 0.0));
    for (std::size_t t = 0; t < truths.size(); ++t) {
        if (truths[t].size() != steps || estimates[t].size() != steps)
            throw std::invalid_argument("rmse_series: length mismatch");
        for (std::size_t k = 0; k < steps; ++k) {
            const Vector<D> e = truths[t].states[k] - estimates[t].estimates[k];
            for (int c = 0; c < D; ++c) out[c][k] += e[c] * e[c];
        }
    }
    for (auto& series : out)
        for (double& v : series) v = std::sqrt(v / static_cast<double>(truths.size()));
    return out;
}

inline double time_average(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

enum class Algorithm { pf, pmcmc };

struct PmcmcSettings {
    ParameterSpace space;
    McmcConfig mcmc;
};

struct ExperimentConfig {
    std::string scenario = "default";
    ModelSpec model;
    std::vector<std::size_t> particle_counts{500};
    std::size_t trials = 200;
    std::size_t n_steps = 2000;
    std::uint64_t seed = 1;
    Algorithm algorithm = Algorithm::pf;
    std::optional<PmcmcSettings> pmcmc;
    bool pcrb = true;
    std::size_t pcrb_trajectories = 200;
    JacobianForm pcrb_jacobian = JacobianForm::zero_reversal;
    ResamplePolicy resample = ResamplePolicy::every_step;
    double ess_threshold = 0.5;
    bool exact_ou = false;
    unsigned workers = 1;
};

inline void validate(const ExperimentConfig& cfg) {
    validate(cfg.model);
    if (cfg.trials < 1) throw ConfigError("trials", "must be >= 1");
    if (cfg.n_steps < 1) throw ConfigError("n_steps", "must be >= 1");
    if (cfg.particle_counts.empty()) throw ConfigError("particles", "must list at least one particle count");
    for (std::size_t n : cfg.particle_counts)
        if (n < 2) throw ConfigError("particles", "every particle count must be >= 2");
    if (cfg.algorithm == Algorithm::pmcmc && !cfg.pmcmc)
        throw ConfigError("algorithm", "pmcmc experiments need [mcmc] settings");
    if (cfg.pcrb && cfg.model.synaptic) throw ConfigError("pcrb", "the bound is only available for the 2-state model");
    if (cfg.pcrb && cfg.pcrb_trajectories < 1) throw ConfigError("pcrb_trajectories", "must be >= 1");
}

/// Results for one particle count.
struct ParticleCountReport {
    std::size_t particles = 0;
    std::vector<std::vector<double>> rmse;  // [coordinate][k]
    std::vector<double> mean_rmse;          // per coordinate
    std::size_t diverged = 0;
    double seconds = 0.0;

    /// Ratio of time-averaged RMSE to time-averaged bound, per coordinate (v, n).
    std::optional<Eigen::Vector2d> efficiency;
};

struct ExperimentReport {
    std::string scenario;
    int dim = 2;
    double t_s = 0.25;
    std::size_t trials = 0;
    std::vector<ParticleCountReport> counts;
    std::optional<PcrbSeries> pcrb;
    double seconds = 0.0;

    std::optional<double> mean_pcrb_v() const {
        return pcrb ? std::optional(pcrb->mean_bound_v()) : std::nullopt;
    }
    std::optional<double> mean_pcrb_n() const {
        return pcrb ? std::optional(pcrb->mean_bound_n()) : std::nullopt;
    }
};

/// eta = <RMSE> / <PCRB> per coordinate.
inline Eigen::Vector2d efficiency(const std::vector<double>& mean_rmse, double mean_pcrb_v, double mean_pcrb_n) {
    if (mean_rmse.size() < 2) throw std::invalid_argument("efficiency: need RMSE for v and n");
    if (!(mean_pcrb_v > 0) || !(mean_pcrb_n > 0)) throw std::domain_error("efficiency: bound average is zero");
    return {mean_rmse[kV] / mean_pcrb_v, mean_rmse[kN] / mean_pcrb_n};
}

inline Eigen::Vector2d efficiency(const ExperimentReport& report, std::size_t index = 0) {
    if (!report.pcrb) throw std::logic_error("efficiency: report has no bound");
    return efficiency(report.counts.at(index).mean_rmse, report.pcrb->mean_bound_v(), report.pcrb->mean_bound_n());
}

/// Seeds of trial t: truth, observation noise and filter. The filter seed is
/// shared by every particle count so that comparisons across N are paired.
struct TrialSeeds {
    std::uint64_t truth;
    std::uint64_t observation;
    std::uint64_t filter;
};

inline TrialSeeds trial_seeds(std::uint64_t master, std::size_t trial) {
    const std::uint64_t base = derive_seed(master, trial);
    return {derive_seed(base, 0), derive_seed(base, 1), derive_seed(base, 2)};
}

inline std::uint64_t pcrb_seed(std::uint64_t master) { return derive_seed(master, 0xB0D5'0000'0000ull); }

template <int D>
ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    validate(cfg);
    if (cfg.model.dim() != D) throw std::logic_error("run_experiment: dimension mismatch");
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();

    ExperimentReport report;
    report.scenario = cfg.scenario;
    report.dim = D;
    report.t_s = cfg.model.noise.t_s;
    report.trials = cfg.trials;

    std::vector<Trace<D>> truths(cfg.trials);
    parallel_for(cfg.trials, cfg.workers, [&](std::size_t t) {
        const TrialSeeds s = trial_seeds(cfg.seed, t);
        truths[t] = observe(simulate_truth<D>(cfg.model, cfg.n_steps, s.truth, {cfg.exact_ou}), cfg.model.noise.sigma_y,
                            s.observation);
    });

    if (cfg.pcrb) {
        PcrbOptions opt;
        opt.trajectories = cfg.pcrb_trajectories;
        opt.jacobian = cfg.pcrb_jacobian;
        opt.j0 = default_information_prior(cfg.model.initial);
        opt.workers = cfg.workers;
        report.pcrb = pcrb_series(cfg.model.neuron, cfg.model.noise, cfg.n_steps, pcrb_seed(cfg.seed), opt);
    }

    const ModelFor<D> model(cfg.model);
    for (std::size_t particles : cfg.particle_counts) {
        const auto count_start = clock::now();
        FilterConfig pf;
        pf.particles = particles;
        pf.resample = cfg.resample;
        pf.ess_threshold = cfg.ess_threshold;

        std::vector<std::optional<FilterOutput<D>>> runs(cfg.trials);
        parallel_for(cfg.trials, cfg.workers, [&](std::size_t t) {
            const TrialSeeds s = trial_seeds(cfg.seed, t);
            try {
                if (cfg.algorithm == Algorithm::pf) {
                    runs[t] = run_filter(model, truths[t].observations, pf, s.filter);
                } else {
                    runs[t] = run_pmcmc<D>(cfg.model, truths[t].observations, cfg.pmcmc->space, cfg.pmcmc->mcmc, pf,
                                           s.filter)
                                  .filtered;
                    if (runs[t]->size() != truths[t].size()) runs[t].reset();
                }
            } catch (const NumericalError&) {
                runs[t].reset();
            }
        });

        std::vector<Trace<D>> ok_truths;
        std::vector<FilterOutput<D>> ok_runs;
        ParticleCountReport r;
        r.particles = particles;
        for (std::size_t t = 0; t < cfg.trials; ++t) {
            if (!runs[t]) {
                ++r.diverged;
                continue;
            }
            ok_truths.push_back(truths[t]);
            ok_runs.push_back(std::move(*runs[t]));
        }
        if (static_cast<double>(r.diverged) > 0.05 * static_cast<double>(cfg.trials) || ok_runs.empty())
            throw NumericalError("experiment failed: " + std::to_string(r.diverged) + " of " +
                                     std::to_string(cfg.trials) + " trials diverged with N = " +
                                     std::to_string(particles),
                                 0);

        r.rmse = rmse_series<D>(ok_truths, ok_runs);
        for (const auto& series : r.rmse) r.mean_rmse.push_back(time_average(series));
        if (report.pcrb) r.efficiency = efficiency(r.mean_rmse, report.pcrb->mean_bound_v(), report.pcrb->mean_bound_n());
        r.seconds = std::chrono::duration<double>(clock::now() - count_start).count();
        report.counts.push_back(std::move(r));
    }
    report.seconds = std::chrono::duration<double>(clock::now() - start).count();
    return report;
}

inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    return cfg.model.synaptic ? run_experiment<4>(cfg) : run_experiment<2>(cfg);
}

/// Time-averaged RMSE, bound and efficiency per particle count.
inline void write_summary(std::ostream& os, const ExperimentReport& report) {
    static const char* const kNames[] = {"v", "n", "gE", "gI"};
    os << "scenario: " << report.scenario << ", trials: " << report.trials << "\n";
    os << std::left << std::setw(10) << "N" << std::setw(14) << "quantity";
    for (int c = 0; c < report.dim; ++c) os << std::setw(14) << kNames[c];
    os << "\n";
    auto row = [&](const std::string& n, const std::string& what, auto value_of) {
        os << std::left << std::setw(10) << n << std::setw(14) << what;
        for (int c = 0; c < report.dim; ++c) {
            const std::optional<double> v = value_of(c);
            std::ostringstream cell;
            if (v) cell << std::setprecision(4) << *v;
            else cell << "-";
            os << std::setw(14) << cell.str();
        }
        os << "\n";
    };
    for (const auto& r : report.counts) {
        const std::string n = std::to_string(r.particles);
        row(n, "<RMSE>", [&](int c) { return std::optional(r.mean_rmse[c]); });
        if (report.pcrb) {
            row(n, "<PCRB>", [&](int c) -> std::optional<double> {
                if (c == kV) return report.pcrb->mean_bound_v();
                if (c == kN) return report.pcrb->mean_bound_n();
                return std::nullopt;
            });
            row(n, "eta", [&](int c) -> std::optional<double> {
                if (c < 2) return (*r.efficiency)[c];
                return std::nullopt;
            });
        }
        if (r.diverged) os << "  diverged trials: " << r.diverged << "\n";
    }
}

}  // namespace mlsmc
