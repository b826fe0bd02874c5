#pragma once

// Subcommand dispatch for the command-line tool. Every run writes its CSV
// outputs, a verbatim copy of the configuration and a manifest.json into the
// output directory.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlsmc/bench.hpp"
#include "mlsmc/bounds.hpp"
#include "mlsmc/config.hpp"
#include "mlsmc/errors.hpp"
#include "mlsmc/filter.hpp"
#include "mlsmc/io.hpp"
#include "mlsmc/pmcmc.hpp"
#include "mlsmc/simulate.hpp"

namespace mlsmc::cli {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kOutDirEnv = "MLSMC_OUT_DIR";

enum ExitCode : int { kOk = 0, kValidationError = 1, kNumericalError = 2 };

inline const std::vector<std::string>& subcommands() {
    static const std::vector<std::string> names{"simulate", "filter", "pmcmc", "pcrb", "bench"};
    return names;
}

/// Command-line values that take precedence over the configuration file.
struct Overrides {
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> workers;
};

/// Output directory precedence: --out, then $MLSMC_OUT_DIR, then [output] dir.
inline void apply_overrides(RunConfig& cfg, const Overrides& o) {
    if (const char* env = std::getenv(kOutDirEnv); env && *env) cfg.output.dir = env;
    if (o.out) cfg.output.dir = *o.out;
    if (o.seed) cfg.output.seed = *o.seed;
    if (o.workers) {
        if (*o.workers < 1) throw ConfigError("workers", "must be >= 1");
        cfg.output.workers = *o.workers;
        cfg.filter.workers = *o.workers;
    }
}

namespace detail {

inline std::string fnv1a64(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

class RunContext {
public:
    RunContext(const RunConfig& cfg, std::string subcommand) : cfg_(cfg), subcommand_(std::move(subcommand)) {
        dir_ = cfg.output.dir;
        std::filesystem::create_directories(dir_);
    }

    template <class Writer>
    void write(const std::string& name, Writer&& writer) {
        std::ofstream os(dir_ / name);
        if (!os) throw std::runtime_error("cannot write " + (dir_ / name).string());
        writer(os);
        if (!os) throw std::runtime_error("error writing " + (dir_ / name).string());
        outputs_.push_back(name);
    }

    nlohmann::json& extra() { return extra_; }

    void finish(double seconds) {
        write("config.ini", [&](std::ostream& os) { os << cfg_.source; });
        nlohmann::json m;
        m["tool"] = "mlsmc";
        m["version"] = kVersion;
        m["subcommand"] = subcommand_;
        m["seed"] = cfg_.output.seed;
        m["workers"] = cfg_.output.workers;
        m["config_file"] = "config.ini";
        m["config_fnv1a64"] = fnv1a64(cfg_.source);
        m["reproduce"] = "mlsmc " + subcommand_ + " --config config.ini --seed " + std::to_string(cfg_.output.seed) +
                         " --workers " + std::to_string(cfg_.output.workers);
        m["outputs"] = outputs_;
        m["wall_time_s"] = seconds;
        for (auto& [k, v] : extra_.items()) m[k] = v;
        std::ofstream os(dir_ / "manifest.json");
        if (!os) throw std::runtime_error("cannot write manifest.json");
        os << m.dump(2) << "\n";
    }

private:
    const RunConfig& cfg_;
    std::string subcommand_;
    std::filesystem::path dir_;
    std::vector<std::string> outputs_;
    nlohmann::json extra_ = nlohmann::json::object();
};

template <int D>
Trace<D> recorded_trace(const RunConfig& cfg, nlohmann::json& extra) {
    const TrialSeeds s = trial_seeds(cfg.output.seed, 0);
    extra["truth_seed"] = s.truth;
    extra["observation_seed"] = s.observation;
    return observe(simulate_truth<D>(cfg.model, cfg.simulate.n_steps, s.truth, {cfg.simulate.exact_ou}),
                   cfg.model.noise.sigma_y, s.observation);
}

template <int D>
double rmse_v(const Trace<D>& truth, const FilterOutput<D>& est) {
    double sum = 0.0;
    for (std::size_t k = 0; k < truth.size(); ++k) {
        const double e = truth.states[k][kV] - est.estimates[k][kV];
        sum += e * e;
    }
    return std::sqrt(sum / static_cast<double>(truth.size()));
}

template <int D>
void run_dim(const std::string& cmd, const RunConfig& cfg, RunContext& ctx, std::ostream& log) {
    if (cmd == "simulate") {
        const Trace<D> trace = recorded_trace<D>(cfg, ctx.extra());
        ctx.write("trace.csv", [&](std::ostream& os) { io::write_trace(os, trace); });
        log << "simulated " << trace.size() << " steps, SNR " << snr_db(trace) << " dB\n";
    } else if (cmd == "filter") {
        const Trace<D> trace = recorded_trace<D>(cfg, ctx.extra());
        const std::uint64_t seed = trial_seeds(cfg.output.seed, 0).filter;
        ctx.extra()["filter_seed"] = seed;
        const FilterOutput<D> out = run_filter(ModelFor<D>(cfg.model), trace.observations, cfg.filter, seed);
        ctx.write("trace.csv", [&](std::ostream& os) { io::write_trace(os, trace); });
        ctx.write("filter.csv", [&](std::ostream& os) { io::write_filter(os, out, trace.t_s); });
        log << "filtered " << out.size() << " steps with N = " << cfg.filter.particles
            << ", RMSE(v) = " << rmse_v(trace, out) << " mV, log-likelihood = " << out.log_likelihood() << "\n";
    } else if (cmd == "pmcmc") {
        if (!cfg.mcmc) throw ConfigError("mcmc", "pmcmc needs an [mcmc] section");
        const Trace<D> trace = recorded_trace<D>(cfg, ctx.extra());
        const std::uint64_t seed = trial_seeds(cfg.output.seed, 0).filter;
        ctx.extra()["pmcmc_seed"] = seed;
        const PmcmcResult<D> res =
            run_pmcmc<D>(cfg.model, trace.observations, cfg.mcmc->space, cfg.mcmc->mcmc, cfg.filter, seed);
        ctx.write("trace.csv", [&](std::ostream& os) { io::write_trace(os, trace); });
        ctx.write("chain.csv", [&](std::ostream& os) { io::write_chain(os, res.chain); });
        ctx.write("filter.csv", [&](std::ostream& os) { io::write_filter(os, res.filtered, trace.t_s); });
        const PointEstimates pe = point_estimates(res.chain, cfg.mcmc->mcmc.burn_in);
        log << "acceptance rate " << res.chain.acceptance_rate() << "\n";
        for (std::size_t i = 0; i < res.chain.names.size(); ++i)
            log << res.chain.names[i] << ": mean " << pe.mean[static_cast<Eigen::Index>(i)] << ", last "
                << pe.last[static_cast<Eigen::Index>(i)] << "\n";
        ctx.extra()["acceptance_rate"] = res.chain.acceptance_rate();
        ctx.extra()["adaptation_failures"] = res.chain.adaptation_failures;
        if (res.chain.adaptation_failures)
            std::cerr << "warning: RAM adaptation skipped " << res.chain.adaptation_failures
                      << " times (factor lost positive definiteness)\n";
    } else {
        throw ConfigError("subcommand", "unknown subcommand '" + cmd + "'");
    }
}

}  // namespace detail

/// Runs a subcommand and writes its artifacts. Throws ConfigError and
/// NumericalError; see dispatch() for exit codes.
inline void run(const std::string& cmd, const RunConfig& cfg, std::ostream& log) {
    const auto start = std::chrono::steady_clock::now();
    const auto& known = subcommands();
    if (std::find(known.begin(), known.end(), cmd) == known.end())
        throw ConfigError("subcommand", "unknown subcommand '" + cmd + "'");
    detail::RunContext ctx(cfg, cmd);

    if (cmd == "pcrb") {
        if (cfg.model.synaptic) throw ConfigError("states", "the bound is only available for the 2-state model");
        PcrbOptions opt;
        opt.trajectories = cfg.bench.pcrb_trajectories;
        opt.jacobian = cfg.bench.pcrb_jacobian;
        opt.j0 = default_information_prior(cfg.model.initial);
        opt.workers = cfg.output.workers;
        const PcrbSeries series =
            pcrb_series(cfg.model.neuron, cfg.model.noise, cfg.simulate.n_steps, pcrb_seed(cfg.output.seed), opt);
        ctx.write("pcrb.csv", [&](std::ostream& os) { io::write_pcrb(os, series); });
        log << "<PCRB(v)> = " << series.mean_bound_v() << " mV, <PCRB(n)> = " << series.mean_bound_n() << "\n";
    } else if (cmd == "bench") {
        const ExperimentReport report = run_experiment(experiment_config(cfg));
        ctx.write("rmse.csv", [&](std::ostream& os) { io::write_rmse(os, report); });
        if (report.pcrb) ctx.write("pcrb.csv", [&](std::ostream& os) { io::write_pcrb(os, *report.pcrb); });
        ctx.write("summary.txt", [&](std::ostream& os) { write_summary(os, report); });
        write_summary(log, report);
    } else if (cfg.model.synaptic) {
        detail::run_dim<4>(cmd, cfg, ctx, log);
    } else {
        detail::run_dim<2>(cmd, cfg, ctx, log);
    }

    ctx.finish(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
}

/// run() with errors mapped to exit codes and reported on `err`.
inline int dispatch(const std::string& cmd, const RunConfig& cfg, std::ostream& log, std::ostream& err) {
    try {
        run(cmd, cfg, log);
        return kOk;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kValidationError;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << "\n";
        return kNumericalError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kValidationError;
    }
}

}  // namespace mlsmc::cli
