#pragma once

// Sectioned key = value run configuration.
//
//   [model]     states, neuron parameters, init_sigma_v, init_sigma_n, sigma_v
//   [noise]     inaccuracy | sigma_i_app + sigma_g_l, sigma_n, sigma_y, i_o, t_s
//   [synaptic]  OU parameters in nS (converted with conductance_scale), e_e, e_i
//   [simulate]  n_steps | duration_ms, exact_ou
//   [filter]    particles, resample, ess_threshold
//   [mcmc]      parameters, theta0, sigma0, lower, upper, iterations, gamma,
//               alpha_star, burn_in
//   [bench]     scenario, algorithm, particles, trials, pcrb, pcrb_trajectories,
//               pcrb_jacobian
//   [output]    dir, seed, workers
//
// Unknown sections and keys are errors.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mlsmc/bench.hpp"
#include "mlsmc/bounds.hpp"
#include "mlsmc/errors.hpp"
#include "mlsmc/filter.hpp"
#include "mlsmc/io.hpp"
#include "mlsmc/model.hpp"
#include "mlsmc/pmcmc.hpp"

namespace mlsmc {

struct SimulateSettings {
    std::size_t n_steps = 2000;  // 500 ms at 4 kHz
    bool exact_ou = false;
};

struct BenchSettings {
    std::string scenario = "default";
    Algorithm algorithm = Algorithm::pf;
    std::vector<std::size_t> particle_counts{500};
    std::size_t trials = 200;
    bool pcrb = true;
    std::size_t pcrb_trajectories = 200;
    JacobianForm pcrb_jacobian = JacobianForm::zero_reversal;
};

struct OutputSettings {
    std::string dir = "out";
    std::uint64_t seed = 1;
    unsigned workers = 1;
};

struct RunConfig {
    ModelSpec model;
    double conductance_scale = kDefaultConductanceScale;
    SimulateSettings simulate;
    FilterConfig filter;
    std::optional<PmcmcSettings> mcmc;
    BenchSettings bench;
    OutputSettings output;
    std::string source;  // verbatim config text
};

namespace detail {

using Section = boost::property_tree::ptree;

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    for (std::string item : io::split(s, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        out.push_back(b == std::string::npos ? std::string() : item.substr(b, e - b + 1));
    }
    return out;
}

/// Typed access to one section; records which keys were consumed.
class SectionReader {
public:
    SectionReader(std::string name, const Section* section) : name_(std::move(name)), section_(section) {}

    std::optional<std::string> raw(const std::string& key) {
        used_.insert(key);
        if (!section_) return std::nullopt;
        auto v = section_->get_optional<std::string>(boost::property_tree::ptree::path_type(key, '\0'));
        if (!v) return std::nullopt;
        return *v;
    }

    bool has(const std::string& key) const {
        return section_ && section_->get_child_optional(boost::property_tree::ptree::path_type(key, '\0'));
    }

    void number(const std::string& key, double& out) {
        if (auto v = raw(key)) out = to_double(key, *v);
    }

    std::optional<double> number(const std::string& key) {
        if (auto v = raw(key)) return to_double(key, *v);
        return std::nullopt;
    }

    void count(const std::string& key, std::size_t& out) {
        if (auto v = raw(key)) out = to_count(key, *v);
    }

    void flag(const std::string& key, bool& out) {
        auto v = raw(key);
        if (!v) return;
        if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") out = true;
        else if (*v == "false" || *v == "0" || *v == "no" || *v == "off") out = false;
        else throw ConfigError(key, "expected a boolean, got '" + *v + "'");
    }

    void text(const std::string& key, std::string& out) {
        if (auto v = raw(key)) out = *v;
    }

    std::optional<std::vector<double>> numbers(const std::string& key) {
        auto v = raw(key);
        if (!v) return std::nullopt;
        std::vector<double> out;
        for (const auto& item : split_list(*v)) out.push_back(to_double(key, item));
        return out;
    }

    std::optional<std::vector<std::size_t>> counts(const std::string& key) {
        auto v = raw(key);
        if (!v) return std::nullopt;
        std::vector<std::size_t> out;
        for (const auto& item : split_list(*v)) out.push_back(to_count(key, item));
        return out;
    }

    void reject_unknown() const {
        if (!section_) return;
        for (const auto& [key, child] : *section_) {
            if (!used_.count(key)) throw ConfigError(key, "unknown key in [" + name_ + "]");
        }
    }

private:
    static double to_double(const std::string& key, const std::string& s) {
        try {
            return io::parse_double(s);
        } catch (const std::invalid_argument&) {
            throw ConfigError(key, "expected a number, got '" + s + "'");
        }
    }

    static std::size_t to_count(const std::string& key, const std::string& s) {
        try {
            return static_cast<std::size_t>(io::parse_u64(s));
        } catch (const std::invalid_argument&) {
            throw ConfigError(key, "expected a nonnegative integer, got '" + s + "'");
        }
    }

    std::string name_;
    const Section* section_;
    std::set<std::string> used_;
};

inline bool is_conductance_parameter(const std::string& name) {
    return name == "g_e0" || name == "sigma_e" || name == "g_i0" || name == "sigma_i";
}

}  // namespace detail

/// Parses and validates a configuration. `origin` names the source in errors.
inline RunConfig parse_config_string(const std::string& text, const std::string& origin = "<config>") {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        std::istringstream is(text);
        pt::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("config", origin + ":" + std::to_string(e.line()) + ": " + e.message());
    }

    static const std::set<std::string> kSections{"model", "noise", "synaptic", "simulate",
                                                 "filter", "mcmc", "bench", "output"};
    for (const auto& [name, child] : tree) {
        if (child.empty()) throw ConfigError(name, "key outside of any section");
        if (!kSections.count(name)) throw ConfigError(name, "unknown section");
    }
    auto section = [&](const char* name) {
        auto child = tree.get_child_optional(pt::ptree::path_type(name, '\0'));
        return detail::SectionReader(name, child ? &*child : nullptr);
    };

    RunConfig cfg;
    cfg.source = text;

    // [model]
    auto model = section("model");
    std::size_t states = 2;
    model.count("states", states);
    if (states != 2 && states != 4) throw ConfigError("states", "must be 2 or 4");
    MorrisLecarParams& p = cfg.model.neuron;
    model.number("c_m", p.c_m);
    model.number("phi", p.phi);
    model.number("v1", p.v1);
    model.number("v2", p.v2);
    model.number("v3", p.v3);
    model.number("v4", p.v4);
    model.number("e_l", p.e_l);
    model.number("e_ca", p.e_ca);
    model.number("e_k", p.e_k);
    model.number("g_l", p.g_l);
    model.number("g_ca", p.g_ca);
    model.number("g_k", p.g_k);
    model.number("init_sigma_v", cfg.model.initial.sigma_v);
    model.number("init_sigma_n", cfg.model.initial.sigma_n);
    if (auto sv = model.number("sigma_v")) cfg.model.sigma_v = *sv;
    model.reject_unknown();
    validate(p);

    // [noise]
    auto noise = section("noise");
    NoiseConfig& nc = cfg.model.noise;
    if (auto frac = noise.number("inaccuracy")) {
        if (noise.has("sigma_i_app") || noise.has("sigma_g_l"))
            throw ConfigError("inaccuracy", "give either inaccuracy or sigma_i_app / sigma_g_l, not both");
        if (!(*frac >= 0)) throw ConfigError("inaccuracy", "must be >= 0");
        noise.number("i_o", nc.i_o);
        nc = noise_with_inaccuracy(*frac, p, nc);
    } else {
        noise.number("i_o", nc.i_o);
    }
    noise.number("sigma_i_app", nc.sigma_i_app);
    noise.number("sigma_g_l", nc.sigma_g_l);
    noise.number("sigma_n", nc.sigma_n);
    noise.number("sigma_y", nc.sigma_y);
    noise.number("t_s", nc.t_s);
    noise.reject_unknown();

    // [synaptic]
    auto syn = section("synaptic");
    if (states == 4) {
        double tau_e = 2.73, g_e0 = 12.1, sigma_e = 12.0, tau_i = 10.49, g_i0 = 57.3, sigma_i = 26.4;
        syn.number("conductance_scale", cfg.conductance_scale);
        if (!(cfg.conductance_scale > 0)) throw ConfigError("conductance_scale", "must be > 0");
        syn.number("tau_e", tau_e);
        syn.number("g_e0", g_e0);
        syn.number("sigma_e", sigma_e);
        syn.number("tau_i", tau_i);
        syn.number("g_i0", g_i0);
        syn.number("sigma_i", sigma_i);
        SynapticParams s = synaptic_from_nanosiemens(tau_e, g_e0, sigma_e, tau_i, g_i0, sigma_i, cfg.conductance_scale);
        syn.number("e_e", s.e_e);
        syn.number("e_i", s.e_i);
        syn.reject_unknown();
        cfg.model.synaptic = s;
    } else if (tree.get_child_optional("synaptic")) {
        throw ConfigError("synaptic", "section requires states = 4 in [model]");
    }
    validate(cfg.model);

    // [simulate]
    auto sim = section("simulate");
    if (auto duration = sim.number("duration_ms")) {
        if (sim.has("n_steps")) throw ConfigError("duration_ms", "give either duration_ms or n_steps, not both");
        if (!(*duration > 0)) throw ConfigError("duration_ms", "must be > 0");
        cfg.simulate.n_steps = static_cast<std::size_t>(std::llround(*duration / nc.t_s));
    }
    sim.count("n_steps", cfg.simulate.n_steps);
    sim.flag("exact_ou", cfg.simulate.exact_ou);
    sim.reject_unknown();
    if (cfg.simulate.n_steps < 1) throw ConfigError("n_steps", "must be >= 1");

    // [filter]
    auto filter = section("filter");
    filter.count("particles", cfg.filter.particles);
    std::string resample = "every_step";
    filter.text("resample", resample);
    if (resample == "every_step") cfg.filter.resample = ResamplePolicy::every_step;
    else if (resample == "ess") cfg.filter.resample = ResamplePolicy::ess_threshold;
    else throw ConfigError("resample", "must be every_step or ess");
    filter.number("ess_threshold", cfg.filter.ess_threshold);
    filter.reject_unknown();
    if (cfg.filter.particles < 2) throw ConfigError("particles", "must be >= 2");
    if (!(cfg.filter.ess_threshold >= 0 && cfg.filter.ess_threshold <= 1))
        throw ConfigError("ess_threshold", "must be in [0, 1]");

    // [mcmc]
    if (auto mcmc_tree = tree.get_child_optional("mcmc")) {
        auto mc = section("mcmc");
        PmcmcSettings s;
        std::string names;
        mc.text("parameters", names);
        s.space.names = detail::split_list(names);
        if (names.empty()) throw ConfigError("parameters", "must list at least one parameter");
        const std::size_t dim = s.space.names.size();
        for (const auto& name : s.space.names) {
            ModelSpec probe = cfg.model;
            set_parameter(probe, name, 0.0);
        }
        auto vec = [&](const char* key) {
            auto v = mc.numbers(key);
            if (!v) throw ConfigError(key, "required in [mcmc]");
            if (v->size() != dim) throw ConfigError(key, "needs one value per parameter");
            return DynVector(Eigen::Map<const DynVector>(v->data(), static_cast<Eigen::Index>(v->size())));
        };
        s.mcmc.theta0 = vec("theta0");
        s.space.lower = vec("lower");
        s.space.upper = vec("upper");
        auto sigma0 = mc.numbers("sigma0");
        if (!sigma0) throw ConfigError("sigma0", "required in [mcmc]");
        const auto n = static_cast<Eigen::Index>(dim);
        if (sigma0->size() == dim) {
            s.mcmc.sigma0 = Eigen::Map<const DynVector>(sigma0->data(), n).asDiagonal();
        } else if (sigma0->size() == dim * dim) {
            s.mcmc.sigma0 = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                sigma0->data(), n, n);
        } else {
            throw ConfigError("sigma0", "needs the diagonal or the full row-major matrix");
        }
        // Synaptic conductances are given in nS like the [synaptic] section.
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!detail::is_conductance_parameter(s.space.names[static_cast<std::size_t>(i)])) continue;
            const double c = cfg.conductance_scale;
            s.mcmc.theta0[i] *= c;
            s.space.lower[i] *= c;
            s.space.upper[i] *= c;
            s.mcmc.sigma0.row(i) *= c;
            s.mcmc.sigma0.col(i) *= c;
        }
        mc.count("iterations", s.mcmc.iterations);
        mc.number("gamma", s.mcmc.gamma);
        mc.number("alpha_star", s.mcmc.alpha_star);
        mc.count("burn_in", s.mcmc.burn_in);
        mc.reject_unknown();
        validate(s.space);
        validate(s.mcmc);
        if (!s.space.contains(s.mcmc.theta0)) throw ConfigError("theta0", "outside [lower, upper]");
        cfg.mcmc = std::move(s);
    }

    // [bench]
    auto bench = section("bench");
    bench.text("scenario", cfg.bench.scenario);
    std::string algorithm = "pf";
    bench.text("algorithm", algorithm);
    if (algorithm == "pf") cfg.bench.algorithm = Algorithm::pf;
    else if (algorithm == "pmcmc") cfg.bench.algorithm = Algorithm::pmcmc;
    else throw ConfigError("algorithm", "must be pf or pmcmc");
    if (auto counts = bench.counts("particles")) cfg.bench.particle_counts = *counts;
    bench.count("trials", cfg.bench.trials);
    cfg.bench.pcrb = !cfg.model.synaptic;
    bench.flag("pcrb", cfg.bench.pcrb);
    bench.count("pcrb_trajectories", cfg.bench.pcrb_trajectories);
    std::string jac = "zero_reversal";
    bench.text("pcrb_jacobian", jac);
    if (jac == "zero_reversal") cfg.bench.pcrb_jacobian = JacobianForm::zero_reversal;
    else if (jac == "exact") cfg.bench.pcrb_jacobian = JacobianForm::exact;
    else throw ConfigError("pcrb_jacobian", "must be zero_reversal or exact");
    bench.reject_unknown();
    if (cfg.bench.trials < 1) throw ConfigError("trials", "must be >= 1");
    if (cfg.bench.particle_counts.empty()) throw ConfigError("particles", "must not be empty");
    for (std::size_t c : cfg.bench.particle_counts)
        if (c < 2) throw ConfigError("particles", "every particle count must be >= 2");
    if (cfg.bench.pcrb && cfg.model.synaptic) throw ConfigError("pcrb", "only available for the 2-state model");
    if (cfg.bench.pcrb_trajectories < 1) throw ConfigError("pcrb_trajectories", "must be >= 1");
    if (cfg.bench.algorithm == Algorithm::pmcmc && !cfg.mcmc)
        throw ConfigError("algorithm", "pmcmc needs an [mcmc] section");

    // [output]
    auto out = section("output");
    out.text("dir", cfg.output.dir);
    std::size_t seed = cfg.output.seed;
    out.count("seed", seed);
    cfg.output.seed = seed;
    std::size_t workers = cfg.output.workers;
    out.count("workers", workers);
    if (workers < 1) throw ConfigError("workers", "must be >= 1");
    cfg.output.workers = static_cast<unsigned>(workers);
    out.reject_unknown();

    cfg.filter.workers = cfg.output.workers;
    return cfg;
}

inline RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot read '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config_string(text.str(), path);
}

/// Bench settings combined with the model into an experiment description.
inline ExperimentConfig experiment_config(const RunConfig& cfg) {
    ExperimentConfig e;
    e.scenario = cfg.bench.scenario;
    e.model = cfg.model;
    e.particle_counts = cfg.bench.particle_counts;
    e.trials = cfg.bench.trials;
    e.n_steps = cfg.simulate.n_steps;
    e.seed = cfg.output.seed;
    e.algorithm = cfg.bench.algorithm;
    e.pmcmc = cfg.mcmc;
    e.pcrb = cfg.bench.pcrb;
    e.pcrb_trajectories = cfg.bench.pcrb_trajectories;
    e.pcrb_jacobian = cfg.bench.pcrb_jacobian;
    e.resample = cfg.filter.resample;
    e.ess_threshold = cfg.filter.ess_threshold;
    e.exact_ou = cfg.simulate.exact_ou;
    e.workers = cfg.output.workers;
    return e;
}

}  // namespace mlsmc
