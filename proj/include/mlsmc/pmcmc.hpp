#pragma once

// Particle marginal Metropolis-Hastings with Robust Adaptive Metropolis (RAM)
// proposals. The energy of a parameter vector is -ln p(theta) minus the
// particle estimate of ln p(y_1:T | theta).

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mlsmc/errors.hpp"
#include "mlsmc/filter.hpp"
#include "mlsmc/model.hpp"
#include "mlsmc/random.hpp"

namespace mlsmc {

using DynVector = Eigen::VectorXd;
using DynMatrix = Eigen::MatrixXd;

inline constexpr double kInfiniteEnergy = std::numeric_limits<double>::infinity();

struct McmcConfig {
    std::size_t iterations = 200;
    DynVector theta0;
    DynMatrix sigma0;
    double gamma = 0.9;
    double alpha_star = 0.234;
    std::size_t burn_in = 0;
};

inline void validate(const McmcConfig& cfg) {
    if (cfg.iterations < 1) throw ConfigError("iterations", "must be >= 1");
    if (!(cfg.gamma > 0.5 && cfg.gamma <= 1.0)) throw ConfigError("gamma", "must be in (0.5, 1]");
    if (!(cfg.alpha_star > 0.0 && cfg.alpha_star < 1.0)) throw ConfigError("alpha_star", "must be in (0, 1)");
    if (cfg.burn_in >= cfg.iterations) throw ConfigError("burn_in", "must be < iterations");
    if (cfg.theta0.size() == 0) throw ConfigError("theta0", "must not be empty");
    if (!cfg.theta0.allFinite()) throw ConfigError("theta0", "must be finite");
    if (cfg.sigma0.rows() != cfg.theta0.size() || cfg.sigma0.cols() != cfg.theta0.size())
        throw ConfigError("sigma0", "must be square with the dimension of theta0");
    if (!cfg.sigma0.isApprox(cfg.sigma0.transpose())) throw ConfigError("sigma0", "must be symmetric");
    if (Eigen::LLT<DynMatrix>(cfg.sigma0).info() != Eigen::Success)
        throw ConfigError("sigma0", "must be positive definite");
}

/// Unknown parameters, their box support and prior. The default prior is flat
/// on the box.
struct ParameterSpace {
    std::vector<std::string> names;
    DynVector lower;
    DynVector upper;
    std::function<double(const DynVector&)> log_prior;

    std::size_t size() const { return names.size(); }

    bool contains(const DynVector& theta) const {
        if (theta.size() != lower.size()) return false;
        for (Eigen::Index i = 0; i < theta.size(); ++i)
            if (!(theta[i] >= lower[i] && theta[i] <= upper[i])) return false;
        return true;
    }

    double prior(const DynVector& theta) const { return log_prior ? log_prior(theta) : 0.0; }
};

inline void validate(const ParameterSpace& space) {
    const auto n = static_cast<Eigen::Index>(space.names.size());
    if (n == 0) throw ConfigError("parameters", "must not be empty");
    if (space.lower.size() != n || space.upper.size() != n)
        throw ConfigError("bounds", "need one lower and one upper bound per parameter");
    for (Eigen::Index i = 0; i < n; ++i)
        if (!(space.lower[i] < space.upper[i]))
            throw ConfigError("bounds", "lower must be < upper for " + space.names[static_cast<std::size_t>(i)]);
}

/// Writes a named parameter into a model description. Conductance values for
/// synaptic parameters are in the model's per-area units.
inline void set_parameter(ModelSpec& spec, const std::string& name, double value) {
    MorrisLecarParams& p = spec.neuron;
    NoiseConfig& nc = spec.noise;
    auto syn = [&]() -> SynapticParams& {
        if (!spec.synaptic) throw ConfigError(name, "synaptic parameter on a model without synapses");
        return *spec.synaptic;
    };
    if (name == "c_m") p.c_m = value;
    else if (name == "phi") p.phi = value;
    else if (name == "v1") p.v1 = value;
    else if (name == "v2") p.v2 = value;
    else if (name == "v3") p.v3 = value;
    else if (name == "v4") p.v4 = value;
    else if (name == "e_l") p.e_l = value;
    else if (name == "e_ca") p.e_ca = value;
    else if (name == "e_k") p.e_k = value;
    else if (name == "g_l") p.g_l = value;
    else if (name == "g_ca") p.g_ca = value;
    else if (name == "g_k") p.g_k = value;
    else if (name == "sigma_v") spec.sigma_v = value;
    else if (name == "sigma_n") nc.sigma_n = value;
    else if (name == "sigma_y") nc.sigma_y = value;
    else if (name == "sigma_i_app") nc.sigma_i_app = value;
    else if (name == "sigma_g_l") nc.sigma_g_l = value;
    else if (name == "tau_e") syn().tau_e = value;
    else if (name == "g_e0") syn().g_e0 = value;
    else if (name == "sigma_e") syn().sigma_e = value;
    else if (name == "tau_i") syn().tau_i = value;
    else if (name == "g_i0") syn().g_i0 = value;
    else if (name == "sigma_i") syn().sigma_i = value;
    else if (name == "e_e") syn().e_e = value;
    else if (name == "e_i") syn().e_i = value;
    else throw ConfigError(name, "unknown parameter name");
}

inline double get_parameter(const ModelSpec& spec, const std::string& name) {
    const MorrisLecarParams& p = spec.neuron;
    const NoiseConfig& nc = spec.noise;
    if (name == "c_m") return p.c_m;
    if (name == "phi") return p.phi;
    if (name == "v1") return p.v1;
    if (name == "v2") return p.v2;
    if (name == "v3") return p.v3;
    if (name == "v4") return p.v4;
    if (name == "e_l") return p.e_l;
    if (name == "e_ca") return p.e_ca;
    if (name == "e_k") return p.e_k;
    if (name == "g_l") return p.g_l;
    if (name == "g_ca") return p.g_ca;
    if (name == "g_k") return p.g_k;
    // Without an override, sigma_v is reported at v = E_L.
    if (name == "sigma_v") return spec.sigma_v ? *spec.sigma_v : std::sqrt(voltage_noise_variance(p.e_l, nc, p));
    if (name == "sigma_n") return nc.sigma_n;
    if (name == "sigma_y") return nc.sigma_y;
    if (name == "sigma_i_app") return nc.sigma_i_app;
    if (name == "sigma_g_l") return nc.sigma_g_l;
    if (!spec.synaptic) throw ConfigError(name, "unknown parameter name or model without synapses");
    const SynapticParams& s = *spec.synaptic;
    if (name == "tau_e") return s.tau_e;
    if (name == "g_e0") return s.g_e0;
    if (name == "sigma_e") return s.sigma_e;
    if (name == "tau_i") return s.tau_i;
    if (name == "g_i0") return s.g_i0;
    if (name == "sigma_i") return s.sigma_i;
    if (name == "e_e") return s.e_e;
    if (name == "e_i") return s.e_i;
    throw ConfigError(name, "unknown parameter name");
}

inline ModelSpec with_parameters(ModelSpec spec, const ParameterSpace& space, const DynVector& theta) {
    for (std::size_t i = 0; i < space.size(); ++i)
        set_parameter(spec, space.names[i], theta[static_cast<Eigen::Index>(i)]);
    return spec;
}

/// phi_T(theta) = -ln p(theta) - sum_k ln p^(y_k | y_1:k-1, theta). Returns
/// +inf outside the support, for parameters the model rejects, and when the
/// filter diverges. The filter run is stored in `run` when given.
template <int D>
double energy(const ModelSpec& base, const ParameterSpace& space, const DynVector& theta,
              std::span<const double> observations, const FilterConfig& pf, std::uint64_t seed,
              FilterOutput<D>* run = nullptr) {
    if (!space.contains(theta)) return kInfiniteEnergy;
    const double log_prior = space.prior(theta);
    if (!std::isfinite(log_prior)) return kInfiniteEnergy;
    try {
        const ModelSpec spec = with_parameters(base, space, theta);
        validate(spec);
        const ModelFor<D> model(spec);
        FilterOutput<D> out = run_filter(model, observations, pf, seed);
        const double value = -log_prior - out.log_likelihood();
        if (run) *run = std::move(out);
        return std::isnan(value) ? kInfiniteEnergy : value;
    } catch (const ConfigError&) {
        return kInfiniteEnergy;
    } catch (const NumericalError&) {
        return kInfiniteEnergy;
    } catch (const std::domain_error&) {
        return kInfiniteEnergy;
    }
}

/// RAM factor update S' = chol(S (I + eta (alpha - alpha*) a a^T / |a|^2) S^T).
/// Returns nothing when the updated matrix is not positive definite.
inline std::optional<DynMatrix> ram_adapt(const DynMatrix& s, const DynVector& a, double alpha, double eta,
                                          double alpha_star) {
    const double norm2 = a.squaredNorm();
    if (!(norm2 > 0)) return s;
    const auto dim = a.size();
    const DynMatrix d = DynMatrix::Identity(dim, dim) + eta * (alpha - alpha_star) * (a * a.transpose()) / norm2;
    DynMatrix m = s * d * s.transpose();
    m = (0.5 * (m + m.transpose())).eval();
    Eigen::LLT<DynMatrix> llt(m);
    if (llt.info() != Eigen::Success) return std::nullopt;
    DynMatrix l = llt.matrixL();
    if ((l.diagonal().array() <= 0).any() || !l.allFinite()) return std::nullopt;
    return l;
}

/// Metropolis acceptance probability for a symmetric proposal.
inline double acceptance_probability(double energy_prev, double energy_new) {
    if (std::isinf(energy_new) && energy_new > 0) return 0.0;
    if (std::isinf(energy_prev) && energy_prev > 0) return 1.0;
    return std::exp(std::min(0.0, energy_prev - energy_new));
}

struct RamState {
    DynVector theta;
    DynMatrix s;  // lower-triangular proposal factor
    double energy = kInfiniteEnergy;
};

struct RamStepResult {
    RamState state;
    bool accepted = false;
    bool adapted = true;
    double alpha = 0.0;
};

/// One RAM iteration j >= 1. The draw a ~ N(0, I) and the acceptance uniform
/// come from the stream (seed, j).
template <class EnergyFn>
RamStepResult ram_step(const RamState& prev, std::size_t j, const McmcConfig& cfg, EnergyFn&& energy_fn,
                       std::uint64_t seed) {
    const auto dim = prev.theta.size();
    RandomStream rs(seed, Stream::mcmc, static_cast<std::uint32_t>(j));
    DynVector a(dim);
    for (Eigen::Index i = 0; i < dim; ++i) a[i] = rs.normal();
    const double u = rs.uniform();

    const DynVector proposal = prev.theta + prev.s * a;
    const double energy_new = energy_fn(proposal);
    const double alpha = acceptance_probability(prev.energy, energy_new);

    RamStepResult out;
    out.alpha = alpha;
    out.accepted = u < alpha;
    out.state.theta = out.accepted ? proposal : prev.theta;
    out.state.energy = out.accepted ? energy_new : prev.energy;

    const double eta = std::pow(static_cast<double>(j), -cfg.gamma);
    if (auto s = ram_adapt(prev.s, a, alpha, eta, cfg.alpha_star)) {
        out.state.s = std::move(*s);
    } else {
        out.state.s = prev.s;
        out.adapted = false;
    }
    return out;
}

struct Chain {
    std::vector<std::string> names;
    std::vector<DynVector> samples;  // theta^(1..M)
    std::vector<double> energies;
    std::vector<bool> accepts;
    DynMatrix s_factor;
    double initial_energy = kInfiniteEnergy;
    std::size_t adaptation_failures = 0;

    std::size_t size() const { return samples.size(); }

    double acceptance_rate() const {
        if (accepts.empty()) return 0.0;
        return static_cast<double>(std::count(accepts.begin(), accepts.end(), true)) /
               static_cast<double>(accepts.size());
    }
};

/// RAM chain on an arbitrary energy. `on_step(j, accepted)` runs after every
/// iteration.
template <class EnergyFn, class OnStep>
Chain run_ram(const McmcConfig& cfg, EnergyFn&& energy_fn, std::uint64_t seed, OnStep&& on_step) {
    validate(cfg);
    RamState state{cfg.theta0, Eigen::LLT<DynMatrix>(cfg.sigma0).matrixL(), kInfiniteEnergy};
    state.energy = energy_fn(state.theta);

    Chain chain;
    chain.initial_energy = state.energy;
    chain.samples.reserve(cfg.iterations);
    chain.energies.reserve(cfg.iterations);
    chain.accepts.reserve(cfg.iterations);
    for (std::size_t j = 1; j <= cfg.iterations; ++j) {
        RamStepResult r = ram_step(state, j, cfg, energy_fn, seed);
        if (!r.adapted) ++chain.adaptation_failures;
        state = std::move(r.state);
        chain.samples.push_back(state.theta);
        chain.energies.push_back(state.energy);
        chain.accepts.push_back(r.accepted);
        on_step(j, r.accepted);
    }
    chain.s_factor = state.s;
    return chain;
}

template <class EnergyFn>
Chain run_ram(const McmcConfig& cfg, EnergyFn&& energy_fn, std::uint64_t seed) {
    return run_ram(cfg, std::forward<EnergyFn>(energy_fn), seed, [](std::size_t, bool) {});
}

template <int D>
struct PmcmcResult {
    Chain chain;
    FilterOutput<D> filtered;  // state estimates of the last accepted run
};

/// Joint state and parameter estimation. Every proposal gets a fresh filter
/// run seeded from (seed, j); j = 0 is the initial parameter vector.
template <int D>
PmcmcResult<D> run_pmcmc(const ModelSpec& base, std::span<const double> observations, const ParameterSpace& space,
                         const McmcConfig& cfg, const FilterConfig& pf, std::uint64_t seed) {
    validate(space);
    validate(cfg);
    if (static_cast<std::size_t>(cfg.theta0.size()) != space.size())
        throw ConfigError("theta0", "dimension does not match the parameter list");
    if (!space.contains(cfg.theta0)) throw ConfigError("theta0", "outside the parameter bounds");

    PmcmcResult<D> result;
    FilterOutput<D> candidate;
    std::size_t evaluation = 0;
    auto energy_fn = [&](const DynVector& theta) {
        candidate = {};
        const double e = energy<D>(base, space, theta, observations, pf, derive_seed(seed, evaluation), &candidate);
        // The initial parameter vector is the first retained state.
        if (evaluation++ == 0) result.filtered = std::move(candidate);
        return e;
    };
    auto on_step = [&](std::size_t, bool accepted) {
        if (accepted) result.filtered = std::move(candidate);
    };
    result.chain = run_ram(cfg, energy_fn, derive_seed(seed, ~0ull), on_step);
    result.chain.names = space.names;
    return result;
}

struct PointEstimates {
    DynVector mean;
    DynVector last;
};

/// Mean of the samples after the first `burn_in`, and the final sample.
inline PointEstimates point_estimates(const Chain& chain, std::size_t burn_in) {
    if (burn_in >= chain.size()) throw ConfigError("burn_in", "must be < chain length");
    DynVector mean = DynVector::Zero(chain.samples.front().size());
    for (std::size_t j = burn_in; j < chain.size(); ++j) mean += chain.samples[j];
    mean /= static_cast<double>(chain.size() - burn_in);
    return {mean, chain.samples.back()};
}

}  // namespace mlsmc
