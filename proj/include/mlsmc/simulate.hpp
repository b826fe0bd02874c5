#pragma once

// Ground-truth trajectories under the inaccuracy model: every step redraws the
// applied current I_o + nu_I and the leak conductance g_L + nu_g, perturbs the
// gating equation, and diffuses the synaptic conductances.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "mlsmc/errors.hpp"
#include "mlsmc/model.hpp"
#include "mlsmc/random.hpp"

namespace mlsmc {

/// One simulated recording. Index i of every sequence is time step k = i + 1,
/// t = k * t_s; `initial` is the state at k = 0.
template <int D>
struct Trace {
    double t_s = 0.25;
    Vector<D> initial = Vector<D>::Zero();
    std::vector<Vector<D>> states;
    std::vector<double> applied_current;
    std::vector<double> observations;
    double sigma_y = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t observation_seed = 0;

    std::size_t size() const { return states.size(); }
    bool has_observations() const { return !observations.empty(); }
};

struct SimulationOptions {
    /// Use the exact OU transition instead of Euler-Maruyama for g_e, g_i.
    bool exact_ou = false;
};

namespace detail {

template <int D>
Trace<D> simulate(const MorrisLecarParams& p, const SynapticParams* syn, const NoiseConfig& nc,
                  std::size_t n_steps, const Vector<D>& x0, std::uint64_t seed, SimulationOptions opt) {
    if (n_steps < 1) throw ConfigError("n_steps", "must be >= 1");
    validate(p);
    validate(nc);

    Trace<D> trace;
    trace.t_s = nc.t_s;
    trace.initial = x0;
    trace.seed = seed;
    trace.states.reserve(n_steps);
    trace.applied_current.reserve(n_steps);

    RandomStream current_noise(seed, Stream::applied_current);
    RandomStream leak_noise(seed, Stream::leak_conductance);
    RandomStream gating_noise(seed, Stream::gating);
    RandomStream exc_noise(seed, Stream::excitatory);
    RandomStream inh_noise(seed, Stream::inhibitory);

    Vector<D> x = x0;
    MorrisLecarParams p_step = p;
    for (std::size_t k = 1; k <= n_steps; ++k) {
        const double i_app = nc.i_o + nc.sigma_i_app * current_noise.normal();
        p_step.g_l = p.g_l + nc.sigma_g_l * leak_noise.normal();
        const double xi_n = gating_noise.normal();

        Vector<D> next;
        if constexpr (D == 2) {
            next = ml_transition2(x, i_app, p_step, nc.t_s);
        } else {
            next = ml_transition4(x, i_app, p_step, *syn, nc.t_s);
            const double xi_e = exc_noise.normal();
            const double xi_i = inh_noise.normal();
            auto step = opt.exact_ou ? ou_step_exact : ou_step;
            next[kGe] = step(x[kGe], syn->excitatory(), nc.t_s, xi_e);
            next[kGi] = step(x[kGi], syn->inhibitory(), nc.t_s, xi_i);
        }
        next[kN] += nc.sigma_n * xi_n;
        x = clamp_state<D>(next);
        if (!x.allFinite()) throw NumericalError("simulation produced a nonfinite state", k);

        trace.states.push_back(x);
        trace.applied_current.push_back(i_app);
    }
    return trace;
}

}  // namespace detail

inline Trace<2> simulate_truth(const MorrisLecarParams& p, const NoiseConfig& nc, std::size_t n_steps,
                               const State2& x0, std::uint64_t seed) {
    return detail::simulate<2>(p, nullptr, nc, n_steps, x0, seed, {});
}

inline Trace<4> simulate_truth(const MorrisLecarParams& p, const SynapticParams& s, const NoiseConfig& nc,
                               std::size_t n_steps, const State4& x0, std::uint64_t seed,
                               SimulationOptions opt = {}) {
    validate(s);
    return detail::simulate<4>(p, &s, nc, n_steps, x0, seed, opt);
}

/// Default starting state for a model description: the resting state, with
/// conductances at their means for the 4-state model.
template <int D>
Vector<D> initial_state(const ModelSpec& spec) {
    if constexpr (D == 2) {
        return default_initial_state(spec.neuron);
    } else {
        if (!spec.synaptic) throw ConfigError("synaptic", "4-state model requires synaptic parameters");
        return default_initial_state(spec.neuron, *spec.synaptic);
    }
}

template <int D>
Trace<D> simulate_truth(const ModelSpec& spec, std::size_t n_steps, std::uint64_t seed,
                        SimulationOptions opt = {}) {
    if constexpr (D == 2) {
        return simulate_truth(spec.neuron, spec.noise, n_steps, initial_state<2>(spec), seed);
    } else {
        if (!spec.synaptic) throw ConfigError("synaptic", "4-state model requires synaptic parameters");
        return simulate_truth(spec.neuron, *spec.synaptic, spec.noise, n_steps, initial_state<4>(spec), seed, opt);
    }
}

/// Noisy voltage recording y_k = v_k + e_k, e_k ~ N(0, sigma_y^2).
template <int D>
Trace<D> observe(Trace<D> trace, double sigma_y, std::uint64_t seed) {
    if (!(sigma_y >= 0)) throw ConfigError("sigma_y", "must be >= 0");
    RandomStream noise(seed, Stream::observation);
    trace.observations.resize(trace.size());
    for (std::size_t i = 0; i < trace.size(); ++i) trace.observations[i] = trace.states[i][kV] + sigma_y * noise.normal();
    trace.sigma_y = sigma_y;
    trace.observation_seed = seed;
    return trace;
}

/// 10 log10(mean v_k^2 / sigma_y^2). Infinite when sigma_y = 0.
template <int D>
double snr_db(const Trace<D>& trace) {
    if (!trace.has_observations()) throw std::logic_error("snr_db: trace has no observations");
    if (trace.sigma_y == 0.0) return std::numeric_limits<double>::infinity();
    const double power = std::accumulate(trace.states.begin(), trace.states.end(), 0.0,
                                         [](double acc, const Vector<D>& x) { return acc + x[kV] * x[kV]; }) /
                         static_cast<double>(trace.size());
    return 10.0 * std::log10(power / (trace.sigma_y * trace.sigma_y));
}

}  // namespace mlsmc
