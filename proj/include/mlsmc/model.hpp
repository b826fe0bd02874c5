#pragma once

// Morris-Lecar neuron driven by Ornstein-Uhlenbeck synaptic conductances,
// discretised with a forward Euler step of one sampling period.
//
// Units: mV, ms, uF/cm^2, mS/cm^2, uA/cm^2. Synaptic conductances are in the
// same per-area units as the intrinsic ones; see kDefaultConductanceScale.

#include <Eigen/Core>
#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "mlsmc/errors.hpp"

namespace mlsmc {

template <int D>
using Vector = Eigen::Matrix<double, D, 1>;
template <int D>
using Matrix = Eigen::Matrix<double, D, D>;

using State2 = Vector<2>;
using State4 = Vector<4>;

/// Coordinates of the state vector: (v, n) or (v, n, g_e, g_i).
enum StateIndex : int { kV = 0, kN = 1, kGe = 2, kGi = 3 };

template <int D>
struct Gaussian {
    Vector<D> mean;
    Matrix<D> cov;
};

/// L with L L^T = cov for a symmetric positive semi-definite `cov`. Falls back
/// to an eigen-decomposition when Cholesky fails (singular covariances).
template <int D>
Matrix<D> psd_factor(const Matrix<D>& cov) {
    Eigen::LLT<Matrix<D>> llt(cov);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    Eigen::SelfAdjointEigenSolver<Matrix<D>> eig(cov);
    const Vector<D> root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal();
}

/// Static parameters of the Morris-Lecar model. Defaults are the spiking
/// configuration used throughout the benchmarks.
struct MorrisLecarParams {
    double c_m = 20.0;   // uF/cm^2
    double phi = 0.04;
    double v1 = -1.2;    // mV
    double v2 = 18.0;
    double v3 = 2.0;
    double v4 = 30.0;
    double e_l = -60.0;  // mV
    double e_ca = 120.0;
    double e_k = -84.0;
    double g_l = 2.0;    // mS/cm^2
    double g_ca = 4.4;
    double g_k = 8.0;
};

inline void validate(const MorrisLecarParams& p) {
    auto finite = [](const char* name, double x) {
        if (!std::isfinite(x)) throw ConfigError(name, "must be finite");
    };
    finite("c_m", p.c_m);
    finite("phi", p.phi);
    finite("v1", p.v1);
    finite("v2", p.v2);
    finite("v3", p.v3);
    finite("v4", p.v4);
    finite("e_l", p.e_l);
    finite("e_ca", p.e_ca);
    finite("e_k", p.e_k);
    finite("g_l", p.g_l);
    finite("g_ca", p.g_ca);
    finite("g_k", p.g_k);
    if (p.c_m <= 0) throw ConfigError("c_m", "must be > 0");
    if (p.phi <= 0) throw ConfigError("phi", "must be > 0");
    if (p.v2 == 0) throw ConfigError("v2", "must be nonzero");
    if (p.v4 == 0) throw ConfigError("v4", "must be nonzero");
    if (p.g_l < 0) throw ConfigError("g_l", "must be >= 0");
    if (p.g_ca < 0) throw ConfigError("g_ca", "must be >= 0");
    if (p.g_k < 0) throw ConfigError("g_k", "must be >= 0");
}

struct OuParams {
    double tau;    // ms
    double g0;     // mean
    double sigma;  // stationary standard deviation
};

/// Global excitatory / inhibitory conductances as OU processes.
struct SynapticParams {
    double tau_e = 2.73;
    double g_e0 = 0.121;
    double sigma_e = 0.12;
    double tau_i = 10.49;
    double g_i0 = 0.573;
    double sigma_i = 0.264;
    double e_e = 0.0;
    double e_i = -80.0;

    OuParams excitatory() const { return {tau_e, g_e0, sigma_e}; }
    OuParams inhibitory() const { return {tau_i, g_i0, sigma_i}; }
};

/// mS/cm^2 per nS, i.e. a membrane patch of 1e-4 cm^2. Conductances quoted in
/// nS are multiplied by this factor before entering the membrane equation.
inline constexpr double kDefaultConductanceScale = 0.01;

/// Synaptic parameters quoted in nS (tau in ms), converted with `scale`.
inline SynapticParams synaptic_from_nanosiemens(double tau_e, double g_e0_ns, double sigma_e_ns, double tau_i,
                                                double g_i0_ns, double sigma_i_ns,
                                                double scale = kDefaultConductanceScale) {
    SynapticParams s;
    s.tau_e = tau_e;
    s.g_e0 = g_e0_ns * scale;
    s.sigma_e = sigma_e_ns * scale;
    s.tau_i = tau_i;
    s.g_i0 = g_i0_ns * scale;
    s.sigma_i = sigma_i_ns * scale;
    return s;
}

inline void validate(const SynapticParams& s) {
    if (!(s.tau_e > 0)) throw ConfigError("tau_e", "must be > 0");
    if (!(s.tau_i > 0)) throw ConfigError("tau_i", "must be > 0");
    if (!(s.sigma_e >= 0)) throw ConfigError("sigma_e", "must be >= 0");
    if (!(s.sigma_i >= 0)) throw ConfigError("sigma_i", "must be >= 0");
    if (!std::isfinite(s.g_e0)) throw ConfigError("g_e0", "must be finite");
    if (!std::isfinite(s.g_i0)) throw ConfigError("g_i0", "must be finite");
    if (!std::isfinite(s.e_e)) throw ConfigError("e_e", "must be finite");
    if (!std::isfinite(s.e_i)) throw ConfigError("e_i", "must be finite");
}

/// Model inaccuracies and recording setup.
struct NoiseConfig {
    double sigma_i_app = 1.1;  // applied-current std, uA/cm^2
    double sigma_g_l = 0.02;   // leak-conductance std, mS/cm^2
    double sigma_n = 1e-3;     // gating-equation std
    double sigma_y = 1.0;      // observation std, mV
    double i_o = 110.0;        // nominal applied current, uA/cm^2
    double t_s = 0.25;         // sampling period, ms
};

/// Inaccuracies expressed as a fraction of the nominal current and leak conductance.
inline NoiseConfig noise_with_inaccuracy(double fraction, const MorrisLecarParams& p, NoiseConfig base = {}) {
    base.sigma_i_app = fraction * base.i_o;
    base.sigma_g_l = fraction * p.g_l;
    return base;
}

inline void validate(const NoiseConfig& nc) {
    if (!(nc.sigma_i_app >= 0)) throw ConfigError("sigma_i_app", "must be >= 0");
    if (!(nc.sigma_g_l >= 0)) throw ConfigError("sigma_g_l", "must be >= 0");
    if (!(nc.sigma_n >= 0)) throw ConfigError("sigma_n", "must be >= 0");
    if (!(nc.sigma_y >= 0)) throw ConfigError("sigma_y", "must be >= 0");
    if (!std::isfinite(nc.i_o)) throw ConfigError("i_o", "must be finite");
    if (!(nc.t_s > 0) || !std::isfinite(nc.t_s)) throw ConfigError("t_s", "must be > 0");
}

// Gating functions

inline double m_inf(double v, const MorrisLecarParams& p) { return 0.5 * (1.0 + std::tanh((v - p.v1) / p.v2)); }
inline double n_inf(double v, const MorrisLecarParams& p) { return 0.5 * (1.0 + std::tanh((v - p.v3) / p.v4)); }
inline double tau_n(double v, const MorrisLecarParams& p) { return 1.0 / std::cosh((v - p.v3) / (2.0 * p.v4)); }

inline double dm_inf_dv(double v, const MorrisLecarParams& p) {
    const double c = std::cosh((v - p.v1) / p.v2);
    return 1.0 / (2.0 * p.v2 * c * c);
}

inline double dn_inf_dv(double v, const MorrisLecarParams& p) {
    const double c = std::cosh((v - p.v3) / p.v4);
    return 1.0 / (2.0 * p.v4 * c * c);
}

inline double dtau_n_dv(double v, const MorrisLecarParams& p) {
    const double u = (v - p.v3) / (2.0 * p.v4);
    const double c = std::cosh(u);
    return -std::sinh(u) / (2.0 * p.v4 * c * c);
}

/// Sum of leak, calcium and potassium currents minus the applied current.
inline double membrane_current(double v, double n, double i_app, const MorrisLecarParams& p) {
    return p.g_l * (v - p.e_l) + p.g_ca * m_inf(v, p) * (v - p.e_ca) + p.g_k * n * (v - p.e_k) - i_app;
}

/// Continuous-time vector field (dv/dt, dn/dt).
inline State2 ml_vector_field(const State2& x, double i_app, const MorrisLecarParams& p) {
    const double v = x[kV];
    const double n = x[kN];
    return {-membrane_current(v, n, i_app, p) / p.c_m, p.phi * (n_inf(v, p) - n) / tau_n(v, p)};
}

/// Deterministic Euler map x_k = x_{k-1} + t_s * f(x_{k-1}); no noise.
inline State2 ml_transition2(const State2& x, double i_app, const MorrisLecarParams& p, double t_s) {
    return x + t_s * ml_vector_field(x, i_app, p);
}

inline double synaptic_current(double v, double g_e, double g_i, const SynapticParams& s) {
    return g_e * (v - s.e_e) + g_i * (v - s.e_i);
}

/// Euler-Maruyama step of an OU conductance driven by the standard normal draw `xi`.
inline double ou_step(double g, const OuParams& ou, double t_s, double xi) {
    return g - (t_s / ou.tau) * (g - ou.g0) + std::sqrt(2.0 * ou.sigma * ou.sigma * t_s / ou.tau) * xi;
}

/// Exact OU transition over t_s; used to validate the Euler-Maruyama stepper.
inline double ou_step_exact(double g, const OuParams& ou, double t_s, double xi) {
    const double decay = std::exp(-t_s / ou.tau);
    return ou.g0 + (g - ou.g0) * decay + ou.sigma * std::sqrt(1.0 - decay * decay) * xi;
}

/// Variance injected per Euler-Maruyama step: 2 sigma^2 t_s / tau.
inline double ou_diffusion_variance(const OuParams& ou, double t_s) {
    return 2.0 * ou.sigma * ou.sigma * t_s / ou.tau;
}

/// Deterministic part of the 4-state map. Conductances follow their OU drift;
/// the diffusion is added by the caller.
inline State4 ml_transition4(const State4& x, double i_app, const MorrisLecarParams& p, const SynapticParams& s,
                             double t_s) {
    const double v = x[kV];
    const double n = x[kN];
    const double g_e = x[kGe];
    const double g_i = x[kGi];
    const double i_total = membrane_current(v, n, i_app, p) + synaptic_current(v, g_e, g_i, s);
    State4 out;
    out[kV] = v - (t_s / p.c_m) * i_total;
    out[kN] = n + t_s * p.phi * (n_inf(v, p) - n) / tau_n(v, p);
    out[kGe] = ou_step(g_e, s.excitatory(), t_s, 0.0);
    out[kGi] = ou_step(g_i, s.inhibitory(), t_s, 0.0);
    return out;
}

/// Which expression to use for d f_v / d v.
///   exact:     g_Ca * m_inf'(v) * (v - E_Ca), the true derivative of the Euler map.
///   zero_reversal: g_Ca * m_inf'(v) * v, the calcium drive measured from
///              0 mV instead of E_Ca. Default for the bound.
enum class JacobianForm { exact, zero_reversal };

/// Jacobian of ml_transition2 with respect to (v, n).
inline Matrix<2> jacobian2(const State2& x, const MorrisLecarParams& p, double t_s,
                           JacobianForm form = JacobianForm::exact) {
    const double v = x[kV];
    const double n = x[kN];
    const double k = t_s / p.c_m;
    const double ca_drive = form == JacobianForm::exact ? v - p.e_ca : v;
    const double tau = tau_n(v, p);
    Matrix<2> jac;
    jac(0, 0) = 1.0 - k * (p.g_l + p.g_k * n + p.g_ca * dm_inf_dv(v, p) * ca_drive + p.g_ca * m_inf(v, p));
    jac(0, 1) = -k * p.g_k * (v - p.e_k);
    jac(1, 0) = t_s * p.phi * (dn_inf_dv(v, p) * tau - (n_inf(v, p) - n) * dtau_n_dv(v, p)) / (tau * tau);
    jac(1, 1) = 1.0 - t_s * p.phi / tau;
    return jac;
}

/// Voltage process-noise variance from applied-current and leak inaccuracies,
/// linearised around the previous voltage estimate.
inline double voltage_noise_variance(double v_hat_prev, const NoiseConfig& nc, const MorrisLecarParams& p) {
    const double k = nc.t_s / p.c_m;
    const double dv = v_hat_prev - p.e_l;
    return k * k * (nc.sigma_i_app * nc.sigma_i_app + dv * dv * nc.sigma_g_l * nc.sigma_g_l);
}

inline Matrix<2> process_noise_cov2(double v_hat_prev, const NoiseConfig& nc, const MorrisLecarParams& p) {
    Matrix<2> cov = Matrix<2>::Zero();
    cov(kV, kV) = voltage_noise_variance(v_hat_prev, nc, p);
    cov(kN, kN) = nc.sigma_n * nc.sigma_n;
    return cov;
}

inline Matrix<4> process_noise_cov4(double v_hat_prev, const NoiseConfig& nc, const MorrisLecarParams& p,
                                    const SynapticParams& s) {
    Matrix<4> cov = Matrix<4>::Zero();
    cov.topLeftCorner<2, 2>() = process_noise_cov2(v_hat_prev, nc, p);
    cov(kGe, kGe) = ou_diffusion_variance(s.excitatory(), nc.t_s);
    cov(kGi, kGi) = ou_diffusion_variance(s.inhibitory(), nc.t_s);
    return cov;
}

/// Projects a state onto its physical range: n in [0, 1], conductances >= 0.
template <int D>
Vector<D> clamp_state(Vector<D> x) {
    x[kN] = std::clamp(x[kN], 0.0, 1.0);
    if constexpr (D == 4) {
        x[kGe] = std::max(x[kGe], 0.0);
        x[kGi] = std::max(x[kGi], 0.0);
    }
    return x;
}

/// Lowest-voltage equilibrium (v*, n_inf(v*)) of the 2-state model for a
/// constant applied current, located by bisection. With the default
/// parameters and zero current this is the resting state near E_L.
inline State2 rest_state(const MorrisLecarParams& p, double i_app = 0.0) {
    auto g = [&](double v) { return membrane_current(v, n_inf(v, p), i_app, p); };
    constexpr double lo_bound = -150.0;
    constexpr double hi_bound = 150.0;
    constexpr double scan_step = 0.25;
    double lo = lo_bound;
    double g_lo = g(lo);
    for (double hi = lo_bound + scan_step; hi <= hi_bound; hi += scan_step) {
        const double g_hi = g(hi);
        if ((g_lo <= 0) != (g_hi <= 0)) {
            for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
                const double mid = 0.5 * (lo + hi);
                const double g_mid = g(mid);
                if ((g_lo <= 0) == (g_mid <= 0)) {
                    lo = mid;
                    g_lo = g_mid;
                } else {
                    hi = mid;
                }
            }
            const double v = 0.5 * (lo + hi);
            return {v, n_inf(v, p)};
        }
        lo = hi;
        g_lo = g_hi;
    }
    throw ConfigError("i_app", "no equilibrium found in [-150, 150] mV");
}

/// Spread of the filter's initial particle cloud around the nominal start.
struct InitialSpread {
    double sigma_v = 1.0;   // mV
    double sigma_n = 0.05;
};

/// Full description of a simulated or filtered neuron. With `synaptic` set the
/// state is (v, n, g_e, g_i); otherwise (v, n). `sigma_v`, when set, replaces
/// the voltage noise variance derived from the inaccuracy model.
struct ModelSpec {
    MorrisLecarParams neuron;
    NoiseConfig noise;
    std::optional<SynapticParams> synaptic;
    std::optional<double> sigma_v;
    InitialSpread initial;

    int dim() const { return synaptic ? 4 : 2; }
};

inline void validate(const ModelSpec& spec) {
    validate(spec.neuron);
    validate(spec.noise);
    if (spec.synaptic) validate(*spec.synaptic);
    if (spec.sigma_v && !(*spec.sigma_v >= 0)) throw ConfigError("sigma_v", "must be >= 0");
    if (!(spec.initial.sigma_v >= 0)) throw ConfigError("init_sigma_v", "must be >= 0");
    if (!(spec.initial.sigma_n >= 0)) throw ConfigError("init_sigma_n", "must be >= 0");
}

/// Default start of the 2-state model: the zero-current resting state.
inline State2 default_initial_state(const MorrisLecarParams& p) { return rest_state(p, 0.0); }

/// Default start of the 4-state model: resting state, conductances at their means.
inline State4 default_initial_state(const MorrisLecarParams& p, const SynapticParams& s) {
    const State2 rest = rest_state(p, 0.0);
    return {rest[kV], rest[kN], s.g_e0, s.g_i0};
}

/// 2-state Morris-Lecar model as seen by the particle filter.
class MorrisLecar2 {
public:
    static constexpr int kDim = 2;
    using State = State2;

    explicit MorrisLecar2(const ModelSpec& spec) : spec_(spec) {}

    State transition(const State& x) const {
        return ml_transition2(x, spec_.noise.i_o, spec_.neuron, spec_.noise.t_s);
    }

    Matrix<2> process_cov(const State& estimate_prev) const {
        Matrix<2> cov = process_noise_cov2(estimate_prev[kV], spec_.noise, spec_.neuron);
        if (spec_.sigma_v) cov(kV, kV) = *spec_.sigma_v * *spec_.sigma_v;
        return cov;
    }

    State clamp(const State& x) const { return clamp_state<2>(x); }
    double observation_variance() const { return spec_.noise.sigma_y * spec_.noise.sigma_y; }

    Gaussian<2> initial_prior() const {
        Gaussian<2> g{default_initial_state(spec_.neuron), Matrix<2>::Zero()};
        g.cov(kV, kV) = spec_.initial.sigma_v * spec_.initial.sigma_v;
        g.cov(kN, kN) = spec_.initial.sigma_n * spec_.initial.sigma_n;
        return g;
    }

    const ModelSpec& spec() const { return spec_; }

private:
    ModelSpec spec_;
};

/// 4-state model with OU synaptic conductances.
class MorrisLecar4 {
public:
    static constexpr int kDim = 4;
    using State = State4;

    explicit MorrisLecar4(const ModelSpec& spec) : spec_(spec) {
        if (!spec_.synaptic) throw ConfigError("synaptic", "4-state model requires synaptic parameters");
    }

    State transition(const State& x) const {
        return ml_transition4(x, spec_.noise.i_o, spec_.neuron, *spec_.synaptic, spec_.noise.t_s);
    }

    Matrix<4> process_cov(const State& estimate_prev) const {
        Matrix<4> cov = process_noise_cov4(estimate_prev[kV], spec_.noise, spec_.neuron, *spec_.synaptic);
        if (spec_.sigma_v) cov(kV, kV) = *spec_.sigma_v * *spec_.sigma_v;
        return cov;
    }

    State clamp(const State& x) const { return clamp_state<4>(x); }
    double observation_variance() const { return spec_.noise.sigma_y * spec_.noise.sigma_y; }

    Gaussian<4> initial_prior() const {
        const SynapticParams& s = *spec_.synaptic;
        Gaussian<4> g{default_initial_state(spec_.neuron, s), Matrix<4>::Zero()};
        g.cov(kV, kV) = spec_.initial.sigma_v * spec_.initial.sigma_v;
        g.cov(kN, kN) = spec_.initial.sigma_n * spec_.initial.sigma_n;
        g.cov(kGe, kGe) = s.sigma_e * s.sigma_e;
        g.cov(kGi, kGi) = s.sigma_i * s.sigma_i;
        return g;
    }

    const ModelSpec& spec() const { return spec_; }

private:
    ModelSpec spec_;
};

template <int D>
using ModelFor = std::conditional_t<D == 2, MorrisLecar2, MorrisLecar4>;

}  // namespace mlsmc
