#pragma once

// Particle filter with the optimal importance density p(x_k | x_{k-1}, y_k).
//
// The observation is linear in the state, y_k = h^T x_k + e_k with h = e_0, so
// with additive Gaussian process noise the optimal proposal is Gaussian:
//
//   Sigma_pi = (Sigma_x^-1 + h h^T / sigma_y^2)^-1
//   mu_pi    = Sigma_pi (Sigma_x^-1 f(x_{k-1}) + h y_k / sigma_y^2)
//
// and the incremental weight is p(y_k | x_{k-1}) = N(y_k; h^T f, h^T Sigma_x h + sigma_y^2).
// Both are computed in the equivalent gain form, which is also defined for
// singular Sigma_x. When h^T Sigma_x h + sigma_y^2 = 0 the predictive density
// is treated as a point mass.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "mlsmc/errors.hpp"
#include "mlsmc/model.hpp"
#include "mlsmc/parallel.hpp"
#include "mlsmc/random.hpp"

namespace mlsmc {

/// What the filter needs from a state-space model with voltage-only observations.
template <class M>
concept StateSpaceModel = requires(const M& m, const Vector<M::kDim>& x) {
    { m.transition(x) } -> std::convertible_to<Vector<M::kDim>>;
    { m.process_cov(x) } -> std::convertible_to<Matrix<M::kDim>>;
    { m.clamp(x) } -> std::convertible_to<Vector<M::kDim>>;
    { m.observation_variance() } -> std::convertible_to<double>;
    { m.initial_prior() } -> std::convertible_to<Gaussian<M::kDim>>;
};

enum class ResamplePolicy { every_step, ess_threshold };

struct FilterConfig {
    std::size_t particles = 500;
    ResamplePolicy resample = ResamplePolicy::every_step;
    double ess_threshold = 0.5;  // fraction of N, used by ResamplePolicy::ess_threshold
    unsigned workers = 1;
};

template <int D>
struct ParticleCloud {
    std::vector<Vector<D>> states;
    std::vector<double> weights;

    std::size_t size() const { return states.size(); }
};

template <int D>
struct FilterOutput {
    std::vector<Vector<D>> estimates;
    std::vector<double> log_predictive;  // ln p^(y_k | y_1:k-1)
    std::vector<double> ess;

    std::size_t size() const { return estimates.size(); }

    double log_likelihood() const {
        double total = 0.0;
        for (double lp : log_predictive) total += lp;
        return total;
    }
};

/// Optimal importance density for one time step. Sigma_pi is shared by all
/// particles, so it is factorised once.
template <int D>
class OptimalProposal {
public:
    OptimalProposal(const Matrix<D>& sigma_x, double sigma_y2) : sigma_x_(sigma_x), sigma_y2_(sigma_y2) {
        if (!sigma_x.allFinite() || !sigma_x.isApprox(sigma_x.transpose()))
            throw std::domain_error("process covariance must be finite and symmetric");
        if (!(sigma_y2 >= 0)) throw std::domain_error("observation variance must be >= 0");
        predictive_var_ = sigma_x(0, 0) + sigma_y2;
        if (!(predictive_var_ >= 0)) throw std::domain_error("predictive variance h^T Sigma_x h + sigma_y^2 is negative");
        // Noise-free voltage: the observation carries no new information and
        // the predictive density degenerates to a point mass at h^T f.
        gain_ = predictive_var_ > 0 ? Vector<D>(sigma_x.col(0) / predictive_var_) : Vector<D>::Zero();
        cov_ = sigma_x - gain_ * sigma_x.row(0);
        cov_ = (0.5 * (cov_ + cov_.transpose())).eval();
        factor_ = psd_factor<D>(cov_);
    }

    Vector<D> mean(const Vector<D>& f_val, double y) const { return f_val + gain_ * (y - f_val[0]); }
    const Matrix<D>& covariance() const { return cov_; }
    const Matrix<D>& covariance_factor() const { return factor_; }
    double predictive_variance() const { return predictive_var_; }

    double log_predictive(double y, const Vector<D>& f_val) const {
        const double r = y - f_val[0];
        if (predictive_var_ == 0) return r == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
        return -0.5 * (r * r / predictive_var_ + std::log(2.0 * std::numbers::pi * predictive_var_));
    }

    /// ln N(x; mean(f_val, y), Sigma_pi); only defined for nonsingular Sigma_pi.
    double log_density(const Vector<D>& x, const Vector<D>& f_val, double y) const {
        return log_gaussian(x, mean(f_val, y), cov_);
    }

    static double log_gaussian(const Vector<D>& x, const Vector<D>& mu, const Matrix<D>& cov) {
        Eigen::LLT<Matrix<D>> llt(cov);
        if (llt.info() != Eigen::Success) throw std::domain_error("covariance is not positive definite");
        const Vector<D> z = llt.matrixL().solve(x - mu);
        const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
        return -0.5 * (z.squaredNorm() + log_det + D * std::log(2.0 * std::numbers::pi));
    }

private:
    Matrix<D> sigma_x_;
    double sigma_y2_;
    double predictive_var_;
    Vector<D> gain_;
    Matrix<D> cov_;
    Matrix<D> factor_;
};

template <int D>
Gaussian<D> optimal_proposal_moments(double y, const Matrix<D>& sigma_x, double sigma_y2, const Vector<D>& f_val) {
    const OptimalProposal<D> prop(sigma_x, sigma_y2);
    return {prop.mean(f_val, y), prop.covariance()};
}

/// p(y_k | x_{k-1}) given f_val = f(x_{k-1}).
template <int D>
double predictive_likelihood(double y, const Matrix<D>& sigma_x, double sigma_y2, const Vector<D>& f_val) {
    return std::exp(OptimalProposal<D>(sigma_x, sigma_y2).log_predictive(y, f_val));
}

/// The general importance ratio p(y|x_k) p(x_k|x_{k-1}) / pi(x_k | x_{k-1}, y)
/// evaluated at a proposed x_k. For the optimal proposal it equals
/// p(y|x_{k-1}) whatever x_k is; kept as a cross-check of that identity.
template <int D>
double importance_ratio(double y, const Vector<D>& x_new, const Vector<D>& f_val, const Matrix<D>& sigma_x,
                        double sigma_y2) {
    const OptimalProposal<D> prop(sigma_x, sigma_y2);
    const double r = y - x_new[0];
    const double log_lik = -0.5 * (r * r / sigma_y2 + std::log(2.0 * std::numbers::pi * sigma_y2));
    const double log_trans = OptimalProposal<D>::log_gaussian(x_new, f_val, sigma_x);
    return std::exp(log_lik + log_trans - prop.log_density(x_new, f_val, y));
}

inline double effective_sample_size(std::span<const double> weights) {
    double sum_sq = 0.0;
    for (double w : weights) sum_sq += w * w;
    return 1.0 / sum_sq;
}

template <int D>
Vector<D> mmse_estimate(const ParticleCloud<D>& cloud) {
    Vector<D> est = Vector<D>::Zero();
    for (std::size_t i = 0; i < cloud.size(); ++i) est += cloud.weights[i] * cloud.states[i];
    return est;
}

/// Systematic resampling: one offset u in [0, 1), positions (u + i) / N.
/// Returns the index of the particle copied into slot i.
inline std::vector<std::size_t> systematic_indices(std::span<const double> weights, double u) {
    const std::size_t n = weights.size();
    std::vector<std::size_t> idx(n);
    // Work in units of 1/N so that equal weights give exact integer boundaries.
    const auto scale = static_cast<double>(n);
    double cumulative = weights.empty() ? 0.0 : scale * weights[0];
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double position = u + static_cast<double>(i);
        while (position >= cumulative && j + 1 < n) cumulative += scale * weights[++j];
        idx[i] = j;
    }
    return idx;
}

template <int D>
ParticleCloud<D> resample(const ParticleCloud<D>& cloud, double u) {
    const auto idx = systematic_indices(cloud.weights, u);
    ParticleCloud<D> out;
    out.states.reserve(cloud.size());
    for (std::size_t i : idx) out.states.push_back(cloud.states[i]);
    out.weights.assign(cloud.size(), 1.0 / static_cast<double>(cloud.size()));
    return out;
}

/// Resampling with the offset drawn from the stream addressed by (seed, step).
template <int D>
ParticleCloud<D> resample(const ParticleCloud<D>& cloud, std::uint64_t seed, std::uint32_t step = 0) {
    RandomStream rs(seed, Stream::resample, step);
    return resample(cloud, rs.uniform());
}

template <int D>
struct StepResult {
    ParticleCloud<D> cloud;
    double log_predictive = 0.0;
    Vector<D> estimate;
    double ess = 0.0;
    bool resampled = false;
    std::vector<double> log_incremental;  // ln p(y_k | x_{k-1}^(i)) per particle
};

/// One iteration of the filter: propose from the optimal density, weight by
/// the predictive likelihood of the parent, normalise, estimate, resample.
/// Draws for particle i come from the stream (seed, step, i).
template <StateSpaceModel M>
StepResult<M::kDim> pf_step(const M& model, const ParticleCloud<M::kDim>& cloud, double y,
                            const Matrix<M::kDim>& sigma_x, std::uint64_t seed, std::uint32_t step,
                            const FilterConfig& cfg = {}) {
    constexpr int D = M::kDim;
    const std::size_t n = cloud.size();
    if (n == 0) throw std::invalid_argument("pf_step: empty particle cloud");

    const OptimalProposal<D> proposal(sigma_x, model.observation_variance());
    const Matrix<D>& factor = proposal.covariance_factor();

    StepResult<D> out;
    out.cloud.states.resize(n);
    out.cloud.weights.resize(n);
    out.log_incremental.resize(n);
    std::vector<double> log_w(n);

    parallel_for(n, cfg.workers, [&](std::size_t i) {
        const Vector<D> f_val = model.transition(cloud.states[i]);
        RandomStream rs(seed, Stream::particle, step, static_cast<std::uint32_t>(i));
        Vector<D> z;
        for (int d = 0; d < D; ++d) z[d] = rs.normal();
        out.cloud.states[i] = model.clamp(proposal.mean(f_val, y) + factor * z);
        out.log_incremental[i] = proposal.log_predictive(y, f_val);
        log_w[i] = std::log(cloud.weights[i]) + out.log_incremental[i];
    });

    const double max_log_w = *std::max_element(log_w.begin(), log_w.end());
    if (!std::isfinite(max_log_w)) throw NumericalError("particle filter diverged: all weights are zero", step);
    double sum = 0.0;
    for (double lw : log_w) sum += std::exp(lw - max_log_w);
    // Incoming weights are normalised, so this is ln sum_i w_{k-1}^(i) zeta^(i).
    out.log_predictive = max_log_w + std::log(sum);

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out.cloud.weights[i] = std::exp(log_w[i] - out.log_predictive);
        total += out.cloud.weights[i];
    }
    for (double& w : out.cloud.weights) w /= total;

    out.estimate = mmse_estimate(out.cloud);
    out.ess = effective_sample_size(out.cloud.weights);

    const bool do_resample = cfg.resample == ResamplePolicy::every_step ||
                             out.ess < cfg.ess_threshold * static_cast<double>(n);
    if (do_resample) {
        out.cloud = resample(out.cloud, seed, step);
        out.resampled = true;
    }
    return out;
}

/// Draws the initial cloud from `prior` with uniform weights.
template <StateSpaceModel M>
ParticleCloud<M::kDim> initial_cloud(const M& model, const Gaussian<M::kDim>& prior, std::size_t n,
                                     std::uint64_t seed) {
    constexpr int D = M::kDim;
    const Matrix<D> factor = psd_factor<D>(prior.cov);
    ParticleCloud<D> cloud;
    cloud.states.resize(n);
    cloud.weights.assign(n, 1.0 / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        RandomStream rs(seed, Stream::filter_init, 0, static_cast<std::uint32_t>(i));
        Vector<D> z;
        for (int d = 0; d < D; ++d) z[d] = rs.normal();
        cloud.states[i] = model.clamp(prior.mean + factor * z);
    }
    return cloud;
}

/// Filters y_1..y_T. Sigma_x at step k is built from the previous estimate
/// (the prior mean at k = 1).
template <StateSpaceModel M>
FilterOutput<M::kDim> run_filter(const M& model, std::span<const double> observations, const FilterConfig& cfg,
                                 std::uint64_t seed, std::optional<Gaussian<M::kDim>> prior = std::nullopt) {
    constexpr int D = M::kDim;
    if (cfg.particles < 2) throw ConfigError("particles", "must be >= 2");
    if (!(cfg.ess_threshold >= 0 && cfg.ess_threshold <= 1)) throw ConfigError("ess_threshold", "must be in [0, 1]");
    const Gaussian<D> start = prior ? *prior : model.initial_prior();

    FilterOutput<D> out;
    out.estimates.reserve(observations.size());
    out.log_predictive.reserve(observations.size());
    out.ess.reserve(observations.size());

    ParticleCloud<D> cloud = initial_cloud(model, start, cfg.particles, seed);
    Vector<D> previous = start.mean;
    for (std::size_t k = 0; k < observations.size(); ++k) {
        const auto step = static_cast<std::uint32_t>(k + 1);
        StepResult<D> r = pf_step(model, cloud, observations[k], model.process_cov(previous), seed, step, cfg);
        cloud = std::move(r.cloud);
        previous = r.estimate;
        out.estimates.push_back(r.estimate);
        out.log_predictive.push_back(r.log_predictive);
        out.ess.push_back(r.ess);
    }
    return out;
}

}  // namespace mlsmc
