#pragma once

// Posterior Cramer-Rao bound for the 2-state model, via the recursion on the
// filtering information matrix
//
//   J_{k+1} = D22 - D21 (J_k + D11)^-1 D12
//   D11 = E[F^T Q F],  D12 = -E[F^T Q],  D22 = E[Q] + h h^T / sigma_y^2
//
// with F the Jacobian of the transition and Q = Sigma_x^-1. Expectations are
// Monte Carlo averages over simulated true trajectories.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/LU>

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mlsmc/errors.hpp"
#include "mlsmc/model.hpp"
#include "mlsmc/parallel.hpp"
#include "mlsmc/random.hpp"
#include "mlsmc/simulate.hpp"

namespace mlsmc {

namespace detail {

template <int D>
Matrix<D> finish_pcrb_step(const Matrix<D>& j_prev, const Matrix<D>& d11, const Matrix<D>& d12, Matrix<D> d22,
                           double sigma_y2, std::size_t step) {
    if (!(sigma_y2 > 0)) throw std::domain_error("pcrb_step: sigma_y^2 must be > 0");
    d22(0, 0) += 1.0 / sigma_y2;
    const Eigen::LLT<Matrix<D>> llt(j_prev + d11);
    if (llt.info() != Eigen::Success) throw NumericalError("J + D11 is not positive definite", step);
    Matrix<D> j = d22 - d12.transpose() * llt.solve(d12);
    j = (0.5 * (j + j.transpose())).eval();
    if (!j.allFinite() || Eigen::LLT<Matrix<D>>(j).info() != Eigen::Success)
        throw NumericalError("information matrix lost positive definiteness", step);
    return j;
}

}  // namespace detail

/// One step of the recursion with a per-sample inverse process covariance
/// `info[i]` paired with Jacobian sample `jacobians[i]`.
template <int D>
Matrix<D> pcrb_step(const Matrix<D>& j_prev, std::span<const Matrix<D>> jacobians, std::span<const Matrix<D>> info,
                    double sigma_y2, std::size_t step = 0) {
    if (jacobians.empty()) throw std::invalid_argument("pcrb_step: no Jacobian samples");
    if (jacobians.size() != info.size()) throw std::invalid_argument("pcrb_step: sample count mismatch");
    Matrix<D> d11 = Matrix<D>::Zero();
    Matrix<D> d12 = Matrix<D>::Zero();
    Matrix<D> d22 = Matrix<D>::Zero();
    for (std::size_t i = 0; i < jacobians.size(); ++i) {
        const Matrix<D> ftq = jacobians[i].transpose() * info[i];
        d11 += ftq * jacobians[i];
        d12 -= ftq;
        d22 += info[i];
    }
    const double inv_n = 1.0 / static_cast<double>(jacobians.size());
    return detail::finish_pcrb_step<D>(j_prev, d11 * inv_n, d12 * inv_n, d22 * inv_n, sigma_y2, step);
}

/// One step of the recursion with a common process covariance.
template <int D>
Matrix<D> pcrb_step(const Matrix<D>& j_prev, std::span<const Matrix<D>> jacobians, const Matrix<D>& sigma_x,
                    double sigma_y2, std::size_t step = 0) {
    if (jacobians.empty()) throw std::invalid_argument("pcrb_step: no Jacobian samples");
    const Eigen::LLT<Matrix<D>> llt(sigma_x);
    if (llt.info() != Eigen::Success) throw std::domain_error("pcrb_step: Sigma_x must be positive definite");
    const Matrix<D> q = llt.solve(Matrix<D>::Identity());
    Matrix<D> mean_f = Matrix<D>::Zero();
    Matrix<D> d11 = Matrix<D>::Zero();
    for (const auto& f : jacobians) {
        mean_f += f;
        d11 += f.transpose() * q * f;
    }
    const double inv_n = 1.0 / static_cast<double>(jacobians.size());
    return detail::finish_pcrb_step<D>(j_prev, d11 * inv_n, -(mean_f * inv_n).transpose() * q, q, sigma_y2, step);
}

/// J_0 = diag(1 / sigma_v0^2, 1 / sigma_n0^2), the inverse of the filter's
/// initial spread.
inline Matrix<2> default_information_prior(const InitialSpread& spread = {}) {
    if (!(spread.sigma_v > 0) || !(spread.sigma_n > 0))
        throw ConfigError("init_sigma_v", "information prior needs a positive initial spread");
    Matrix<2> j0 = Matrix<2>::Zero();
    j0(0, 0) = 1.0 / (spread.sigma_v * spread.sigma_v);
    j0(1, 1) = 1.0 / (spread.sigma_n * spread.sigma_n);
    return j0;
}

struct PcrbOptions {
    std::size_t trajectories = 200;
    JacobianForm jacobian = JacobianForm::zero_reversal;
    std::optional<Matrix<2>> j0;  // default_information_prior() when unset
    unsigned workers = 1;
};

struct PcrbSeries {
    double t_s = 0.25;
    std::vector<Matrix<2>> j_matrices;  // J_1..J_T
    std::vector<double> bound_v;
    std::vector<double> bound_n;

    std::size_t size() const { return j_matrices.size(); }
    double mean_bound_v() const { return mean(bound_v); }
    double mean_bound_n() const { return mean(bound_n); }

private:
    static double mean(const std::vector<double>& xs) {
        double s = 0.0;
        for (double x : xs) s += x;
        return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
    }
};

/// Simulates `opt.trajectories` true paths from the resting state and runs
/// the recursion along them. Sigma_x at step k uses each path's true v_{k-1}.
inline PcrbSeries pcrb_series(const MorrisLecarParams& p, const NoiseConfig& nc, std::size_t n_steps,
                              std::uint64_t seed, const PcrbOptions& opt = {}) {
    if (opt.trajectories < 1) throw ConfigError("pcrb_trajectories", "must be >= 1");
    if (!(nc.sigma_n > 0)) throw ConfigError("sigma_n", "bound needs sigma_n > 0");
    if (!(nc.sigma_y > 0)) throw ConfigError("sigma_y", "bound needs sigma_y > 0");
    if (!(nc.sigma_i_app > 0)) throw ConfigError("sigma_i_app", "bound needs sigma_i_app > 0");

    const State2 x0 = default_initial_state(p);
    std::vector<Trace<2>> paths(opt.trajectories);
    parallel_for(opt.trajectories, opt.workers,
                 [&](std::size_t t) { paths[t] = simulate_truth(p, nc, n_steps, x0, derive_seed(seed, t)); });

    PcrbSeries out;
    out.t_s = nc.t_s;
    out.j_matrices.reserve(n_steps);
    out.bound_v.reserve(n_steps);
    out.bound_n.reserve(n_steps);

    Matrix<2> j = opt.j0 ? *opt.j0 : default_information_prior();
    std::vector<Matrix<2>> jacobians(opt.trajectories);
    std::vector<Matrix<2>> info(opt.trajectories);
    for (std::size_t k = 0; k < n_steps; ++k) {
        for (std::size_t t = 0; t < opt.trajectories; ++t) {
            const State2& x_prev = k == 0 ? paths[t].initial : paths[t].states[k - 1];
            jacobians[t] = jacobian2(x_prev, p, nc.t_s, opt.jacobian);
            info[t] = Matrix<2>::Zero();
            info[t](0, 0) = 1.0 / voltage_noise_variance(x_prev[kV], nc, p);
            info[t](1, 1) = 1.0 / (nc.sigma_n * nc.sigma_n);
        }
        j = pcrb_step<2>(j, jacobians, info, nc.sigma_y * nc.sigma_y, k + 1);
        const Matrix<2> cov = j.inverse();
        out.j_matrices.push_back(j);
        out.bound_v.push_back(std::sqrt(cov(0, 0)));
        out.bound_n.push_back(std::sqrt(cov(1, 1)));
    }
    return out;
}

}  // namespace mlsmc
