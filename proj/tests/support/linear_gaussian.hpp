#pragma once

// Linear-Gaussian state-space model x_k = F x_{k-1} + w_k, y_k = x_k[0] + e_k,
// with its exact Kalman filter. Used as an oracle for the particle filter.

#include <Eigen/Core>
#include <Eigen/LU>

#include <cmath>
#include <numbers>
#include <vector>

#include "mlsmc/filter.hpp"
#include "mlsmc/random.hpp"

namespace mlsmc::testing {

template <int D>
struct LinearGaussianModel {
    static constexpr int kDim = D;
    using State = Vector<D>;

    Matrix<D> f = Matrix<D>::Identity();
    Matrix<D> q = Matrix<D>::Identity();
    double r = 1.0;
    Gaussian<D> prior{Vector<D>::Zero(), Matrix<D>::Identity()};

    State transition(const State& x) const { return f * x; }
    Matrix<D> process_cov(const State&) const { return q; }
    State clamp(const State& x) const { return x; }
    double observation_variance() const { return r; }
    Gaussian<D> initial_prior() const { return prior; }
};

template <int D>
struct KalmanResult {
    std::vector<Vector<D>> means;
    std::vector<Matrix<D>> covs;
    double log_likelihood = 0.0;
};

template <int D>
KalmanResult<D> kalman_filter(const LinearGaussianModel<D>& m, const std::vector<double>& ys) {
    KalmanResult<D> out;
    Vector<D> x = m.prior.mean;
    Matrix<D> p = m.prior.cov;
    for (double y : ys) {
        x = m.f * x;
        p = m.f * p * m.f.transpose() + m.q;
        const double s = p(0, 0) + m.r;
        const Vector<D> k = p.col(0) / s;
        const double innov = y - x[0];
        out.log_likelihood += -0.5 * (std::log(2 * std::numbers::pi * s) + innov * innov / s);
        x += k * innov;
        p -= k * p.row(0);
        p = (0.5 * (p + p.transpose())).eval();
        out.means.push_back(x);
        out.covs.push_back(p);
    }
    return out;
}

/// Draws a state path and observations from the model.
template <int D>
std::vector<double> simulate_observations(const LinearGaussianModel<D>& m, std::size_t steps, std::uint64_t seed) {
    RandomStream rs(seed, Stream::observation);
    const Matrix<D> lq = psd_factor<D>(m.q);
    const Matrix<D> lp = psd_factor<D>(m.prior.cov);
    Vector<D> z;
    for (int d = 0; d < D; ++d) z[d] = rs.normal();
    Vector<D> x = m.prior.mean + lp * z;
    std::vector<double> ys;
    for (std::size_t k = 0; k < steps; ++k) {
        for (int d = 0; d < D; ++d) z[d] = rs.normal();
        x = m.f * x + lq * z;
        ys.push_back(x[0] + std::sqrt(m.r) * rs.normal());
    }
    return ys;
}

inline LinearGaussianModel<2> reference_linear_model() {
    LinearGaussianModel<2> m;
    m.f << 0.95, 0.2, -0.1, 0.9;
    m.q << 0.3, 0.05, 0.05, 0.2;
    m.r = 0.5;
    m.prior.mean << 1.0, -0.5;
    m.prior.cov << 2.0, 0.3, 0.3, 1.0;
    return m;
}

}  // namespace mlsmc::testing
