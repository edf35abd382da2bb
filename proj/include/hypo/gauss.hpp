#pragma once

/// @file gauss.hpp
/// @brief Local Gaussian moments mu(Delta, x), Sigma(Delta, x), the unit-time covariance Sigma_1,
/// its factorization, the normalized residual, and the local Gaussian log-density.

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "hypo/core/error.hpp"
#include "hypo/core/small.hpp"
#include "hypo/core/var.hpp"
#include "hypo/model.hpp"

namespace hypo {

// ---------------------------------------------------------------------------
// Scalar-generic building blocks
// ---------------------------------------------------------------------------

/// Local Gaussian mean: rough x_R + V_R0 dt; smooth x_S + V_S0 dt + Vhat_0 V_S0 dt^2 / 2.
template <class T>
SVec<T> lg_mean(const DerivedCoefficients<T>& dc, const T* x, double delta) {
    const std::size_t dR = dc.d_R, dS = dc.d_S;
    SVec<T> mu(dR + dS);
    for (std::size_t i = 0; i < dR; ++i) mu[i] = x[i] + dc.VR0[i] * delta;
    if (dS > 0) require_level(dc, 2, "local Gaussian mean");
    for (std::size_t s = 0; s < dS; ++s)
        mu[dR + s] = x[dR + s] + dc.VS0[s] * delta + dc.hatV0_VS0[s] * (0.5 * delta * delta);
    return mu;
}

/// Local Gaussian covariance Sigma(Delta), assembled block by block.
template <class T>
SMat<T> lg_covariance(const DerivedCoefficients<T>& dc, double delta) {
    const std::size_t dR = dc.d_R, dS = dc.d_S, d = dR + dS;
    SMat<T> S(d, d);
    const double c_rr = delta, c_rs = 0.5 * delta * delta, c_ss = delta * delta * delta / 3.0;
    for (std::size_t k = 0; k < dR; ++k) {
        for (std::size_t i = 0; i < dR; ++i)
            for (std::size_t j = 0; j < dR; ++j) S(i, j) = S(i, j) + c_rr * dc.VR(i, k) * dc.VR(j, k);
        for (std::size_t i = 0; i < dR; ++i)
            for (std::size_t s = 0; s < dS; ++s) {
                const T v = c_rs * dc.VR(i, k) * dc.hatVk_VS0(s, k);
                S(i, dR + s) = S(i, dR + s) + v;
                S(dR + s, i) = S(dR + s, i) + v;
            }
        for (std::size_t s = 0; s < dS; ++s)
            for (std::size_t t = 0; t < dS; ++t)
                S(dR + s, dR + t) = S(dR + s, dR + t) + c_ss * dc.hatVk_VS0(s, k) * dc.hatVk_VS0(t, k);
    }
    return S;
}

/// Lower Cholesky factor; throws SpdError at the first non-positive pivot.
template <class T>
SMat<T> cholesky(const SMat<T>& A, double jitter = 0.0) {
    using std::sqrt;
    const std::size_t n = A.rows;
    SMat<T> L(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        T diag = A(j, j) + jitter;
        for (std::size_t k = 0; k < j; ++k) diag = diag - L(j, k) * L(j, k);
        const double pv = value_of(diag);
        if (!(pv > 0.0) || !std::isfinite(pv))
            throw SpdError("Cholesky factorization failed at pivot " + std::to_string(j) +
                               " (value " + std::to_string(pv) + ")",
                           j, pv);
        L(j, j) = sqrt(diag);
        for (std::size_t i = j + 1; i < n; ++i) {
            T acc = A(i, j);
            for (std::size_t k = 0; k < j; ++k) acc = acc - L(i, k) * L(j, k);
            L(i, j) = acc / L(j, j);
        }
    }
    return L;
}

/// Solves L L^T z = b.
template <class T>
SVec<T> chol_solve(const SMat<T>& L, const SVec<T>& b) {
    const std::size_t n = L.rows;
    SVec<T> z = b;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < i; ++k) z[i] = z[i] - L(i, k) * z[k];
        z[i] = z[i] / L(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
        for (std::size_t k = ii + 1; k < n; ++k) z[ii] = z[ii] - L(k, ii) * z[k];
        z[ii] = z[ii] / L(ii, ii);
    }
    return z;
}

/// log|A| from its Cholesky factor.
template <class T>
T chol_logdet(const SMat<T>& L) {
    using std::log;
    T s(0.0);
    for (std::size_t i = 0; i < L.rows; ++i) s = s + log(L(i, i));
    return 2.0 * s;
}

/// A^{-1} from its Cholesky factor.
template <class T>
SMat<T> chol_inverse(const SMat<T>& L) {
    const std::size_t n = L.rows;
    SMat<T> inv(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        SVec<T> e(n);
        e[j] = T(1.0);
        const SVec<T> c = chol_solve(L, e);
        for (std::size_t i = 0; i < n; ++i) inv(i, j) = c[i];
    }
    return inv;
}

/// Normalized residual m: rough (y - mu) / sqrt(dt), smooth (y - mu) / dt^{3/2}.
template <class T, class Y>
SVec<T> normalized_residual(const SVec<T>& mu, const Y* y, std::size_t d_R, double delta) {
    const double sr = 1.0 / std::sqrt(delta), ss = 1.0 / (delta * std::sqrt(delta));
    SVec<T> m(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) m[i] = (y[i] - mu[i]) * (i < d_R ? sr : ss);
    return m;
}

// ---------------------------------------------------------------------------
// Runtime interface
// ---------------------------------------------------------------------------

/// @brief Local Gaussian moments at one (Delta, x, theta).
struct GaussianMoments {
    double delta = 0.0;
    std::size_t d_R = 0;
    std::size_t d_S = 0;
    Eigen::VectorXd mu;
    Eigen::MatrixXd sigma;
    Eigen::MatrixXd sigma1;
    Eigen::MatrixXd sigma1_inv;
    double logdet_sigma1 = 0.0;
    Eigen::MatrixXd chol;   // lower factor of sigma
    Eigen::MatrixXd chol1;  // lower factor of sigma1

    std::size_t dim() const { return d_R + d_S; }
    /// D_Delta = diag(sqrt(Delta) I_R, Delta^{3/2} I_S)
    Eigen::VectorXd scaling() const {
        Eigen::VectorXd s(static_cast<Eigen::Index>(dim()));
        for (std::size_t i = 0; i < dim(); ++i)
            s[static_cast<Eigen::Index>(i)] = i < d_R ? std::sqrt(delta) : delta * std::sqrt(delta);
        return s;
    }
};

struct GaussOptions {
    double jitter = 0.0;  // added to the diagonal of Sigma_1 (and D Sigma_1 D); 0 means hard failure
};

/// Moments from precomputed derived coefficients.
inline GaussianMoments lg_moments(const DerivedCoefficients<double>& dc, const Eigen::VectorXd& x,
                                  double delta, const GaussOptions& opt = {}) {
    if (!(delta > 0.0)) throw InvalidArgument("lg_moments: step size must be positive");
    GaussianMoments g;
    g.delta = delta;
    g.d_R = dc.d_R;
    g.d_S = dc.d_S;
    g.mu = to_eigen(lg_mean(dc, x.data(), delta));
    SMat<double> S = lg_covariance(dc, delta);
    SMat<double> S1 = lg_covariance(dc, 1.0);
    if (opt.jitter > 0.0)
        for (std::size_t i = 0; i < g.dim(); ++i) {
            const double di = i < g.d_R ? delta : delta * delta * delta;
            S1(i, i) += opt.jitter;
            S(i, i) += opt.jitter * di;
        }
    const SMat<double> L = cholesky(S);
    const SMat<double> L1 = cholesky(S1);
    g.sigma = to_eigen(S);
    g.sigma1 = to_eigen(S1);
    g.chol = to_eigen(L);
    g.chol1 = to_eigen(L1);
    g.sigma1_inv = to_eigen(chol_inverse(L1));
    g.logdet_sigma1 = chol_logdet(L1);
    return g;
}

/// Moments mu(Delta, x; theta), Sigma(Delta, x; theta) and Sigma_1(x; theta).
inline GaussianMoments lg_moments(const Model& model, const Eigen::VectorXd& x, const Theta& theta,
                                  double delta, const GaussOptions& opt = {}) {
    return lg_moments(derived_coefficients(model, x, theta), x, delta, opt);
}

inline Eigen::VectorXd normalized_residual(const GaussianMoments& g, const Eigen::VectorXd& /*x*/,
                                           const Eigen::VectorXd& y, double delta) {
    if (static_cast<std::size_t>(y.size()) != g.dim())
        throw DimensionError("normalized_residual: wrong dimension");
    return to_eigen(normalized_residual(from_eigen(g.mu), y.data(), g.d_R, delta));
}

inline constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)

/// Gaussian log-density with mean mu and covariance Sigma, via the Cholesky factor of Sigma.
inline double lg_logdensity(const GaussianMoments& g, const Eigen::VectorXd& y) {
    const Eigen::VectorXd r = y - g.mu;
    const Eigen::VectorXd z = g.chol.triangularView<Eigen::Lower>().solve(r);
    const double logdet = 2.0 * g.chol.diagonal().array().log().sum();
    return -0.5 * (static_cast<double>(g.dim()) * kLog2Pi + logdet + z.squaredNorm());
}

/// Same density through Sigma_1 and the normalized residual (change of variables).
inline double lg_logdensity_unit(const GaussianMoments& g, const Eigen::VectorXd& y) {
    const Eigen::VectorXd m = normalized_residual(g, g.mu, y, g.delta);
    const Eigen::VectorXd z = g.chol1.triangularView<Eigen::Lower>().solve(m);
    const double log_jac = 0.5 * static_cast<double>(g.d_R + 3 * g.d_S) * std::log(g.delta);
    return -0.5 * (static_cast<double>(g.dim()) * kLog2Pi + g.logdet_sigma1 + z.squaredNorm()) -
           log_jac;
}

/// Closed-form Sigma_1^{-1} and log|Sigma_1| for SDHS models (V_R = diag(sigma), dX_S = X_R dt):
/// Sigma_1 = [[Xi, Xi/2], [Xi/2, Xi/3]] with Xi = diag(sigma^2).
inline std::pair<Eigen::MatrixXd, double> sdhs_sigma1_inverse(const Eigen::VectorXd& sigma) {
    const Eigen::Index n = sigma.size();
    Eigen::MatrixXd inv = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double s2 = sigma[i] * sigma[i];
        inv(i, i) = 4.0 / s2;
        inv(i, n + i) = inv(n + i, i) = -6.0 / s2;
        inv(n + i, n + i) = 12.0 / s2;
        logdet += 2.0 * std::log(s2) - std::log(12.0);
    }
    return {inv, logdet};
}

}  // namespace hypo
