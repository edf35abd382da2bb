#pragma once

/// @file expansion.hpp
/// @brief Correction terms of the density expansion around the local Gaussian (Psi_1, Phi_2,
/// Psi^weak), the transition-density schemes I and II, the truncated log map K, and M-fold
/// iterated densities for scalar bias studies.
///
/// Index conventions: rough coordinates come first, smooth ones follow; Hermite polynomials are
/// those of N(0, Sigma_1) evaluated at the normalized residual m.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hypo/core/error.hpp"
#include "hypo/core/small.hpp"
#include "hypo/gauss.hpp"
#include "hypo/hermite.hpp"
#include "hypo/model.hpp"

namespace hypo {

// ---------------------------------------------------------------------------
// Coefficient assembly (scalar-generic)
// ---------------------------------------------------------------------------

/// Coefficient matrix G with Phi_2 = sum_{i1,i2} G_{i1 i2} H_(i1,i2). Blocks RR and SS are not
/// symmetric; G_SR = G_RS^T so each mixed pair is counted from both sides.
template <class T>
SMat<T> g_matrix(const DerivedCoefficients<T>& dc) {
    require_level(dc, dc.d_S > 0 ? 3 : 2, "Phi_2 coefficients");
    const std::size_t dR = dc.d_R, dS = dc.d_S, d = dR + dS;
    SMat<T> G(d, d);
    for (std::size_t i = 0; i < dR; ++i)
        for (std::size_t j = 0; j < dR; ++j) {
            T acc(0.0);
            for (std::size_t k = 0; k < dR; ++k) {
                acc = acc + 0.5 * (dc.hatVk_VR0(i, k) + dc.hatV0_VRk(i, k)) * dc.VR(j, k);
                for (std::size_t k2 = 0; k2 < dR; ++k2)
                    acc = acc + 0.25 * dc.hatVk1_VRk2[k](i, k2) * dc.hatVk1_VRk2[k](j, k2);
            }
            G(i, j) = acc;
        }
    for (std::size_t i = 0; i < dR; ++i)
        for (std::size_t s = 0; s < dS; ++s) {
            T acc(0.0);
            for (std::size_t k = 0; k < dR; ++k) {
                acc = acc + 0.5 * (dc.hatVk_VR0(i, k) / 3.0 + dc.hatV0_VRk(i, k) / 6.0) * dc.hatVk_VS0(s, k);
                acc = acc + dc.VR(i, k) * (dc.hatVk_hatV0_VS0(s, k) + dc.hatV0_hatVk_VS0(s, k)) / 12.0;
                for (std::size_t k2 = 0; k2 < dR; ++k2)
                    acc = acc + dc.hatVk1_VRk2[k](i, k2) * dc.hatVk1_hatVk2_VS0[k](s, k2) / 12.0;
            }
            G(i, dR + s) = acc;
            G(dR + s, i) = acc;
        }
    for (std::size_t s = 0; s < dS; ++s)
        for (std::size_t t = 0; t < dS; ++t) {
            T acc(0.0);
            for (std::size_t k = 0; k < dR; ++k) {
                acc = acc + dc.hatVk_VS0(s, k) *
                                (dc.hatV0_hatVk_VS0(t, k) / 6.0 + dc.hatVk_hatV0_VS0(t, k) / 8.0);
                for (std::size_t k2 = 0; k2 < dR; ++k2)
                    acc = acc + dc.hatVk1_hatVk2_VS0[k](s, k2) * dc.hatVk1_hatVk2_VS0[k](t, k2) / 24.0;
            }
            G(dR + s, dR + t) = acc;
        }
    return G;
}

/// sum_ij G_ij (h_i h_j - S_ij), the contraction with second-order Hermite polynomials.
template <class T>
T contract_hermite2(const SMat<T>& G, const SVec<T>& h1, const SMat<T>& S) {
    T acc(0.0);
    for (std::size_t i = 0; i < G.rows; ++i)
        for (std::size_t j = 0; j < G.cols; ++j) acc = acc + G(i, j) * (h1[i] * h1[j] - S(i, j));
    return acc;
}

/// Phi_2 from its seven sum groups, evaluated term by term against a full H_2 table.
/// Used as an independent check of the G-matrix assembly.
template <class T>
T phi2_groups(const DerivedCoefficients<T>& dc, const SMat<T>& H) {
    require_level(dc, dc.d_S > 0 ? 3 : 2, "Phi_2");
    const std::size_t dR = dc.d_R, dS = dc.d_S;
    T g1(0.0), g2(0.0), g3(0.0), g4(0.0), g5(0.0), g6(0.0), g7(0.0);
    for (std::size_t k = 0; k < dR; ++k)
        for (std::size_t a = 0; a < dR; ++a)
            for (std::size_t b = 0; b < dR; ++b)
                g1 = g1 + (dc.hatVk_VR0(a, k) + dc.hatV0_VRk(a, k)) * dc.VR(b, k) * H(a, b);
    for (std::size_t k1 = 0; k1 < dR; ++k1)
        for (std::size_t k2 = 0; k2 < dR; ++k2)
            for (std::size_t a = 0; a < dR; ++a)
                for (std::size_t b = 0; b < dR; ++b)
                    g2 = g2 + dc.hatVk1_VRk2[k1](a, k2) * dc.hatVk1_VRk2[k1](b, k2) * H(a, b);
    for (std::size_t k = 0; k < dR; ++k)
        for (std::size_t a = 0; a < dR; ++a)
            for (std::size_t s = 0; s < dS; ++s) {
                g3 = g3 + (dc.hatVk_VR0(a, k) / 3.0 + dc.hatV0_VRk(a, k) / 6.0) * dc.hatVk_VS0(s, k) *
                              H(a, dR + s);
                g4 = g4 + dc.VR(a, k) * (dc.hatV0_hatVk_VS0(s, k) + dc.hatVk_hatV0_VS0(s, k)) *
                              H(a, dR + s);
            }
    for (std::size_t k1 = 0; k1 < dR; ++k1)
        for (std::size_t k2 = 0; k2 < dR; ++k2)
            for (std::size_t a = 0; a < dR; ++a)
                for (std::size_t s = 0; s < dS; ++s)
                    g5 = g5 + dc.hatVk1_VRk2[k1](a, k2) * dc.hatVk1_hatVk2_VS0[k1](s, k2) * H(a, dR + s);
    for (std::size_t k = 0; k < dR; ++k)
        for (std::size_t s = 0; s < dS; ++s)
            for (std::size_t t = 0; t < dS; ++t)
                g6 = g6 + dc.hatVk_VS0(s, k) *
                              (dc.hatV0_hatVk_VS0(t, k) / 6.0 + dc.hatVk_hatV0_VS0(t, k) / 8.0) *
                              H(dR + s, dR + t);
    for (std::size_t k1 = 0; k1 < dR; ++k1)
        for (std::size_t k2 = 0; k2 < dR; ++k2)
            for (std::size_t s = 0; s < dS; ++s)
                for (std::size_t t = 0; t < dS; ++t)
                    g7 = g7 + dc.hatVk1_hatVk2_VS0[k1](s, k2) * dc.hatVk1_hatVk2_VS0[k1](t, k2) *
                                  H(dR + s, dR + t);
    return 0.5 * g1 + 0.25 * g2 + g3 + g4 / 6.0 + g5 / 6.0 + g6 + g7 / 24.0;
}

/// Psi_1: sum over (j1, j2, i1) of the leading coefficient times the four-weight contraction
/// with third-order Hermite polynomials.
template <class T>
T psi1_terms(const DerivedCoefficients<T>& dc, const Tensor3<T>& H) {
    require_level(dc, dc.d_S > 0 ? 3 : 2, "Psi_1");
    const std::size_t dR = dc.d_R, dS = dc.d_S, d = dR + dS;
    // a_j(i): V_j^i on rough rows, Vhat_j V_0^i on smooth rows.
    auto a = [&](std::size_t j, std::size_t i) -> T {
        return i < dR ? dc.VR(i, j) : dc.hatVk_VS0(i - dR, j);
    };
    auto weight = [&](std::size_t i2, std::size_t i3) {
        const bool s2 = i2 >= dR, s3 = i3 >= dR;
        if (!s2 && !s3) return 0.5;
        if (s2 && !s3) return 1.0 / 3.0;
        if (!s2 && s3) return 1.0 / 6.0;
        return 0.125;
    };
    T total(0.0);
    for (std::size_t j1 = 0; j1 < dR; ++j1)
        for (std::size_t j2 = 0; j2 < dR; ++j2)
            for (std::size_t i1 = 0; i1 < d; ++i1) {
                const T lead = i1 < dR ? dc.hatVk1_VRk2[j1](i1, j2)
                                       : dc.hatVk1_hatVk2_VS0[j1](i1 - dR, j2) / 3.0;
                if (value_of(lead) == 0.0) continue;
                T inner(0.0);
                for (std::size_t i2 = 0; i2 < d; ++i2)
                    for (std::size_t i3 = 0; i3 < d; ++i3)
                        inner = inner + weight(i2, i3) * a(j1, i2) * a(j2, i3) * H(i1, i2, i3);
                total = total + lead * inner;
            }
    return total;
}

/// Rough-index coefficients of Psi^weak = sqrt(dt) Psi_1w + dt Psi_2w + dt^{3/2} Psi_3w.
template <class T>
struct WeakCoefficients {
    std::size_t d_R = 0;
    SVec<T> c1;        // Psi_3w: 1/2 Vhat_0 V_0^i
    SMat<T> c2;        // Psi_2w: rough block of G
    std::vector<T> c3;  // Psi_1w: (i*dR + j)*dR + k
};

template <class T>
WeakCoefficients<T> weak_coefficients(const DerivedCoefficients<T>& dc) {
    require_level(dc, 2, "Psi^weak");
    const std::size_t dR = dc.d_R;
    WeakCoefficients<T> w;
    w.d_R = dR;
    w.c1 = SVec<T>(dR);
    w.c2 = SMat<T>(dR, dR);
    w.c3.assign(dR * dR * dR, T(0.0));
    for (std::size_t i = 0; i < dR; ++i) w.c1[i] = 0.5 * dc.hatV0_VR0[i];
    for (std::size_t i = 0; i < dR; ++i)
        for (std::size_t j = 0; j < dR; ++j) {
            T acc(0.0);
            for (std::size_t k = 0; k < dR; ++k) {
                acc = acc + 0.5 * (dc.hatVk_VR0(i, k) + dc.hatV0_VRk(i, k)) * dc.VR(j, k);
                for (std::size_t k2 = 0; k2 < dR; ++k2)
                    acc = acc + 0.25 * dc.hatVk1_VRk2[k](i, k2) * dc.hatVk1_VRk2[k](j, k2);
            }
            w.c2(i, j) = acc;
        }
    for (std::size_t k1 = 0; k1 < dR; ++k1)
        for (std::size_t k2 = 0; k2 < dR; ++k2)
            for (std::size_t i = 0; i < dR; ++i) {
                const T lead = 0.5 * dc.hatVk1_VRk2[k1](i, k2);
                if (value_of(lead) == 0.0) continue;
                for (std::size_t j = 0; j < dR; ++j)
                    for (std::size_t k = 0; k < dR; ++k)
                        w.c3[(i * dR + j) * dR + k] =
                            w.c3[(i * dR + j) * dR + k] + lead * dc.VR(j, k1) * dc.VR(k, k2);
            }
    return w;
}

/// The three parts of Psi^weak before scaling by powers of dt.
template <class T>
struct WeakParts {
    T psi1, psi2, psi3;
};

/// Evaluates the parts from h = Sigma_1^{-1} m and S = Sigma_1^{-1}, using rough indices only.
template <class T>
WeakParts<T> weak_parts(const WeakCoefficients<T>& w, const SVec<T>& h, const SMat<T>& S) {
    const std::size_t n = w.d_R;
    WeakParts<T> p{T(0.0), T(0.0), T(0.0)};
    for (std::size_t i = 0; i < n; ++i) p.psi3 = p.psi3 + w.c1[i] * h[i];
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) p.psi2 = p.psi2 + w.c2(i, j) * (h[i] * h[j] - S(i, j));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < n; ++k) {
                const T& c = w.c3[(i * n + j) * n + k];
                if (value_of(c) == 0.0) continue;
                p.psi1 = p.psi1 + c * (h[i] * h[j] * h[k] - S(i, j) * h[k] - S(i, k) * h[j] -
                                       S(j, k) * h[i]);
            }
    return p;
}

template <class T>
T combine_weak(const WeakParts<T>& p, double delta) {
    const double sd = std::sqrt(delta);
    return sd * p.psi1 + delta * p.psi2 + delta * sd * p.psi3;
}

/// K(z) = sum_{l=1}^{6} (-1)^{l+1} z^l / l
template <class T>
T k_trunc(const T& z) {
    // Horner form of z (1 - z (1/2 - z (1/3 - z (1/4 - z (1/5 - z/6))))).
    T r = 0.2 - z / 6.0;
    r = 0.25 - z * r;
    r = 1.0 / 3.0 - z * r;
    r = 0.5 - z * r;
    r = 1.0 - z * r;
    return z * r;
}

// ---------------------------------------------------------------------------
// Runtime interface
// ---------------------------------------------------------------------------

/// @brief Correction terms at one (Delta, x, y, theta).
struct CorrectionTerms {
    double psi1 = 0.0;
    double phi2 = 0.0;
    double psi_weak = 0.0;
    Eigen::MatrixXd g_matrix;
};

namespace detail {

inline SMat<double> to_small(const Eigen::MatrixXd& A) {
    SMat<double> out(static_cast<std::size_t>(A.rows()), static_cast<std::size_t>(A.cols()));
    for (Eigen::Index j = 0; j < A.cols(); ++j)
        for (Eigen::Index i = 0; i < A.rows(); ++i)
            out(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = A(i, j);
    return out;
}

inline void check_point(const Model& model, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    if (static_cast<std::size_t>(x.size()) != model.dim() ||
        static_cast<std::size_t>(y.size()) != model.dim())
        throw DimensionError("state has wrong dimension for model '" + model.name() + "'");
}

}  // namespace detail

/// Hermite context (Sigma_1^{-1}, m) for the transition x -> y.
inline HermiteContext<double> transition_context(const GaussianMoments& g, const Eigen::VectorXd& y) {
    HermiteContext<double> c;
    c.sigma1_inv = detail::to_small(g.sigma1_inv);
    c.m = normalized_residual(from_eigen(g.mu), y.data(), g.d_R, g.delta);
    return c;
}

inline CorrectionTerms correction_terms(const Model& model, const Eigen::VectorXd& x,
                                        const Theta& theta, double delta, const Eigen::VectorXd& y,
                                        const GaussOptions& opt = {}) {
    detail::check_point(model, x, y);
    const auto dc = derived_coefficients(model, x, theta);
    const GaussianMoments g = lg_moments(dc, x, delta, opt);
    const HermiteContext<double> c = transition_context(g, y);
    const SVec<double> h1 = hermite1(c);
    CorrectionTerms out;
    const SMat<double> G = g_matrix(dc);
    out.g_matrix = to_eigen(G);
    out.phi2 = contract_hermite2(G, h1, c.sigma1_inv);
    out.psi1 = psi1_terms(dc, hermite3(c, h1));
    out.psi_weak = combine_weak(weak_parts(weak_coefficients(dc), h1, c.sigma1_inv), delta);
    return out;
}

inline double psi1(const Model& model, const Eigen::VectorXd& x, const Theta& theta, double delta,
                   const Eigen::VectorXd& y) {
    detail::check_point(model, x, y);
    const auto dc = derived_coefficients(model, x, theta);
    const HermiteContext<double> c = transition_context(lg_moments(dc, x, delta), y);
    return psi1_terms(dc, hermite3(c));
}

/// Phi_2; for elliptic models this is Phi_{e,2} (only the rough-rough groups exist).
inline double phi2(const Model& model, const Eigen::VectorXd& x, const Theta& theta, double delta,
                   const Eigen::VectorXd& y) {
    detail::check_point(model, x, y);
    const auto dc = derived_coefficients(model, x, theta);
    const HermiteContext<double> c = transition_context(lg_moments(dc, x, delta), y);
    return contract_hermite2(g_matrix(dc), hermite1(c), c.sigma1_inv);
}

/// Phi_2 through the SDHS simplification. The local Gaussian mean and Sigma_1 are rebuilt from the
/// drift and the SDHS view alone, without derived coefficients.
inline double phi2_sdhs(const Model& model, const Eigen::VectorXd& x, const Theta& theta,
                        double delta, const Eigen::VectorXd& y) {
    detail::check_point(model, x, y);
    if (!model.is_sdhs()) throw CapabilityError("model '" + model.name() + "' is not SDHS-structured");
    const SdhsView v = model.sdhs(x.data(), theta.data());
    const Eigen::Index n = v.sigma.size();
    const auto c = eval_coefficients(model, x, theta);
    Eigen::VectorXd mu(2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        mu[i] = x[i] + c.drift[i] * delta;
        mu[n + i] = x[n + i] + x[i] * delta + c.drift[i] * (0.5 * delta * delta);
    }
    const auto [S, logdet] = sdhs_sigma1_inverse(v.sigma);
    (void)logdet;
    Eigen::VectorXd m(2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        m[i] = (y[i] - mu[i]) / std::sqrt(delta);
        m[n + i] = (y[n + i] - mu[n + i]) / (delta * std::sqrt(delta));
    }
    const Eigen::VectorXd h = S * m;
    auto H = [&](Eigen::Index a, Eigen::Index b) { return h[a] * h[b] - S(a, b); };
    double acc = 0.0;
    for (Eigen::Index i1 = 0; i1 < n; ++i1)
        for (Eigen::Index i2 = 0; i2 < n; ++i2) {
            const double w = v.c(i1, i2) * v.sigma[i2] * v.sigma[i2];
            if (w == 0.0) continue;
            acc += w * (0.5 * H(i1, i2) + H(i1, i2 + n) / 3.0 + H(i1 + n, i2) / 6.0 +
                        0.125 * H(i1 + n, i2 + n));
        }
    return -acc;
}

inline double psi_weak(const Model& model, const Eigen::VectorXd& x, const Theta& theta,
                       double delta, const Eigen::VectorXd& y) {
    detail::check_point(model, x, y);
    const auto dc = derived_coefficients(model, x, theta);
    const HermiteContext<double> c = transition_context(lg_moments(dc, x, delta), y);
    return combine_weak(weak_parts(weak_coefficients(dc), hermite1(c), c.sigma1_inv), delta);
}

/// @brief One-step density machinery precomputed at a source state; evaluation at many targets
/// does not allocate.
class LocalExpansion {
public:
    LocalExpansion(const DerivedCoefficients<double>& dc, const Eigen::VectorXd& x, double delta,
                   const GaussOptions& opt = {})
        : delta_(delta), d_R_(dc.d_R), weak_(weak_coefficients(dc)) {
        const GaussianMoments g = lg_moments(dc, x, delta, opt);
        mu_ = from_eigen(g.mu);
        S_ = detail::to_small(g.sigma1_inv);
        L1_ = detail::to_small(g.chol1);
        log_norm_ = -0.5 * (static_cast<double>(g.dim()) * kLog2Pi + g.logdet_sigma1) -
                    0.5 * static_cast<double>(g.d_R + 3 * g.d_S) * std::log(delta);
    }

    LocalExpansion(const Model& model, const Eigen::VectorXd& x, const Theta& theta, double delta,
                   const GaussOptions& opt = {})
        : LocalExpansion(derived_coefficients(model, x, theta), x, delta, opt) {}

    std::size_t dim() const { return mu_.size(); }

    /// Local Gaussian log-density at y.
    double log_lg(const double* y) const {
        const SVec<double> m = normalized_residual(mu_, y, d_R_, delta_);
        return log_norm_ - 0.5 * quad(m);
    }

    double psi_weak(const double* y) const {
        const SVec<double> m = normalized_residual(mu_, y, d_R_, delta_);
        return combine_weak(weak_parts(weak_, h1(m), S_), delta_);
    }

    /// p^LG (1 + Psi^weak); may be negative.
    double density_I(const double* y) const {
        const SVec<double> m = normalized_residual(mu_, y, d_R_, delta_);
        const double psi = combine_weak(weak_parts(weak_, h1(m), S_), delta_);
        return std::exp(log_norm_ - 0.5 * quad(m)) * (1.0 + psi);
    }

    /// log p^LG + K(Psi^weak)
    double log_density_II(const double* y) const {
        const SVec<double> m = normalized_residual(mu_, y, d_R_, delta_);
        const double psi = combine_weak(weak_parts(weak_, h1(m), S_), delta_);
        return log_norm_ - 0.5 * quad(m) + k_trunc(psi);
    }

    double density_II(const double* y) const { return std::exp(log_density_II(y)); }

    const SVec<double>& mean() const { return mu_; }

private:
    SVec<double> h1(const SVec<double>& m) const {
        SVec<double> h(m.size());
        for (std::size_t i = 0; i < m.size(); ++i)
            for (std::size_t j = 0; j < m.size(); ++j) h[i] += S_(i, j) * m[j];
        return h;
    }
    /// m^T Sigma_1^{-1} m through the Cholesky factor.
    double quad(const SVec<double>& m) const {
        double s = 0.0;
        SVec<double> z(m.size());
        for (std::size_t i = 0; i < m.size(); ++i) {
            double v = m[i];
            for (std::size_t k = 0; k < i; ++k) v -= L1_(i, k) * z[k];
            z[i] = v / L1_(i, i);
            s += z[i] * z[i];
        }
        return s;
    }

    double delta_;
    std::size_t d_R_;
    WeakCoefficients<double> weak_;
    SVec<double> mu_;
    SMat<double> S_;
    SMat<double> L1_;
    double log_norm_ = 0.0;
};

inline double density_scheme_I(const Model& model, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& y, const Theta& theta, double delta) {
    detail::check_point(model, x, y);
    return LocalExpansion(model, x, theta, delta).density_I(y.data());
}

inline double log_density_scheme_II(const Model& model, const Eigen::VectorXd& x,
                                    const Eigen::VectorXd& y, const Theta& theta, double delta) {
    detail::check_point(model, x, y);
    return LocalExpansion(model, x, theta, delta).log_density_II(y.data());
}

inline double density_scheme_II(const Model& model, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& y, const Theta& theta, double delta) {
    return std::exp(log_density_scheme_II(model, x, y, theta, delta));
}

// ---------------------------------------------------------------------------
// One-step bases and iterated densities (scalar models)
// ---------------------------------------------------------------------------

/// Euler-Maruyama (the local Gaussian for elliptic models), scheme I, or scheme II.
enum class DensityBase { euler, scheme_I, scheme_II };

inline std::string to_string(DensityBase b) {
    switch (b) {
        case DensityBase::euler: return "em";
        case DensityBase::scheme_I: return "I";
        case DensityBase::scheme_II: return "II";
    }
    return "?";
}

inline DensityBase parse_density_base(const std::string& s) {
    if (s == "em" || s == "EM" || s == "euler") return DensityBase::euler;
    if (s == "I" || s == "i" || s == "1") return DensityBase::scheme_I;
    if (s == "II" || s == "ii" || s == "2") return DensityBase::scheme_II;
    throw InvalidArgument("unknown density base '" + s + "' (expected em, I or II)");
}

inline double evaluate_base(const LocalExpansion& e, DensityBase base, const double* y) {
    switch (base) {
        case DensityBase::euler: return std::exp(e.log_lg(y));
        case DensityBase::scheme_I: return e.density_I(y);
        case DensityBase::scheme_II: return e.density_II(y);
    }
    return 0.0;
}

struct QuadratureOptions {
    std::size_t grid_points = 2001;
    double width_sd = 8.0;  // half-width of each stage grid in marginal standard deviations
    double kernel_sd = 14.0;  // transitions are skipped beyond this many one-step sds
};

/// Trapezoid weights on a uniform grid.
inline std::vector<double> trapezoid_weights(std::size_t n, double h) {
    std::vector<double> w(n, h);
    if (n > 0) w.front() = w.back() = 0.5 * h;
    return w;
}

/// integral of phi(y) times the one-step base density from x, by the trapezoid rule on
/// mean +- width_sd * sqrt(Sigma) (scalar models).
template <class Phi>
double integrate_one_step(const Model& model, double x, const Theta& theta, double delta,
                          DensityBase base, Phi&& phi, const QuadratureOptions& opt = {}) {
    if (model.dim() != 1) throw DimensionError("integrate_one_step: scalar models only");
    const Eigen::VectorXd xv = Eigen::VectorXd::Constant(1, x);
    const auto dc = derived_coefficients(model, xv, theta);
    const LocalExpansion e(dc, xv, delta);
    const GaussianMoments g = lg_moments(dc, xv, delta);
    const double sd = std::sqrt(g.sigma(0, 0)), lo = g.mu[0] - opt.width_sd * sd;
    const std::size_t n = opt.grid_points;
    const double h = 2.0 * opt.width_sd * sd / static_cast<double>(n - 1);
    const auto w = trapezoid_weights(n, h);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double y = lo + h * static_cast<double>(i);
        acc += w[i] * phi(y) * evaluate_base(e, base, &y);
    }
    return acc;
}

/// M-fold convolution of one-step densities with step Delta / M, evaluated at each target y.
/// Each intermediate stage lives on its own uniform grid centred on the stage mean with
/// half-width width_sd marginal standard deviations; the moments are propagated by quadrature.
inline std::vector<double> iterated_density(const Model& model, double x, const std::vector<double>& ys,
                                            const Theta& theta, double Delta, std::size_t M,
                                            DensityBase base, const QuadratureOptions& opt = {}) {
    if (model.dim() != 1) throw DimensionError("iterated_density: scalar elliptic models only");
    if (M == 0) throw InvalidArgument("iterated_density: M must be at least 1");
    if (opt.grid_points < 3) throw InvalidArgument("iterated_density: grid needs at least 3 points");
    const double dt = Delta / static_cast<double>(M);
    auto expansion_at = [&](double u) {
        const Eigen::VectorXd uv = Eigen::VectorXd::Constant(1, u);
        return LocalExpansion(model, uv, theta, dt);
    };

    std::vector<double> out(ys.size());
    const LocalExpansion e0 = expansion_at(x);
    if (M == 1) {
        for (std::size_t j = 0; j < ys.size(); ++j) out[j] = evaluate_base(e0, base, &ys[j]);
        return out;
    }

    const std::size_t n = opt.grid_points;
    std::vector<double> grid(n), f(n), g_next(n);
    std::vector<LocalExpansion> sources;
    sources.reserve(n);

    // Stage one: the one-step density from x.
    auto make_grid = [&](double mean, double var) {
        const double sd = std::sqrt(std::max(var, 1e-300));
        const double lo = mean - opt.width_sd * sd, h = 2.0 * opt.width_sd * sd / static_cast<double>(n - 1);
        for (std::size_t i = 0; i < n; ++i) grid[i] = lo + h * static_cast<double>(i);
        return h;
    };
    {
        const Eigen::VectorXd xv = Eigen::VectorXd::Constant(1, x);
        const GaussianMoments g = lg_moments(model, xv, theta, dt);
        make_grid(g.mu[0], g.sigma(0, 0));
    }
    for (std::size_t i = 0; i < n; ++i) f[i] = evaluate_base(e0, base, &grid[i]);

    for (std::size_t stage = 1; stage < M; ++stage) {
        const double h = grid[1] - grid[0];
        const auto w = trapezoid_weights(n, h);
        sources.clear();
        std::vector<double> centre(n), reach(n);
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sources.push_back(expansion_at(grid[i]));
            // Moments of one Euler step from the current stage, used to place the next grid.
            const Eigen::VectorXd uv = Eigen::VectorXd::Constant(1, grid[i]);
            const auto c = eval_coefficients(model, uv, theta);
            const double mean = grid[i] + c.drift[0] * dt;
            const double var = c.diffusion(0, 0) * c.diffusion(0, 0) * dt;
            m1 += w[i] * f[i] * mean;
            m2 += w[i] * f[i] * (var + mean * mean);
            centre[i] = sources.back().mean()[0];
            reach[i] = opt.kernel_sd * std::sqrt(var);
        }
        std::vector<double> wf(n);
        for (std::size_t i = 0; i < n; ++i) wf[i] = w[i] * f[i];
        if (stage + 1 == M) {
            for (std::size_t j = 0; j < ys.size(); ++j) {
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i)
                    if (wf[i] != 0.0 && std::abs(ys[j] - centre[i]) <= reach[i])
                        acc += wf[i] * evaluate_base(sources[i], base, &ys[j]);
                out[j] = acc;
            }
            break;
        }
        make_grid(m1, m2 - m1 * m1);
        std::fill(g_next.begin(), g_next.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            if (wf[i] == 0.0) continue;
            // The new grid is sorted, so each source touches one contiguous run of targets.
            auto lo = std::lower_bound(grid.begin(), grid.end(), centre[i] - reach[i]);
            auto hi = std::upper_bound(lo, grid.end(), centre[i] + reach[i]);
            for (auto it = lo; it != hi; ++it)
                g_next[static_cast<std::size_t>(it - grid.begin())] += wf[i] * evaluate_base(sources[i], base, &*it);
        }
        f.swap(g_next);
    }
    return out;
}

inline double iterated_density(const Model& model, double x, double y, const Theta& theta,
                               double Delta, std::size_t M, DensityBase base,
                               const QuadratureOptions& opt = {}) {
    return iterated_density(model, x, std::vector<double>{y}, theta, Delta, M, base, opt).front();
}

/// Exact OU transition density: N(mu + (x - mu) e^{-kappa t}, sigma^2 (1 - e^{-2 kappa t}) / (2 kappa)).
inline double ou_transition_density(double kappa, double mu, double sigma, double x, double y, double t) {
    const double m = mu + (x - mu) * std::exp(-kappa * t);
    const double v = sigma * sigma * (1.0 - std::exp(-2.0 * kappa * t)) / (2.0 * kappa);
    return std::exp(-0.5 * (y - m) * (y - m) / v) / std::sqrt(2.0 * M_PI * v);
}

/// Least-squares slope of -log(err) against log(M): the empirical order in 1 / M.
inline double fit_order(const std::vector<std::size_t>& Ms, const std::vector<double>& errs) {
    if (Ms.size() != errs.size() || Ms.size() < 2) throw InvalidArgument("fit_order: need matching sizes, at least two");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(Ms.size());
    for (std::size_t i = 0; i < Ms.size(); ++i) {
        const double a = std::log(static_cast<double>(Ms[i])), b = -std::log(errs[i]);
        sx += a;
        sy += b;
        sxx += a * a;
        sxy += a * b;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

struct DensityBiasRow {
    std::size_t M = 0;
    double sup_I = 0.0;
    double sup_II = 0.0;
    double sup_EM = 0.0;
};

struct DensityBiasTable {
    std::vector<DensityBiasRow> rows;
    double order_I = 0.0;
    double order_II = 0.0;
    double order_EM = 0.0;
};

/// Sup over `ys` of |iterated density - exact OU transition| from x over Delta, per M and base.
inline DensityBiasTable ou_density_bias(const Model& ou, const Theta& theta, double x, double Delta,
                                        const std::vector<std::size_t>& Ms, const std::vector<double>& ys,
                                        const QuadratureOptions& opt = {}) {
    if (ou.name() != "ou") throw InvalidArgument("ou_density_bias: needs the OU model");
    const double kappa = theta.at("kappa"), mu = theta.at("mu"), sigma = theta.at("sigma");
    DensityBiasTable t;
    std::vector<double> eI, eII, eEM;
    for (std::size_t M : Ms) {
        DensityBiasRow r;
        r.M = M;
        for (auto [base, dst] : {std::pair{DensityBase::scheme_I, &r.sup_I}, std::pair{DensityBase::scheme_II, &r.sup_II},
                                 std::pair{DensityBase::euler, &r.sup_EM}}) {
            const auto p = iterated_density(ou, x, ys, theta, Delta, M, base, opt);
            double e = 0.0;
            for (std::size_t j = 0; j < ys.size(); ++j)
                e = std::max(e, std::abs(p[j] - ou_transition_density(kappa, mu, sigma, x, ys[j], Delta)));
            *dst = e;
        }
        eI.push_back(r.sup_I);
        eII.push_back(r.sup_II);
        eEM.push_back(r.sup_EM);
        t.rows.push_back(r);
    }
    if (Ms.size() >= 2) {
        t.order_I = fit_order(Ms, eI);
        t.order_II = fit_order(Ms, eII);
        t.order_EM = fit_order(Ms, eEM);
    }
    return t;
}

}  // namespace hypo
