#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "hypo/model.hpp"

namespace hypo::test {

/// Flattened Vhat-compositions grouped by field, up to the given level.
inline std::vector<std::vector<double>> fields(const DerivedCoefficients<double>& dc, int level) {
    std::vector<std::vector<double>> out;
    auto vec = [&](const SVec<double>& v) { out.emplace_back(v.begin(), v.end()); };
    auto mat = [&](const SMat<double>& m) {
        out.emplace_back(m.data.begin(), m.data.begin() + static_cast<long>(m.rows * m.cols));
    };
    vec(dc.VR0);
    vec(dc.VS0);
    mat(dc.VR);
    mat(dc.hatVk_VR0);
    mat(dc.hatVk_VS0);
    for (std::size_t k = 0; k < dc.d_R; ++k) mat(dc.hatVk1_VRk2[k]);
    if (level >= 2) {
        vec(dc.hatV0_VR0);
        mat(dc.hatV0_VRk);
        vec(dc.hatV0_VS0);
        for (std::size_t k = 0; k < dc.d_R; ++k) mat(dc.hatVk1_hatVk2_VS0[k]);
    }
    if (level >= 3) {
        mat(dc.hatV0_hatVk_VS0);
        mat(dc.hatVk_hatV0_VS0);
    }
    return out;
}

/// Largest field-wise relative discrepancy: max |a - b| / max(1, max |a|) over each field.
inline double max_field_rel_error(const DerivedCoefficients<double>& a,
                                  const DerivedCoefficients<double>& b, int level) {
    const auto fa = fields(a, level);
    const auto fb = fields(b, level);
    double worst = 0.0;
    for (std::size_t f = 0; f < fa.size(); ++f) {
        double scale = 1.0;
        for (double v : fa[f]) scale = std::max(scale, std::abs(v));
        for (std::size_t i = 0; i < fa[f].size(); ++i)
            worst = std::max(worst, std::abs(fa[f][i] - fb[f][i]) / scale);
    }
    return worst;
}

}  // namespace hypo::test

// ---------------------------------------------------------------------------
// Exact Gaussian propagation for linear models (drift F x + f, constant diffusion)
// ---------------------------------------------------------------------------

#include <unsupported/Eigen/MatrixFunctions>

#include "hypo/scheme.hpp"

namespace hypo::test {

struct GaussianState {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

/// One scheme step written as x' = A x + b + C z for standard normals z.
struct AffineStep {
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
    Eigen::MatrixXd C;
};

inline VariateBundle<double> bundle_from(const Model& m, Scheme s, double delta,
                                         const std::vector<double>& z) {
    return scheme_uses_hypo_bundle(s, m.is_hypoelliptic())
               ? hypo_bundle<double>(delta, m.rough_dim(), z.data())
               : elliptic_bundle<double>(delta, m.rough_dim(), z.data());
}

inline std::size_t normals_for(const Model& m, Scheme s) {
    return normals_per_step(m.rough_dim(), scheme_uses_hypo_bundle(s, m.is_hypoelliptic()));
}

/// Reads off (A, b, C) by evaluating the stepper at the origin and at unit inputs.
inline AffineStep affine_step(const Model& m, Scheme s, const Theta& th, double delta) {
    const auto d = static_cast<Eigen::Index>(m.dim());
    const std::size_t nz = normals_for(m, s);
    std::vector<double> z(nz, 0.0);
    AffineStep a;
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(d);
    a.b = step(m, s, zero, th, delta, bundle_from(m, s, delta, z));
    a.A.resize(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        a.A.col(i) = step(m, s, Eigen::VectorXd::Unit(d, i), th, delta, bundle_from(m, s, delta, z)) - a.b;
    a.C.resize(d, static_cast<Eigen::Index>(nz));
    for (std::size_t j = 0; j < nz; ++j) {
        z.assign(nz, 0.0);
        z[j] = 1.0;
        a.C.col(static_cast<Eigen::Index>(j)) = step(m, s, zero, th, delta, bundle_from(m, s, delta, z)) - a.b;
    }
    return a;
}

inline GaussianState propagate(const AffineStep& a, GaussianState g, std::size_t n_steps) {
    for (std::size_t n = 0; n < n_steps; ++n) {
        g.mean = a.A * g.mean + a.b;
        g.cov = a.A * g.cov * a.A.transpose() + a.C * a.C.transpose();
    }
    return g;
}

/// Exact law of X_T from x0 for a linear model: mean by the augmented exponential, covariance
/// by Van Loan's block exponential.
inline GaussianState exact_linear(const Model& m, const Theta& th, const Eigen::VectorXd& x0, double T) {
    const auto d = static_cast<Eigen::Index>(m.dim());
    const auto dR = static_cast<Eigen::Index>(m.rough_dim());
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(d);
    const auto c0 = eval_coefficients(m, zero, th);
    Eigen::MatrixXd F(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        F.col(i) = eval_coefficients(m, Eigen::VectorXd::Unit(d, i), th).drift - c0.drift;
    Eigen::MatrixXd Gm = Eigen::MatrixXd::Zero(d, dR);
    Gm.topRows(dR) = c0.diffusion;

    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(d + 1, d + 1);
    aug.topLeftCorner(d, d) = F * T;
    aug.topRightCorner(d, 1) = c0.drift * T;
    const Eigen::MatrixXd E = aug.exp();
    GaussianState g;
    g.mean = E.topLeftCorner(d, d) * x0 + E.topRightCorner(d, 1);

    Eigen::MatrixXd vl = Eigen::MatrixXd::Zero(2 * d, 2 * d);
    vl.topLeftCorner(d, d) = -F * T;
    vl.topRightCorner(d, d) = Gm * Gm.transpose() * T;
    vl.bottomRightCorner(d, d) = F.transpose() * T;
    const Eigen::MatrixXd V = vl.exp();
    g.cov = V.bottomRightCorner(d, d).transpose() * V.topRightCorner(d, d);
    return g;
}

/// E[Y^p] for Y ~ N(m, v), p in {1, 2, 4}.
inline double gaussian_moment(double m, double v, int p) {
    switch (p) {
        case 1: return m;
        case 2: return m * m + v;
        case 4: return m * m * m * m + 6 * m * m * v + 3 * v * v;
    }
    return std::nan("");
}

/// Least-squares slope of log(err) against log(h).
inline double loglog_slope(const std::vector<double>& h, const std::vector<double>& err) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) {
        const double x = std::log(h[i]), y = std::log(err[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace hypo::test
