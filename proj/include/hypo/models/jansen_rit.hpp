#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hypo/model.hpp"

namespace hypo::models {

/// @brief Stochastic Jansen-Rit neural mass model (d_R = d_S = 3):
///   dX_R = (-Gamma^2 X_S - 2 Gamma X_R + G(X_S)) dt + diag(sigma) dB,  dX_S = X_R dt,
/// with Gamma = diag(a, a, b) and sigmoid S(z) = nu_max / (1 + exp(r (nu0 - z))).
/// State layout: x = (x_R^1, x_R^2, x_R^3, x_S^1, x_S^2, x_S^3).
struct JansenRit {
    static constexpr std::size_t kRough = 3;
    static constexpr std::size_t kSmooth = 3;
    static constexpr bool kStateIndependentCovariance = true;

    enum Index { A, B, C, MU, NU0, a, b, R, NU_MAX, SIGMA1, SIGMA2, SIGMA3 };

    std::string name() const { return "jansen_rit"; }
    std::vector<ParamInfo> parameters() const {
        return {{"A", ParamBlock::beta, true, 3.25, false},
                {"B", ParamBlock::beta, true, 22.0, false},
                {"C", ParamBlock::beta, true, 135.0},
                {"mu", ParamBlock::beta, false, 220.0},
                {"nu0", ParamBlock::beta, false, 6.0, false},
                {"a", ParamBlock::beta, true, 100.0, false},
                {"b", ParamBlock::beta, true, 50.0, false},
                {"r", ParamBlock::beta, true, 0.56, false},
                {"nu_max", ParamBlock::beta, true, 5.0, false},
                {"sigma1", ParamBlock::sigma, true, 0.01, false},
                {"sigma2", ParamBlock::sigma, true, 2000.0},
                {"sigma3", ParamBlock::sigma, true, 1.0, false}};
    }

    template <class S, class P>
    static S sigmoid(const S& z, const P* th) {
        using std::exp;
        return th[NU_MAX] / (1.0 + exp(th[R] * (th[NU0] - z)));
    }

    template <class S, class P>
    void drift(const S* x, const P* th, S* out) const {
        const S g0 = th[A] * th[a] * sigmoid(S(x[4] - x[5]), th);
        const S g1 = th[A] * th[a] * (th[MU] + 0.8 * th[C] * sigmoid(S(th[C] * x[3]), th));
        const S g2 = th[B] * th[b] * 0.25 * th[C] * sigmoid(S(0.25 * th[C] * x[3]), th);
        const P gam[3] = {th[a], th[a], th[b]};
        const S g[3] = {g0, g1, g2};
        for (int i = 0; i < 3; ++i) out[i] = -gam[i] * gam[i] * x[3 + i] - 2.0 * gam[i] * x[i] + g[i];
        for (int i = 0; i < 3; ++i) out[3 + i] = x[i];
    }
    template <class S, class P>
    void diffusion(const S* /*x*/, const P* th, S* out) const {
        for (int e = 0; e < 9; ++e) out[e] = S(0.0);
        out[0] = S(th[SIGMA1]);
        out[4] = S(th[SIGMA2]);
        out[8] = S(th[SIGMA3]);
    }

    template <class T>
    DerivedCoefficients<T> derived_analytic(const T* x, const T* th) const {
        DerivedCoefficients<T> dc(3, 3);
        const T gam[3] = {th[a], th[a], th[b]};
        const T sig[3] = {th[SIGMA1], th[SIGMA2], th[SIGMA3]};
        const T z0 = x[4] - x[5];
        const T z1 = th[C] * x[3];
        const T z2 = 0.25 * th[C] * x[3];
        const T s0 = sigmoid(z0, th), s1 = sigmoid(z1, th), s2 = sigmoid(z2, th);
        auto dsig = [&](const T& s) { return th[R] * s * (1.0 - s / th[NU_MAX]); };
        const T G[3] = {th[A] * th[a] * s0, th[A] * th[a] * (th[MU] + 0.8 * th[C] * s1),
                        th[B] * th[b] * 0.25 * th[C] * s2};
        // dG[i][j] = dG_i / dx_S^j (only these entries are nonzero)
        const T dG01 = th[A] * th[a] * dsig(s0);
        const T dG10 = th[A] * th[a] * 0.8 * th[C] * th[C] * dsig(s1);
        const T dG20 = th[B] * th[b] * 0.0625 * th[C] * th[C] * dsig(s2);

        for (int i = 0; i < 3; ++i) {
            dc.VR0[i] = -gam[i] * gam[i] * x[3 + i] - 2.0 * gam[i] * x[i] + G[i];
            dc.VS0[i] = x[i];
            dc.VR(i, i) = sig[i];
        }
        for (int i = 0; i < 3; ++i) {
            T lin = -gam[i] * gam[i] * x[i];
            if (i == 0) lin = lin + dG01 * (x[1] - x[2]);
            if (i == 1) lin = lin + dG10 * x[0];
            if (i == 2) lin = lin + dG20 * x[0];
            dc.hatV0_VR0[i] = -2.0 * gam[i] * dc.VR0[i] + lin;
            dc.hatVk_VR0(i, i) = -2.0 * gam[i] * sig[i];
            dc.hatVk_VS0(i, i) = sig[i];
            dc.hatV0_VS0[i] = dc.VR0[i];
            dc.hatVk_hatV0_VS0(i, i) = -2.0 * gam[i] * sig[i];
        }
        dc.level = 3;
        return dc;
    }

    void sdhs(const double* /*x*/, const double* th, SdhsView& v) const {
        v.c = Eigen::Vector3d(2.0 * th[a], 2.0 * th[a], 2.0 * th[b]).asDiagonal();
        v.sigma = Eigen::Vector3d(th[SIGMA1], th[SIGMA2], th[SIGMA3]);
    }
};

}  // namespace hypo::models
