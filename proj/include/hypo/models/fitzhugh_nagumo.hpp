#pragma once

#include <string>
#include <vector>

#include "hypo/model.hpp"

namespace hypo::models {

inline std::vector<ParamInfo> fitzhugh_nagumo_parameters() {
    return {{"gamma", ParamBlock::beta, false, 1.5},
            {"alpha", ParamBlock::beta, false, 0.3},
            {"epsilon", ParamBlock::gamma, true, 0.1},
            {"s", ParamBlock::gamma, false, 0.01, false},
            {"sigma", ParamBlock::sigma, true, 0.6}};
}

/// @brief Stochastic FitzHugh-Nagumo model, rough coordinate u and smooth coordinate v:
///   du = (gamma v - u + alpha) dt + sigma dB,  dv = (v - v^3 - u - s) / epsilon dt.
struct FitzHughNagumo {
    static constexpr std::size_t kRough = 1;
    static constexpr std::size_t kSmooth = 1;

    std::string name() const { return "fitzhugh_nagumo"; }
    std::vector<ParamInfo> parameters() const { return fitzhugh_nagumo_parameters(); }

    template <class S, class P>
    void drift(const S* x, const P* th, S* out) const {
        const S& u = x[0];
        const S& v = x[1];
        out[0] = th[0] * v - u + th[1];
        out[1] = (v - v * v * v - u - th[3]) / th[2];
    }
    template <class S, class P>
    void diffusion(const S* /*x*/, const P* th, S* out) const {
        out[0] = S(th[4]);
    }

    template <class T>
    DerivedCoefficients<T> derived_analytic(const T* x, const T* th) const {
        DerivedCoefficients<T> dc(1, 1);
        const T& u = x[0];
        const T& v = x[1];
        const T& gamma = th[0];
        const T& eps = th[2];
        const T& sigma = th[4];
        const T slope = 1.0 - 3.0 * v * v;  // d V_S0 / dv times epsilon
        dc.VR0[0] = gamma * v - u + th[1];
        dc.VS0[0] = (v - v * v * v - u - th[3]) / eps;
        dc.VR(0, 0) = sigma;
        dc.hatVk_VR0(0, 0) = -sigma;
        dc.hatV0_VR0[0] = -dc.VR0[0] + gamma * dc.VS0[0];
        dc.hatVk_VS0(0, 0) = -sigma / eps;
        dc.hatV0_VS0[0] = (-dc.VR0[0] + slope * dc.VS0[0]) / eps;
        dc.hatVk_hatV0_VS0(0, 0) = sigma / eps - sigma * slope / (eps * eps);
        dc.level = 3;
        return dc;
    }
};

/// @brief FitzHugh-Nagumo in damping coordinates (w, v) with w = dv/dt, which puts it in SDHS form:
///   dw = -(c(v) w + g(v)) dt + (sigma / epsilon) dB,  dv = w dt,
///   c(v) = 1 - (1 - 3v^2) / epsilon,  g(v) = (gamma v - v + v^3 + s + alpha) / epsilon.
/// The noise sign is flipped relative to the change of variables, which leaves the law unchanged.
struct FitzHughNagumoSdhs {
    static constexpr std::size_t kRough = 1;
    static constexpr std::size_t kSmooth = 1;

    std::string name() const { return "fitzhugh_nagumo_sdhs"; }
    std::vector<ParamInfo> parameters() const { return fitzhugh_nagumo_parameters(); }

    template <class S, class P>
    void drift(const S* x, const P* th, S* out) const {
        const S& w = x[0];
        const S& v = x[1];
        const S c = 1.0 - (1.0 - 3.0 * v * v) / th[2];
        const S g = (th[0] * v - v + v * v * v + th[3] + th[1]) / th[2];
        out[0] = -(c * w + g);
        out[1] = w;
    }
    template <class S, class P>
    void diffusion(const S* /*x*/, const P* th, S* out) const {
        out[0] = S(th[4] / th[2]);
    }

    void sdhs(const double* x, const double* th, SdhsView& v) const {
        const double xs = x[1];
        v.c = Eigen::MatrixXd::Constant(1, 1, 1.0 - (1.0 - 3.0 * xs * xs) / th[2]);
        v.sigma = Eigen::VectorXd::Constant(1, th[4] / th[2]);
    }

    /// Maps an original-coordinate state (u, v) to (w, v).
    static Eigen::Vector2d from_original(const Eigen::Vector2d& uv, const double* th) {
        const double u = uv[0], v = uv[1];
        return {(v - v * v * v - u - th[3]) / th[2], v};
    }
};

}  // namespace hypo::models
