#pragma once

#include <string>
#include <vector>

#include "hypo/model.hpp"

namespace hypo::models {

/// @brief Ornstein-Uhlenbeck process dX = kappa (mu - X) dt + sigma dB.
struct OrnsteinUhlenbeck {
    static constexpr std::size_t kRough = 1;
    static constexpr std::size_t kSmooth = 0;
    static constexpr bool kStateIndependentCovariance = true;

    std::string name() const { return "ou"; }
    std::vector<ParamInfo> parameters() const {
        return {{"kappa", ParamBlock::beta, true, 1.0},
                {"mu", ParamBlock::beta, false, 0.0},
                {"sigma", ParamBlock::sigma, true, 1.0}};
    }

    template <class S, class P>
    void drift(const S* x, const P* th, S* out) const {
        out[0] = th[0] * (th[1] - x[0]);
    }
    template <class S, class P>
    void diffusion(const S* /*x*/, const P* th, S* out) const {
        out[0] = S(th[2]);
    }

    template <class T>
    DerivedCoefficients<T> derived_analytic(const T* x, const T* th) const {
        DerivedCoefficients<T> dc(1, 0);
        const T& kappa = th[0];
        const T& sigma = th[2];
        dc.VR0[0] = kappa * (th[1] - x[0]);
        dc.VR(0, 0) = sigma;
        dc.hatVk_VR0(0, 0) = -kappa * sigma;
        dc.hatV0_VR0[0] = -kappa * dc.VR0[0];
        dc.level = 3;
        return dc;
    }
};

}  // namespace hypo::models
