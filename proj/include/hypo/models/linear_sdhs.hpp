#pragma once

#include <string>
#include <vector>

#include "hypo/model.hpp"

namespace hypo::models {

/// @brief Damped linear oscillator dX_R = -(c X_R + k X_S) dt + sigma dB, dX_S = X_R dt.
struct LinearSdhs {
    static constexpr std::size_t kRough = 1;
    static constexpr std::size_t kSmooth = 1;
    static constexpr bool kStateIndependentCovariance = true;

    std::string name() const { return "linear_sdhs"; }
    std::vector<ParamInfo> parameters() const {
        return {{"c", ParamBlock::beta, false, 1.0},
                {"k", ParamBlock::beta, false, 1.0},
                {"sigma", ParamBlock::sigma, true, 1.0}};
    }

    template <class S, class P>
    void drift(const S* x, const P* th, S* out) const {
        out[0] = -(th[0] * x[0] + th[1] * x[1]);
        out[1] = x[0];
    }
    template <class S, class P>
    void diffusion(const S* /*x*/, const P* th, S* out) const {
        out[0] = S(th[2]);
    }

    template <class T>
    DerivedCoefficients<T> derived_analytic(const T* x, const T* th) const {
        DerivedCoefficients<T> dc(1, 1);
        const T& c = th[0];
        const T& k = th[1];
        const T& sigma = th[2];
        dc.VR0[0] = -(c * x[0] + k * x[1]);
        dc.VS0[0] = x[0];
        dc.VR(0, 0) = sigma;
        dc.hatVk_VR0(0, 0) = -c * sigma;
        dc.hatV0_VR0[0] = -c * dc.VR0[0] - k * x[0];
        dc.hatVk_VS0(0, 0) = sigma;
        dc.hatV0_VS0[0] = dc.VR0[0];
        dc.hatVk_hatV0_VS0(0, 0) = -c * sigma;
        dc.level = 3;
        return dc;
    }

    void sdhs(const double* /*x*/, const double* th, SdhsView& v) const {
        v.c = Eigen::MatrixXd::Constant(1, 1, th[0]);
        v.sigma = Eigen::VectorXd::Constant(1, th[2]);
    }
};

}  // namespace hypo::models
