#pragma once

#include <string>
#include <vector>

#include "hypo/model.hpp"

namespace hypo::models {

/// @brief Driftless scalar model with state-dependent noise dX = s (1 + X^2 / 2) dB.
struct QuadraticDiffusion {
    static constexpr std::size_t kRough = 1;
    static constexpr std::size_t kSmooth = 0;

    std::string name() const { return "quadratic_diffusion"; }
    std::vector<ParamInfo> parameters() const { return {{"s", ParamBlock::sigma, true, 1.0}}; }

    template <class S, class P>
    void drift(const S* /*x*/, const P* /*th*/, S* out) const {
        out[0] = S(0.0);
    }
    template <class S, class P>
    void diffusion(const S* x, const P* th, S* out) const {
        out[0] = th[0] * (1.0 + 0.5 * x[0] * x[0]);
    }
};

/// @brief Constant-coefficient scalar model dX = c dt + s dB.
struct ConstantCoefficients {
    static constexpr std::size_t kRough = 1;
    static constexpr std::size_t kSmooth = 0;
    static constexpr bool kStateIndependentCovariance = true;

    std::string name() const { return "constant_coefficients"; }
    std::vector<ParamInfo> parameters() const {
        return {{"c", ParamBlock::beta, false, 0.0}, {"s", ParamBlock::sigma, true, 1.0}};
    }

    template <class S, class P>
    void drift(const S* /*x*/, const P* th, S* out) const {
        out[0] = S(th[0]);
    }
    template <class S, class P>
    void diffusion(const S* /*x*/, const P* th, S* out) const {
        out[0] = S(th[1]);
    }
};

}  // namespace hypo::models
