#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hypo/model.hpp"

namespace hypo::models {

/// @brief SIR model with a log-normal-OU contact rate, written for x = (log S, log I, log C).
///
/// Natural-scale dynamics (population N):
///   dS = -C S I / N dt + sqrt(C S I / N) dB1
///   dI = (C S I / N - lambda I) dt - sqrt(C S I / N) dB1 + sqrt(lambda I) dB2
///   dC = (alpha (beta - log C) + sigma^2 / 2) C dt + sigma C dB3
/// Ito's formula gives the log-state coefficients below; log C is an OU process.
/// Parameter lambda enters both drift and diffusion.
struct SirLog {
    static constexpr std::size_t kRough = 3;
    static constexpr std::size_t kSmooth = 0;

    double population = 763.0;

    std::string name() const { return "sir_log"; }
    std::vector<ParamInfo> parameters() const {
        return {{"alpha", ParamBlock::beta, true, 1.0},
                {"beta", ParamBlock::beta, false, 0.0},
                {"lambda", ParamBlock::beta, true, 1.0},
                {"sigma", ParamBlock::sigma, true, std::exp(-3.0)}};
    }

    template <class S, class P>
    void drift(const S* x, const P* th, S* out) const {
        using std::exp;
        const S& ls = x[0];
        const S& li = x[1];
        const S& lc = x[2];
        const double inv_n = 1.0 / population;
        const S ci = exp(lc + li) * inv_n;        // C I / N
        const S cs = exp(lc + ls) * inv_n;        // C S / N
        const S ci_s = exp(lc + li - ls) * inv_n; // C I / (N S)
        const S cs_i = exp(lc + ls - li) * inv_n; // C S / (N I)
        const S lam_i = th[2] * exp(-li);          // lambda / I
        out[0] = -ci - 0.5 * ci_s;
        out[1] = cs - th[2] - 0.5 * (cs_i + lam_i);
        out[2] = th[0] * (th[1] - lc);
    }

    template <class S, class P>
    void diffusion(const S* x, const P* th, S* out) const {
        using std::exp;
        using std::sqrt;
        const S& ls = x[0];
        const S& li = x[1];
        const S& lc = x[2];
        const double inv_sqrt_n = 1.0 / std::sqrt(population);
        for (int e = 0; e < 9; ++e) out[e] = S(0.0);
        out[0] = exp(0.5 * (lc + li - ls)) * inv_sqrt_n;   // (0,0)
        out[1] = -exp(0.5 * (lc + ls - li)) * inv_sqrt_n;  // (1,0)
        out[4] = sqrt(th[2]) * exp(-0.5 * li);             // (1,1)
        out[8] = S(th[3]);                                 // (2,2)
    }
};

}  // namespace hypo::models
