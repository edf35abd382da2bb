#pragma once

/// @file variates.hpp
/// @brief Moment-matched random inputs of the weak second-order schemes and their exact moments.
///
/// Indices follow the mathematical convention: 0 is the time index, 1..d_R are noise channels.
/// Matrices `zeta` and `eta` are (d_R+1) x (d_R+1) and indexed the same way.

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "hypo/core/error.hpp"
#include "hypo/core/rng.hpp"
#include "hypo/core/small.hpp"
#include "hypo/model.hpp"

namespace hypo {

/// @brief Random inputs of one scheme step.
template <class T>
struct VariateBundle {
    double delta = 0.0;
    std::size_t d_R = 0;
    bool hypo = false;
    SVec<T> B;     // B_k, stored at k-1
    SMat<T> zeta;  // xi (elliptic) or zeta (hypo-elliptic), math indices 0..d_R
    SMat<T> eta;   // eta_{k1 k2}, math indices 0..d_R; eta(0,0) unused; hypo only

    T zeta_0k(std::size_t k) const { return zeta(0, k); }
    T zeta_k0(std::size_t k) const { return zeta(k, 0); }
};

/// Standard normals consumed per step: elliptic Z[d_R], Btilde[d_R-1];
/// hypo-elliptic Z[d_R], Ztilde[d_R], Btilde[d_R-1], Btilde'[d_R], W[d_R-1].
inline std::size_t normals_per_step(std::size_t d_R, bool hypo) {
    return hypo ? 5 * d_R - 2 : 2 * d_R - 1;
}

namespace detail {

inline void check_step(double delta, std::size_t d_R) {
    if (!(delta > 0.0) || !std::isfinite(delta))
        throw InvalidArgument("variates: step size must be positive and finite");
    if (d_R < 1 || d_R > kMaxRough) throw DimensionError("variates: unsupported rough dimension");
}

/// Second-level elliptic variates xi_{k1 k2}, k1,k2 >= 1, from increments B and Btilde (Btilde[k] for k >= 2).
template <class T>
void fill_xi(SMat<T>& xi, const SVec<T>& B, const T* btilde, double delta, std::size_t d_R) {
    for (std::size_t k1 = 1; k1 <= d_R; ++k1)
        for (std::size_t k2 = 1; k2 <= d_R; ++k2) {
            const T& b1 = B[k1 - 1];
            const T& b2 = B[k2 - 1];
            if (k1 == k2)
                xi(k1, k2) = 0.5 * (b1 * b1 - delta);
            else if (k1 < k2)
                xi(k1, k2) = 0.5 * b1 * b2 + 0.5 * b1 * btilde[k2 - 2];
            else
                xi(k1, k2) = 0.5 * b1 * b2 - 0.5 * b2 * btilde[k1 - 2];
        }
}

}  // namespace detail

/// Elliptic bundle from 2 d_R - 1 standard normals.
template <class T>
VariateBundle<T> elliptic_bundle(double delta, std::size_t d_R, const T* normals) {
    detail::check_step(delta, d_R);
    VariateBundle<T> v;
    v.delta = delta;
    v.d_R = d_R;
    v.hypo = false;
    v.B = SVec<T>(d_R);
    v.zeta = SMat<T>(d_R + 1, d_R + 1);
    const double sd = std::sqrt(delta);
    for (std::size_t k = 0; k < d_R; ++k) v.B[k] = sd * normals[k];
    std::array<T, kMaxRough> bt{};
    for (std::size_t j = 0; j + 1 < d_R; ++j) bt[j] = sd * normals[d_R + j];
    v.zeta(0, 0) = T(0.5 * delta * delta);
    for (std::size_t k = 1; k <= d_R; ++k) {
        v.zeta(k, 0) = 0.5 * delta * v.B[k - 1];
        v.zeta(0, k) = v.zeta(k, 0);
    }
    detail::fill_xi(v.zeta, v.B, bt.data(), delta, d_R);
    return v;
}

/// Hypo-elliptic bundle from 5 d_R - 2 standard normals.
template <class T>
VariateBundle<T> hypo_bundle(double delta, std::size_t d_R, const T* normals) {
    detail::check_step(delta, d_R);
    VariateBundle<T> v;
    v.delta = delta;
    v.d_R = d_R;
    v.hypo = true;
    v.B = SVec<T>(d_R);
    v.zeta = SMat<T>(d_R + 1, d_R + 1);
    v.eta = SMat<T>(d_R + 1, d_R + 1);
    const double sd = std::sqrt(delta);
    const double d32 = delta * sd;
    const T* z = normals;
    const T* zt = normals + d_R;
    const T* bt_ell = normals + 2 * d_R;
    const T* bt_eta = normals + 3 * d_R - 1;
    const T* w = normals + 4 * d_R - 1;

    std::array<T, kMaxRough> bt{}, btp{}, ww{};
    for (std::size_t k = 0; k < d_R; ++k) {
        v.B[k] = sd * z[k];
        btp[k] = sd * bt_eta[k];
    }
    for (std::size_t j = 0; j + 1 < d_R; ++j) {
        bt[j] = sd * bt_ell[j];
        ww[j] = sd * w[j];
    }

    v.zeta(0, 0) = T(0.5 * delta * delta);
    const double inv_sqrt3 = 1.0 / std::sqrt(3.0);
    for (std::size_t k = 1; k <= d_R; ++k) {
        v.zeta(0, k) = 0.5 * d32 * (z[k - 1] + inv_sqrt3 * zt[k - 1]);
        v.zeta(k, 0) = d32 * z[k - 1] - v.zeta(0, k);
    }
    detail::fill_xi(v.zeta, v.B, bt.data(), delta, d_R);

    for (std::size_t k = 1; k <= d_R; ++k) {
        v.eta(k, 0) = 0.5 * delta * v.zeta(k, 0) - (delta * delta / 12.0) * v.B[k - 1];
        v.eta(0, k) = delta * v.zeta(k, 0) - (delta * delta / 3.0) * v.B[k - 1];
    }
    const double c = 1.0 / (6.0 * std::sqrt(2.0));
    for (std::size_t k1 = 1; k1 <= d_R; ++k1)
        for (std::size_t k2 = 1; k2 <= d_R; ++k2) {
            const T& b1 = btp[k1 - 1];
            const T& b2 = btp[k2 - 1];
            T et;
            if (k1 == k2)
                et = c * (b1 * b1 - delta);
            else if (k1 < k2)
                et = c * (b1 * b2 + b1 * ww[k2 - 2]);
            else
                et = c * (b1 * b2 - b2 * ww[k1 - 2]);
            v.eta(k1, k2) = (delta / 3.0) * v.zeta(k1, k2) - delta * et;
        }
    return v;
}

/// Fills `out` with n standard normals.
inline void draw_normals(SeededRng& rng, std::size_t n, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = rng.normal();
}

inline VariateBundle<double> draw_elliptic(SeededRng& rng, double delta, std::size_t d_R) {
    detail::check_step(delta, d_R);
    std::array<double, 5 * kMaxRough> z{};
    draw_normals(rng, normals_per_step(d_R, false), z.data());
    return elliptic_bundle<double>(delta, d_R, z.data());
}

inline VariateBundle<double> draw_hypo(SeededRng& rng, double delta, std::size_t d_R) {
    detail::check_step(delta, d_R);
    std::array<double, 5 * kMaxRough> z{};
    draw_normals(rng, normals_per_step(d_R, true), z.data());
    return hypo_bundle<double>(delta, d_R, z.data());
}

// ---------------------------------------------------------------------------
// Moment catalogue
// ---------------------------------------------------------------------------

/// Catalogued moments. Index slots k[0..3] are noise channels 1..d_R.
enum class MomentKind {
    xi_mean,          // E[xi_{k1k2}]
    xi_B,             // E[xi_{k1k2} B_{k3}]
    xi_xi,            // E[xi_{k1k2} xi_{k3k4}]
    xi_BB,            // E[xi_{k1k2} B_{k3} B_{k4}]
    xi_k0_B,          // E[xi_{k1 0} B_{k2}]
    B_zeta0k,         // E[B_{k1} zeta_{0k2}]
    B_zetak0,         // E[B_{k1} zeta_{k2 0}]
    zeta0k_zeta0k,    // E[zeta_{0k1} zeta_{0k2}]
    zetak0_zetak0,    // E[zeta_{k1 0} zeta_{k2 0}]
    zeta0k_zetak0,    // E[zeta_{0k1} zeta_{k2 0}]
    eta_mean,         // E[eta_{k1k2}]
    eta_k0_mean,      // E[eta_{k1 0}]
    eta_0k_mean,      // E[eta_{0k1}]
    eta_B,            // E[eta_{k1k2} B_{k3}]
    eta_k0_B,         // E[eta_{k1 0} B_{k2}]
    eta_0k_B,         // E[eta_{0k1} B_{k2}]
    eta_k0_zetak0,    // E[eta_{k1 0} zeta_{k2 0}]
    eta_0k_zetak0,    // E[eta_{0k1} zeta_{k2 0}]
    eta_zeta,         // E[eta_{k1k2} zeta_{k3k4}]
    eta_eta,          // E[eta_{k1k2} eta_{k3k4}]
};

struct MomentQuery {
    MomentKind kind;
    std::array<std::size_t, 4> k{1, 1, 1, 1};
};

inline const std::vector<std::pair<MomentKind, std::string>>& moment_kind_names() {
    static const std::vector<std::pair<MomentKind, std::string>> names = {
        {MomentKind::xi_mean, "xi_mean"},
        {MomentKind::xi_B, "xi_B"},
        {MomentKind::xi_xi, "xi_xi"},
        {MomentKind::xi_BB, "xi_BB"},
        {MomentKind::xi_k0_B, "xi_k0_B"},
        {MomentKind::B_zeta0k, "B_zeta0k"},
        {MomentKind::B_zetak0, "B_zetak0"},
        {MomentKind::zeta0k_zeta0k, "zeta0k_zeta0k"},
        {MomentKind::zetak0_zetak0, "zetak0_zetak0"},
        {MomentKind::zeta0k_zetak0, "zeta0k_zetak0"},
        {MomentKind::eta_mean, "eta_mean"},
        {MomentKind::eta_k0_mean, "eta_k0_mean"},
        {MomentKind::eta_0k_mean, "eta_0k_mean"},
        {MomentKind::eta_B, "eta_B"},
        {MomentKind::eta_k0_B, "eta_k0_B"},
        {MomentKind::eta_0k_B, "eta_0k_B"},
        {MomentKind::eta_k0_zetak0, "eta_k0_zetak0"},
        {MomentKind::eta_0k_zetak0, "eta_0k_zetak0"},
        {MomentKind::eta_zeta, "eta_zeta"},
        {MomentKind::eta_eta, "eta_eta"},
    };
    return names;
}

inline std::string to_string(MomentKind kind) {
    for (const auto& [k, n] : moment_kind_names())
        if (k == kind) return n;
    return "?";
}

inline MomentKind parse_moment_kind(const std::string& name) {
    for (const auto& [k, n] : moment_kind_names())
        if (n == name) return k;
    throw InvalidArgument("unknown moment identifier '" + name + "'");
}

/// Number of index slots used by a moment kind.
inline std::size_t moment_arity(MomentKind kind) {
    switch (kind) {
        case MomentKind::eta_k0_mean:
        case MomentKind::eta_0k_mean:
            return 1;
        case MomentKind::xi_mean:
        case MomentKind::xi_k0_B:
        case MomentKind::B_zeta0k:
        case MomentKind::B_zetak0:
        case MomentKind::zeta0k_zeta0k:
        case MomentKind::zetak0_zetak0:
        case MomentKind::zeta0k_zetak0:
        case MomentKind::eta_mean:
        case MomentKind::eta_k0_B:
        case MomentKind::eta_0k_B:
        case MomentKind::eta_k0_zetak0:
        case MomentKind::eta_0k_zetak0:
            return 2;
        case MomentKind::xi_B:
        case MomentKind::eta_B:
            return 3;
        case MomentKind::xi_xi:
        case MomentKind::xi_BB:
        case MomentKind::eta_zeta:
        case MomentKind::eta_eta:
            return 4;
    }
    return 0;
}

/// True for moments of the hypo-elliptic bundle.
inline bool moment_is_hypo(MomentKind kind) {
    switch (kind) {
        case MomentKind::xi_mean:
        case MomentKind::xi_B:
        case MomentKind::xi_xi:
        case MomentKind::xi_BB:
        case MomentKind::xi_k0_B:
            return false;
        default:
            return true;
    }
}

/// Exact value of a catalogued moment.
inline double moment_oracle(const MomentQuery& q, double delta) {
    const auto& k = q.k;
    const double d = delta;
    const bool same12 = k[0] == k[1];
    const bool pair = k[0] == k[2] && k[1] == k[3];
    switch (q.kind) {
        case MomentKind::xi_mean:
        case MomentKind::xi_B:
        case MomentKind::eta_mean:
        case MomentKind::eta_k0_mean:
        case MomentKind::eta_0k_mean:
        case MomentKind::eta_B:
            return 0.0;
        case MomentKind::xi_xi:
            return pair ? d * d / 2 : 0.0;
        case MomentKind::xi_BB: {
            double v = 0.0;
            if (k[0] == k[2] && k[1] == k[3]) v += d * d / 2;
            if (k[0] == k[3] && k[1] == k[2]) v += d * d / 2;
            return v;
        }
        case MomentKind::xi_k0_B:
        case MomentKind::B_zeta0k:
        case MomentKind::B_zetak0:
            return same12 ? d * d / 2 : 0.0;
        case MomentKind::zeta0k_zeta0k:
        case MomentKind::zetak0_zetak0:
            return same12 ? d * d * d / 3 : 0.0;
        case MomentKind::zeta0k_zetak0:
            return same12 ? d * d * d / 6 : 0.0;
        case MomentKind::eta_k0_B:
        case MomentKind::eta_0k_B:
            return same12 ? d * d * d / 6 : 0.0;
        case MomentKind::eta_k0_zetak0:
            return same12 ? d * d * d * d / 8 : 0.0;
        case MomentKind::eta_0k_zetak0:
            return same12 ? d * d * d * d / 6 : 0.0;
        case MomentKind::eta_zeta:
            return pair ? d * d * d / 6 : 0.0;
        case MomentKind::eta_eta:
            return pair ? d * d * d * d / 12 : 0.0;
    }
    throw InvalidArgument("unknown moment identifier");
}

/// The sampled quantity whose expectation moment_oracle gives.
inline double moment_sample(const MomentQuery& q, const VariateBundle<double>& v) {
    const auto& k = q.k;
    auto B = [&](std::size_t i) { return v.B[i - 1]; };
    switch (q.kind) {
        case MomentKind::xi_mean:
        case MomentKind::eta_mean:
            return q.kind == MomentKind::xi_mean ? v.zeta(k[0], k[1]) : v.eta(k[0], k[1]);
        case MomentKind::xi_B:
            return v.zeta(k[0], k[1]) * B(k[2]);
        case MomentKind::xi_xi:
            return v.zeta(k[0], k[1]) * v.zeta(k[2], k[3]);
        case MomentKind::xi_BB:
            return v.zeta(k[0], k[1]) * B(k[2]) * B(k[3]);
        case MomentKind::xi_k0_B:
            return v.zeta(k[0], 0) * B(k[1]);
        case MomentKind::B_zeta0k:
            return B(k[0]) * v.zeta(0, k[1]);
        case MomentKind::B_zetak0:
            return B(k[0]) * v.zeta(k[1], 0);
        case MomentKind::zeta0k_zeta0k:
            return v.zeta(0, k[0]) * v.zeta(0, k[1]);
        case MomentKind::zetak0_zetak0:
            return v.zeta(k[0], 0) * v.zeta(k[1], 0);
        case MomentKind::zeta0k_zetak0:
            return v.zeta(0, k[0]) * v.zeta(k[1], 0);
        case MomentKind::eta_k0_mean:
            return v.eta(k[0], 0);
        case MomentKind::eta_0k_mean:
            return v.eta(0, k[0]);
        case MomentKind::eta_B:
            return v.eta(k[0], k[1]) * B(k[2]);
        case MomentKind::eta_k0_B:
            return v.eta(k[0], 0) * B(k[1]);
        case MomentKind::eta_0k_B:
            return v.eta(0, k[0]) * B(k[1]);
        case MomentKind::eta_k0_zetak0:
            return v.eta(k[0], 0) * v.zeta(k[1], 0);
        case MomentKind::eta_0k_zetak0:
            return v.eta(0, k[0]) * v.zeta(k[1], 0);
        case MomentKind::eta_zeta:
            return v.eta(k[0], k[1]) * v.zeta(k[2], k[3]);
        case MomentKind::eta_eta:
            return v.eta(k[0], k[1]) * v.eta(k[2], k[3]);
    }
    return 0.0;
}

/// Every index pattern of every catalogued moment for noise dimension d_R.
inline std::vector<MomentQuery> moment_catalogue(std::size_t d_R) {
    std::vector<MomentQuery> out;
    for (const auto& [kind, name] : moment_kind_names()) {
        const std::size_t a = moment_arity(kind);
        std::size_t total = 1;
        for (std::size_t i = 0; i < a; ++i) total *= d_R;
        for (std::size_t c = 0; c < total; ++c) {
            MomentQuery q{kind, {1, 1, 1, 1}};
            std::size_t r = c;
            for (std::size_t i = 0; i < a; ++i) {
                q.k[i] = 1 + r % d_R;
                r /= d_R;
            }
            out.push_back(q);
        }
    }
    return out;
}

/// Monte-Carlo estimate of a set of moments: sample means and standard errors.
struct MomentEstimate {
    MomentQuery query;
    double exact = 0.0;
    double mean = 0.0;
    double std_error = 0.0;
    double z_score() const {
        if (std_error > 0) return (mean - exact) / std_error;
        return mean == exact ? 0.0 : std::numeric_limits<double>::infinity();
    }
};

inline std::vector<MomentEstimate> estimate_moments(const std::vector<MomentQuery>& queries,
                                                    double delta, std::size_t d_R, bool hypo,
                                                    std::size_t n_draws, SeededRng rng) {
    std::vector<double> sum(queries.size(), 0.0), sum2(queries.size(), 0.0);
    for (std::size_t i = 0; i < n_draws; ++i) {
        const auto v = hypo ? draw_hypo(rng, delta, d_R) : draw_elliptic(rng, delta, d_R);
        for (std::size_t j = 0; j < queries.size(); ++j) {
            const double s = moment_sample(queries[j], v);
            sum[j] += s;
            sum2[j] += s * s;
        }
    }
    std::vector<MomentEstimate> out;
    const double n = static_cast<double>(n_draws);
    for (std::size_t j = 0; j < queries.size(); ++j) {
        MomentEstimate e;
        e.query = queries[j];
        e.exact = moment_oracle(queries[j], delta);
        e.mean = sum[j] / n;
        const double var = std::max(0.0, sum2[j] / n - e.mean * e.mean);
        e.std_error = std::sqrt(var / n);
        out.push_back(e);
    }
    return out;
}

}  // namespace hypo
