#pragma once

/// @file scheme.hpp
/// @brief One-step maps (Euler-Maruyama, local Gaussian, weak second order) and path simulation.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hypo/core/error.hpp"
#include "hypo/core/rng.hpp"
#include "hypo/model.hpp"
#include "hypo/variates.hpp"

namespace hypo {

enum class Scheme { euler, local_gauss, weak2 };

inline std::string to_string(Scheme s) {
    switch (s) {
        case Scheme::euler: return "em";
        case Scheme::local_gauss: return "lg";
        case Scheme::weak2: return "weak2";
    }
    return "?";
}

inline Scheme parse_scheme(const std::string& name) {
    if (name == "em" || name == "euler") return Scheme::euler;
    if (name == "lg" || name == "local_gauss") return Scheme::local_gauss;
    if (name == "weak2") return Scheme::weak2;
    throw InvalidArgument("unknown scheme '" + name + "'");
}

/// Whether a step of `scheme` on this model draws hypo-elliptic bundles.
inline bool scheme_uses_hypo_bundle(Scheme scheme, bool hypo_model) {
    return scheme == Scheme::local_gauss || (scheme == Scheme::weak2 && hypo_model);
}

// ---------------------------------------------------------------------------
// Scalar-generic updates on precomputed coefficients
// ---------------------------------------------------------------------------

/// Euler-Maruyama: rough x_R + V_R0 dt + V_R B, smooth x_S + V_S0 dt.
/// `drift` has length d, `diff` is column-major d_R x d_R.
template <class T>
SVec<T> euler_update(const SVec<T>& x, const T* drift, const T* diff, std::size_t d_R,
                     const VariateBundle<T>& b) {
    SVec<T> y = x;
    const std::size_t d = x.size();
    for (std::size_t i = 0; i < d; ++i) y[i] = y[i] + drift[i] * b.delta;
    for (std::size_t i = 0; i < d_R; ++i)
        for (std::size_t k = 0; k < d_R; ++k) y[i] = y[i] + diff[i + d_R * k] * b.B[k];
    return y;
}

namespace detail {

/// Rough line shared by both weak second-order schemes: sum over 0 <= k1, k2 <= d_R.
template <class T>
void weak2_rough(const DerivedCoefficients<T>& dc, const VariateBundle<T>& b, SVec<T>& y) {
    const std::size_t dR = dc.d_R;
    const double dt = b.delta;
    for (std::size_t i = 0; i < dR; ++i) {
        T acc = dc.VR0[i] * dt + dc.hatV0_VR0[i] * b.zeta(0, 0);
        for (std::size_t k = 1; k <= dR; ++k) {
            acc = acc + dc.VR(i, k - 1) * b.B[k - 1];
            acc = acc + dc.hatVk_VR0(i, k - 1) * b.zeta(k, 0);
            acc = acc + dc.hatV0_VRk(i, k - 1) * b.zeta(0, k);
            for (std::size_t k2 = 1; k2 <= dR; ++k2)
                acc = acc + dc.hatVk1_VRk2[k - 1](i, k2 - 1) * b.zeta(k, k2);
        }
        y[i] = y[i] + acc;
    }
}

}  // namespace detail

template <class T>
SVec<T> weak2_elliptic_update(const DerivedCoefficients<T>& dc, const SVec<T>& x,
                              const VariateBundle<T>& b) {
    if (dc.d_S != 0) throw DimensionError("elliptic weak second-order step called on a hypo-elliptic model");
    if (b.hypo) throw InvalidArgument("elliptic step needs an elliptic variate bundle");
    require_level(dc, 2, "elliptic weak second-order step");
    SVec<T> y = x;
    detail::weak2_rough(dc, b, y);
    return y;
}

template <class T>
SVec<T> weak2_hypo_update(const DerivedCoefficients<T>& dc, const SVec<T>& x,
                          const VariateBundle<T>& b) {
    if (dc.d_S == 0) throw DimensionError("hypo-elliptic step called on an elliptic model");
    if (!b.hypo) throw InvalidArgument("hypo-elliptic step needs a hypo-elliptic variate bundle");
    require_level(dc, 3, "hypo-elliptic weak second-order step");
    const std::size_t dR = dc.d_R, dS = dc.d_S;
    const double dt = b.delta;
    SVec<T> y = x;
    detail::weak2_rough(dc, b, y);
    for (std::size_t s = 0; s < dS; ++s) {
        T acc = dc.VS0[s] * dt + dc.hatV0_VS0[s] * b.zeta(0, 0);
        for (std::size_t k = 1; k <= dR; ++k) {
            acc = acc + dc.hatVk_VS0(s, k - 1) * b.zeta(k, 0);
            acc = acc + dc.hatVk_hatV0_VS0(s, k - 1) * b.eta(k, 0);
            acc = acc + dc.hatV0_hatVk_VS0(s, k - 1) * b.eta(0, k);
            for (std::size_t k2 = 1; k2 <= dR; ++k2)
                acc = acc + dc.hatVk1_hatVk2_VS0[k - 1](s, k2 - 1) * b.eta(k, k2);
        }
        y[dR + s] = y[dR + s] + acc;
    }
    return y;
}

/// Local Gaussian step. Uses B and zeta_{k0} of a hypo-elliptic bundle.
template <class T>
SVec<T> local_gauss_update(const DerivedCoefficients<T>& dc, const SVec<T>& x,
                           const VariateBundle<T>& b) {
    if (!b.hypo) throw InvalidArgument("local Gaussian step needs a hypo-elliptic variate bundle");
    require_level(dc, 2, "local Gaussian step");
    const std::size_t dR = dc.d_R, dS = dc.d_S;
    const double dt = b.delta;
    SVec<T> y = x;
    for (std::size_t i = 0; i < dR; ++i) {
        T acc = dc.VR0[i] * dt;
        for (std::size_t k = 0; k < dR; ++k) acc = acc + dc.VR(i, k) * b.B[k];
        y[i] = y[i] + acc;
    }
    for (std::size_t s = 0; s < dS; ++s) {
        T acc = dc.VS0[s] * dt + dc.hatV0_VS0[s] * (0.5 * dt * dt);
        for (std::size_t k = 1; k <= dR; ++k) acc = acc + dc.hatVk_VS0(s, k - 1) * b.zeta(k, 0);
        y[dR + s] = y[dR + s] + acc;
    }
    return y;
}

/// One step of a static model with scalar type T (used by gradient-carrying propagation).
template <StaticModel M, class T>
SVec<T> static_step(const M& m, Scheme scheme, const SVec<T>& x, const T* theta,
                    const VariateBundle<T>& b) {
    constexpr std::size_t dR = M::kRough, d = M::kRough + M::kSmooth;
    if (scheme == Scheme::euler) {
        std::array<T, d> drift;
        std::array<T, dR * dR> diff;
        m.drift(x.begin(), theta, drift.data());
        m.diffusion(x.begin(), theta, diff.data());
        return euler_update(x, drift.data(), diff.data(), dR, b);
    }
    const auto dc = derived_coefficients<M, T>(m, x.begin(), theta);
    if (scheme == Scheme::local_gauss) return local_gauss_update(dc, x, b);
    if constexpr (M::kSmooth == 0)
        return weak2_elliptic_update(dc, x, b);
    else
        return weak2_hypo_update(dc, x, b);
}

// ---------------------------------------------------------------------------
// Runtime-model steps
// ---------------------------------------------------------------------------

namespace detail {

inline SVec<double> to_svec(const Model& model, const Eigen::VectorXd& x) {
    if (static_cast<std::size_t>(x.size()) != model.dim())
        throw DimensionError("step: state has wrong dimension");
    return from_eigen(x);
}

}  // namespace detail

inline Eigen::VectorXd step_euler(const Model& model, const Eigen::VectorXd& x, const Theta& theta,
                                  double delta, const VariateBundle<double>& b) {
    if (std::abs(b.delta - delta) > 1e-15 * delta)
        throw InvalidArgument("step: bundle was drawn for a different step size");
    const auto c = eval_coefficients(model, x, theta);
    return to_eigen(euler_update(detail::to_svec(model, x), c.drift.data(), c.diffusion.data(),
                                 model.rough_dim(), b));
}

inline Eigen::VectorXd step_local_gauss(const Model& model, const Eigen::VectorXd& x,
                                        const Theta& theta, double delta,
                                        const VariateBundle<double>& b) {
    if (std::abs(b.delta - delta) > 1e-15 * delta)
        throw InvalidArgument("step: bundle was drawn for a different step size");
    const auto dc = derived_coefficients(model, x, theta);
    return to_eigen(local_gauss_update(dc, detail::to_svec(model, x), b));
}

inline Eigen::VectorXd step_weak2_elliptic(const Model& model, const Eigen::VectorXd& x,
                                           const Theta& theta, double delta,
                                           const VariateBundle<double>& b) {
    if (model.is_hypoelliptic())
        throw DimensionError("elliptic weak second-order step called on hypo-elliptic model '" +
                             model.name() + "'");
    if (std::abs(b.delta - delta) > 1e-15 * delta)
        throw InvalidArgument("step: bundle was drawn for a different step size");
    const auto dc = derived_coefficients(model, x, theta);
    return to_eigen(weak2_elliptic_update(dc, detail::to_svec(model, x), b));
}

inline Eigen::VectorXd step_weak2_hypo(const Model& model, const Eigen::VectorXd& x,
                                       const Theta& theta, double delta,
                                       const VariateBundle<double>& b) {
    if (!model.is_hypoelliptic())
        throw DimensionError("hypo-elliptic step called on elliptic model '" + model.name() + "'");
    if (model.derivative_level() < 3)
        throw CapabilityError("model '" + model.name() +
                              "' lacks the derivatives needed by the eta coefficients");
    if (std::abs(b.delta - delta) > 1e-15 * delta)
        throw InvalidArgument("step: bundle was drawn for a different step size");
    const auto dc = derived_coefficients(model, x, theta);
    return to_eigen(weak2_hypo_update(dc, detail::to_svec(model, x), b));
}

/// Draws the bundle a scheme needs for this model.
inline VariateBundle<double> draw_bundle(const Model& model, Scheme scheme, SeededRng& rng,
                                         double delta) {
    return scheme_uses_hypo_bundle(scheme, model.is_hypoelliptic())
               ? draw_hypo(rng, delta, model.rough_dim())
               : draw_elliptic(rng, delta, model.rough_dim());
}

inline Eigen::VectorXd step(const Model& model, Scheme scheme, const Eigen::VectorXd& x,
                            const Theta& theta, double delta, const VariateBundle<double>& b) {
    switch (scheme) {
        case Scheme::euler: return step_euler(model, x, theta, delta, b);
        case Scheme::local_gauss: return step_local_gauss(model, x, theta, delta, b);
        case Scheme::weak2:
            return model.is_hypoelliptic() ? step_weak2_hypo(model, x, theta, delta, b)
                                           : step_weak2_elliptic(model, x, theta, delta, b);
    }
    throw InvalidArgument("unknown scheme");
}

// ---------------------------------------------------------------------------
// Paths and observations
// ---------------------------------------------------------------------------

/// @brief Simulated path on an equidistant grid with provenance.
struct Path {
    std::vector<double> times;
    Eigen::MatrixXd states;  // (n_steps + 1) x d, one row per time
    std::string model_id;
    Theta theta;
    std::uint64_t seed = 0;
    Scheme scheme = Scheme::euler;
    double delta = 0.0;

    std::size_t size() const { return times.size(); }
};

/// @brief Equidistant observations X_{t_0}, ..., X_{t_n} with step delta.
struct ObservationSet {
    double delta = 0.0;
    Eigen::MatrixXd states;  // (n + 1) x d
    std::string model_id;

    std::size_t n() const { return states.rows() > 0 ? static_cast<std::size_t>(states.rows()) - 1 : 0; }
    Eigen::VectorXd state(std::size_t m) const { return states.row(static_cast<Eigen::Index>(m)).transpose(); }
};

/// Iterates a stepper from x0; the rng is consumed in step order.
inline Path simulate_path(const Model& model, Scheme scheme, const Eigen::VectorXd& x0,
                          const Theta& theta, double delta, std::size_t n_steps, SeededRng& rng) {
    if (!(delta > 0.0)) throw InvalidArgument("simulate_path: step size must be positive");
    if (static_cast<std::size_t>(x0.size()) != model.dim())
        throw DimensionError("simulate_path: initial state has wrong dimension");
    theta.validate();
    if (scheme == Scheme::weak2 && model.is_hypoelliptic() && model.derivative_level() < 3)
        throw CapabilityError("model '" + model.name() + "' cannot drive the hypo-elliptic weak second-order scheme");
    Path p;
    p.model_id = model.name();
    p.theta = theta;
    p.seed = rng.seed();
    p.scheme = scheme;
    p.delta = delta;
    const auto d = static_cast<Eigen::Index>(model.dim());
    p.states.resize(static_cast<Eigen::Index>(n_steps + 1), d);
    p.times.resize(n_steps + 1);
    p.states.row(0) = x0.transpose();
    p.times[0] = 0.0;
    Eigen::VectorXd x = x0;
    for (std::size_t n = 1; n <= n_steps; ++n) {
        const auto b = draw_bundle(model, scheme, rng, delta);
        x = step(model, scheme, x, theta, delta, b);
        if (!x.allFinite())
            throw NonFiniteStateError("simulate_path: non-finite state at step " + std::to_string(n), n);
        p.states.row(static_cast<Eigen::Index>(n)) = x.transpose();
        p.times[n] = static_cast<double>(n) * delta;
    }
    return p;
}

/// Every stride-th state of a path, starting from the first; the new step is stride * delta.
inline ObservationSet subsample(const Path& path, std::size_t stride) {
    if (stride < 1) throw InvalidArgument("subsample: stride must be at least 1");
    if (path.size() < 2 || stride > path.size() - 1)
        throw InvalidArgument("subsample: stride larger than the path");
    const std::size_t n_obs = (path.size() - 1) / stride + 1;
    ObservationSet obs;
    obs.delta = path.delta * static_cast<double>(stride);
    obs.model_id = path.model_id;
    obs.states.resize(static_cast<Eigen::Index>(n_obs), path.states.cols());
    for (std::size_t m = 0; m < n_obs; ++m)
        obs.states.row(static_cast<Eigen::Index>(m)) =
            path.states.row(static_cast<Eigen::Index>(m * stride));
    return obs;
}

}  // namespace hypo
