#pragma once

/// @file model.hpp
/// @brief SDE model abstraction dX = V_0(X) dt + sum_k V_k(X) dB_k with a rough/smooth split,
/// parameter layout, and the hat-operator compositions used by schemes and expansions.
///
/// Hat operators act on functions of x:
///   Vhat_0 f = <V_0, grad f> + 1/2 sum_k V_{R,k}^T (d^2 f / dx_R^2) V_{R,k}
///   Vhat_k f = <V_{R,k}, d f / dx_R>

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hypo/core/error.hpp"
#include "hypo/core/jet.hpp"
#include "hypo/core/small.hpp"
#include "hypo/core/var.hpp"

namespace hypo {

/// Largest rough (noise) dimension supported.
inline constexpr std::size_t kMaxRough = 4;

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

enum class ParamBlock { beta, gamma, sigma };

struct ParamInfo {
    std::string name;
    ParamBlock block = ParamBlock::beta;
    bool positive = false;
    double default_value = 0.0;
    bool free = true;
};

/// @brief Parameter vector theta = (beta, gamma, sigma) with per-coordinate metadata.
class Theta {
public:
    Theta() = default;
    Theta(std::vector<ParamInfo> info, Eigen::VectorXd values)
        : info_(std::move(info)), values_(std::move(values)) {
        if (static_cast<std::size_t>(values_.size()) != info_.size())
            throw DimensionError("Theta: value count does not match parameter layout");
    }
    explicit Theta(std::vector<ParamInfo> info) : info_(std::move(info)) {
        values_.resize(static_cast<Eigen::Index>(info_.size()));
        for (std::size_t i = 0; i < info_.size(); ++i)
            values_[static_cast<Eigen::Index>(i)] = info_[i].default_value;
    }

    std::size_t size() const noexcept { return info_.size(); }
    const Eigen::VectorXd& values() const noexcept { return values_; }
    Eigen::VectorXd& values() noexcept { return values_; }
    const double* data() const { return values_.data(); }
    const std::vector<ParamInfo>& info() const noexcept { return info_; }

    double operator[](std::size_t i) const { return values_[static_cast<Eigen::Index>(i)]; }
    double& operator[](std::size_t i) { return values_[static_cast<Eigen::Index>(i)]; }

    std::size_t index_of(const std::string& name) const {
        for (std::size_t i = 0; i < info_.size(); ++i)
            if (info_[i].name == name) return i;
        throw InvalidArgument("unknown parameter '" + name + "'");
    }
    double at(const std::string& name) const { return (*this)[index_of(name)]; }
    void set(const std::string& name, double value) { (*this)[index_of(name)] = value; }
    void set_free(const std::string& name, bool free) { info_[index_of(name)].free = free; }

    /// (d_beta, d_gamma, d_sigma)
    std::array<std::size_t, 3> partition() const {
        std::array<std::size_t, 3> p{0, 0, 0};
        for (const auto& pi : info_) ++p[static_cast<std::size_t>(pi.block)];
        return p;
    }
    std::vector<bool> positive_mask() const {
        std::vector<bool> m;
        for (const auto& pi : info_) m.push_back(pi.positive);
        return m;
    }
    std::vector<bool> free_mask() const {
        std::vector<bool> m;
        for (const auto& pi : info_) m.push_back(pi.free);
        return m;
    }
    std::vector<std::size_t> free_indices() const {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < info_.size(); ++i)
            if (info_[i].free) idx.push_back(i);
        return idx;
    }

    /// Throws if a value is non-finite or a positive coordinate is not > 0.
    void validate() const {
        for (std::size_t i = 0; i < info_.size(); ++i) {
            const double v = (*this)[i];
            if (!std::isfinite(v))
                throw InvalidArgument("parameter '" + info_[i].name + "' is not finite");
            if (info_[i].positive && !(v > 0.0))
                throw InvalidArgument("parameter '" + info_[i].name + "' must be positive");
        }
    }

    /// Coordinate i in optimizer space (log for positive coordinates).
    double transformed(std::size_t i) const {
        return info_[i].positive ? std::log((*this)[i]) : (*this)[i];
    }
    void set_transformed(std::size_t i, double u) {
        (*this)[i] = info_[i].positive ? std::exp(u) : u;
    }

private:
    std::vector<ParamInfo> info_;
    Eigen::VectorXd values_;
};

// ---------------------------------------------------------------------------
// Derived coefficients
// ---------------------------------------------------------------------------

/// @brief Every Vhat-composition used by the schemes and expansions, at one (x, theta).
///
/// Matrices store one column per noise index k (0-based here, k = 1..d_R in the math).
/// `level` records what is filled: 1 = first-derivative compositions, 2 = adds the Vhat_0 terms and
/// Vhat_k1 Vhat_k2 V_S0, 3 = adds the two third-derivative compositions of V_S0.
template <class T>
struct DerivedCoefficients {
    std::size_t d_R = 0;
    std::size_t d_S = 0;
    int level = 0;

    SVec<T> VR0;                     // d_R
    SVec<T> VS0;                     // d_S
    SMat<T> VR;                      // d_R x d_R, column k = V_{R,k}
    SMat<T> hatVk_VR0;               // d_R x d_R, column k = Vhat_k V_{R,0}
    SVec<T> hatV0_VR0;               // d_R
    SMat<T> hatV0_VRk;               // d_R x d_R, column k = Vhat_0 V_{R,k}
    std::array<SMat<T>, kMaxRough> hatVk1_VRk2;        // [k1] d_R x d_R, column k2
    SMat<T> hatVk_VS0;               // d_S x d_R
    SVec<T> hatV0_VS0;               // d_S
    std::array<SMat<T>, kMaxRough> hatVk1_hatVk2_VS0;  // [k1] d_S x d_R, column k2
    SMat<T> hatV0_hatVk_VS0;         // d_S x d_R
    SMat<T> hatVk_hatV0_VS0;         // d_S x d_R

    DerivedCoefficients() = default;
    DerivedCoefficients(std::size_t dR, std::size_t dS)
        : d_R(dR),
          d_S(dS),
          VR0(dR),
          VS0(dS),
          VR(dR, dR),
          hatVk_VR0(dR, dR),
          hatV0_VR0(dR),
          hatV0_VRk(dR, dR),
          hatVk_VS0(dS, dR),
          hatV0_VS0(dS),
          hatV0_hatVk_VS0(dS, dR),
          hatVk_hatV0_VS0(dS, dR) {
        for (std::size_t k = 0; k < dR; ++k) {
            hatVk1_VRk2[k] = SMat<T>(dR, dR);
            hatVk1_hatVk2_VS0[k] = SMat<T>(dS, dR);
        }
    }

    std::size_t dim() const noexcept { return d_R + d_S; }

    /// Drift V_0 entry a of the full state.
    const T& V0(std::size_t a) const { return a < d_R ? VR0[a] : VS0[a - d_R]; }
};

/// Throws CapabilityError unless `dc.level >= needed`.
template <class T>
void require_level(const DerivedCoefficients<T>& dc, int needed, const char* what) {
    if (dc.level < needed)
        throw CapabilityError(std::string(what) + " needs derivative level " +
                              std::to_string(needed) + " but the model provides " +
                              std::to_string(dc.level));
}

/// @brief Raw spatial derivative tensors of V_0 (all components) and V_R (all entries).
template <class T>
struct DerivativeTensors {
    std::size_t d = 0, dR = 0, dS = 0;
    int order = 0;
    std::vector<T> v0, j0, h0, t0;  // v0[i], j0[i*d+a], h0[(i*d+a)*d+b], t0 over smooth i only
    std::vector<T> vr, jr, hr;      // entry e = i + dR*k

    DerivativeTensors(std::size_t d_R, std::size_t d_S, int ord)
        : d(d_R + d_S), dR(d_R), dS(d_S), order(ord) {
        v0.assign(d, T(0.0));
        j0.assign(d * d, T(0.0));
        if (ord >= 2) h0.assign(d * d * d, T(0.0));
        if (ord >= 3) t0.assign(dS * d * d * d, T(0.0));
        vr.assign(dR * dR, T(0.0));
        jr.assign(dR * dR * d, T(0.0));
        if (ord >= 2) hr.assign(dR * dR * d * d, T(0.0));
    }

    T& J0(std::size_t i, std::size_t a) { return j0[i * d + a]; }
    T& H0(std::size_t i, std::size_t a, std::size_t b) { return h0[(i * d + a) * d + b]; }
    T& T0(std::size_t s, std::size_t a, std::size_t b, std::size_t c) {
        return t0[((s * d + a) * d + b) * d + c];
    }
    T& VRe(std::size_t i, std::size_t k) { return vr[i + dR * k]; }
    T& JR(std::size_t i, std::size_t k, std::size_t a) { return jr[(i + dR * k) * d + a]; }
    T& HR(std::size_t i, std::size_t k, std::size_t a, std::size_t b) {
        return hr[((i + dR * k) * d + a) * d + b];
    }
};

/// Assembles the Vhat-compositions from raw derivative tensors.
template <class T>
DerivedCoefficients<T> assemble_derived(DerivativeTensors<T>& D) {
    const std::size_t d = D.d, dR = D.dR, dS = D.dS;
    DerivedCoefficients<T> dc(dR, dS);
    for (std::size_t i = 0; i < dR; ++i) dc.VR0[i] = D.v0[i];
    for (std::size_t s = 0; s < dS; ++s) dc.VS0[s] = D.v0[dR + s];
    for (std::size_t k = 0; k < dR; ++k)
        for (std::size_t i = 0; i < dR; ++i) dc.VR(i, k) = D.VRe(i, k);

    auto VR = [&](std::size_t r, std::size_t k) -> const T& { return dc.VR(r, k); };
    auto V0 = [&](std::size_t a) -> const T& { return D.v0[a]; };

    // Level 1: Vhat_k applied to V_R0, V_S0, V_{R,k2}.
    for (std::size_t k = 0; k < dR; ++k) {
        for (std::size_t i = 0; i < d; ++i) {
            T acc(0.0);
            for (std::size_t r = 0; r < dR; ++r) acc = acc + D.J0(i, r) * VR(r, k);
            if (i < dR)
                dc.hatVk_VR0(i, k) = acc;
            else
                dc.hatVk_VS0(i - dR, k) = acc;
        }
        for (std::size_t k2 = 0; k2 < dR; ++k2)
            for (std::size_t i = 0; i < dR; ++i) {
                T acc(0.0);
                for (std::size_t r = 0; r < dR; ++r) acc = acc + D.JR(i, k2, r) * VR(r, k);
                dc.hatVk1_VRk2[k](i, k2) = acc;
            }
    }
    dc.level = 1;
    if (D.order < 2) return dc;

    // Vhat_0 of a scalar with gradient j(a) and rough Hessian h(r1, r2).
    auto hat0 = [&](auto&& j, auto&& h) {
        T acc(0.0);
        for (std::size_t a = 0; a < d; ++a) acc = acc + j(a) * V0(a);
        T quad(0.0);
        for (std::size_t k = 0; k < dR; ++k)
            for (std::size_t r1 = 0; r1 < dR; ++r1) {
                T row(0.0);
                for (std::size_t r2 = 0; r2 < dR; ++r2) row = row + h(r1, r2) * VR(r2, k);
                quad = quad + VR(r1, k) * row;
            }
        return acc + 0.5 * quad;
    };

    for (std::size_t i = 0; i < d; ++i) {
        T v = hat0([&](std::size_t a) -> T { return D.J0(i, a); },
                   [&](std::size_t a, std::size_t b) -> T { return D.H0(i, a, b); });
        if (i < dR)
            dc.hatV0_VR0[i] = v;
        else
            dc.hatV0_VS0[i - dR] = v;
    }
    for (std::size_t k = 0; k < dR; ++k)
        for (std::size_t i = 0; i < dR; ++i)
            dc.hatV0_VRk(i, k) =
                hat0([&](std::size_t a) -> T { return D.JR(i, k, a); },
                     [&](std::size_t a, std::size_t b) -> T { return D.HR(i, k, a, b); });
    for (std::size_t s = 0; s < dS; ++s) {
        const std::size_t f = dR + s;
        for (std::size_t k1 = 0; k1 < dR; ++k1)
            for (std::size_t k2 = 0; k2 < dR; ++k2) {
                T acc(0.0);
                for (std::size_t r = 0; r < dR; ++r)
                    for (std::size_t r2 = 0; r2 < dR; ++r2)
                        acc = acc + D.H0(f, r, r2) * VR(r2, k2) * VR(r, k1);
                for (std::size_t r2 = 0; r2 < dR; ++r2)
                    acc = acc + D.J0(f, r2) * dc.hatVk1_VRk2[k1](r2, k2);
                dc.hatVk1_hatVk2_VS0[k1](s, k2) = acc;
            }
    }
    dc.level = 2;
    if (dS == 0) {
        dc.level = 3;
        return dc;
    }
    if (D.order < 3) return dc;

    for (std::size_t s = 0; s < dS; ++s) {
        const std::size_t f = dR + s;
        // Vhat_0 Vhat_k V_S0
        for (std::size_t k = 0; k < dR; ++k) {
            auto grad = [&](std::size_t a) -> T {
                T acc(0.0);
                for (std::size_t r = 0; r < dR; ++r)
                    acc = acc + D.H0(f, a, r) * VR(r, k) + D.J0(f, r) * D.JR(r, k, a);
                return acc;
            };
            auto hess = [&](std::size_t a, std::size_t b) -> T {
                T acc(0.0);
                for (std::size_t r = 0; r < dR; ++r)
                    acc = acc + D.T0(s, a, b, r) * VR(r, k) + D.H0(f, a, r) * D.JR(r, k, b) +
                          D.H0(f, b, r) * D.JR(r, k, a) + D.J0(f, r) * D.HR(r, k, a, b);
                return acc;
            };
            dc.hatV0_hatVk_VS0(s, k) = hat0(grad, hess);
        }
        // Vhat_k Vhat_0 V_S0: gradient of h = Vhat_0 V_S0 in rough directions
        std::array<T, kMaxDim> dh{};
        for (std::size_t b = 0; b < dR; ++b) {
            T acc(0.0);
            for (std::size_t a = 0; a < d; ++a)
                acc = acc + D.H0(f, b, a) * V0(a) + D.J0(f, a) * D.J0(a, b);
            T quad(0.0);
            for (std::size_t j = 0; j < dR; ++j)
                for (std::size_t r1 = 0; r1 < dR; ++r1)
                    for (std::size_t r2 = 0; r2 < dR; ++r2)
                        quad = quad + D.T0(s, b, r1, r2) * VR(r1, j) * VR(r2, j) +
                               2.0 * D.JR(r1, j, b) * D.H0(f, r1, r2) * VR(r2, j);
            dh[b] = acc + 0.5 * quad;
        }
        for (std::size_t k = 0; k < dR; ++k) {
            T acc(0.0);
            for (std::size_t b = 0; b < dR; ++b) acc = acc + dh[b] * VR(b, k);
            dc.hatVk_hatV0_VS0(s, k) = acc;
        }
    }
    dc.level = 3;
    return dc;
}

// ---------------------------------------------------------------------------
// Templated (static) models
// ---------------------------------------------------------------------------

/// A model type with compile-time dimensions and scalar-generic evaluators:
///   template <class S, class P> void drift(const S* x, const P* theta, S* out) const;
///   template <class S, class P> void diffusion(const S* x, const P* theta, S* out) const;  // column-major
template <class M>
concept StaticModel = requires(const M& m) {
    { M::kRough } -> std::convertible_to<std::size_t>;
    { M::kSmooth } -> std::convertible_to<std::size_t>;
    { m.parameters() } -> std::convertible_to<std::vector<ParamInfo>>;
    { m.name() } -> std::convertible_to<std::string>;
};

/// Model types may provide closed-form compositions:
///   template <class T> DerivedCoefficients<T> derived_analytic(const T* x, const T* theta) const;
template <class M, class T>
concept HasAnalyticDerived = requires(const M& m, const T* x, const T* th) {
    { m.derived_analytic(x, th) } -> std::same_as<DerivedCoefficients<T>>;
};

/// Exact derived coefficients by forward-mode jets of order K (K = 3 unless the model is elliptic).
template <class M, class T>
DerivedCoefficients<T> derived_ad(const M& m, const T* x, const T* theta) {
    constexpr int dR = static_cast<int>(M::kRough);
    constexpr int dS = static_cast<int>(M::kSmooth);
    constexpr int N = dR + dS;
    constexpr int K = dS > 0 ? 3 : 2;
    using J = Jet<T, N, K>;

    std::array<J, N> xj;
    for (int a = 0; a < N; ++a) xj[a] = J::variable(x[a], a);
    std::array<J, N> drift;
    std::array<J, dR * dR> diff;
    m.drift(xj.data(), theta, drift.data());
    m.diffusion(xj.data(), theta, diff.data());

    DerivativeTensors<T> D(dR, dS, K);
    for (int i = 0; i < N; ++i) {
        D.v0[i] = drift[i].v;
        for (int a = 0; a < N; ++a) {
            D.J0(i, a) = drift[i].g[a];
            for (int b = 0; b < N; ++b) {
                D.H0(i, a, b) = drift[i].hess(a, b);
                if constexpr (K >= 3) {
                    if (i >= dR)
                        for (int c = 0; c < N; ++c)
                            D.T0(i - dR, a, b, c) = drift[i].third(a, b, c);
                }
            }
        }
    }
    for (int k = 0; k < dR; ++k)
        for (int i = 0; i < dR; ++i) {
            const J& e = diff[i + dR * k];
            D.VRe(i, k) = e.v;
            for (int a = 0; a < N; ++a) {
                D.JR(i, k, a) = e.g[a];
                for (int b = 0; b < N; ++b) D.HR(i, k, a, b) = e.hess(a, b);
            }
        }
    return assemble_derived(D);
}

/// Derived coefficients of a static model: closed form when available, else jets.
template <StaticModel M, class T>
DerivedCoefficients<T> derived_coefficients(const M& m, const T* x, const T* theta) {
    if constexpr (HasAnalyticDerived<M, T>)
        return m.derived_analytic(x, theta);
    else
        return derived_ad(m, x, theta);
}

// ---------------------------------------------------------------------------
// Runtime (type-erased) models
// ---------------------------------------------------------------------------

/// Structural data of a stochastic damping Hamiltonian system:
///   dX_R = -(c(X_S) X_R + g(X_S)) dt + diag(sigma) dB,  dX_S = X_R dt.
struct SdhsView {
    Eigen::MatrixXd c;      // d x d damping matrix at x_S, d = d_R = d_S
    Eigen::VectorXd sigma;  // diagonal noise scales
};

/// @brief Runtime SDE model over doubles. Immutable; safe to share across threads.
class Model {
public:
    virtual ~Model() = default;

    virtual std::string name() const = 0;
    virtual std::size_t rough_dim() const = 0;
    virtual std::size_t smooth_dim() const = 0;
    std::size_t dim() const { return rough_dim() + smooth_dim(); }
    bool is_hypoelliptic() const { return smooth_dim() > 0; }

    virtual const std::vector<ParamInfo>& parameters() const = 0;
    Theta default_theta() const { return Theta(parameters()); }

    /// Stacked drift [V_R0; V_S0], length d.
    virtual void drift(const double* x, const double* theta, double* out) const = 0;
    /// Diffusion V_R, column-major d_R x d_R.
    virtual void diffusion(const double* x, const double* theta, double* out) const = 0;

    /// Highest derivative level derived() can deliver (see DerivedCoefficients::level).
    virtual int derivative_level() const = 0;
    /// True when derived() uses exact derivatives rather than finite differences.
    virtual bool has_analytic_derivatives() const = 0;
    virtual DerivedCoefficients<double> derived(const double* x, const double* theta) const {
        return derived_fd(x, theta, derivative_level());
    }

    /// True when Sigma_1 and the G matrix do not depend on the state.
    virtual bool state_independent_covariance() const { return false; }

    /// SDHS structure at x, if the model declares it.
    virtual bool is_sdhs() const { return false; }
    virtual SdhsView sdhs(const double* /*x*/, const double* /*theta*/) const {
        throw CapabilityError("model '" + name() + "' is not SDHS-structured");
    }

    /// Nested central differences of drift and diffusion, up to the given level.
    DerivedCoefficients<double> derived_fd(const double* x, const double* theta, int level) const;
};

/// Finite-difference step scales for orders 1, 2 and 3, multiplied by max(1, |x_i|).
inline constexpr double kFdStep1 = 1e-5;
inline constexpr double kFdStep2 = 1e-4;
inline constexpr double kFdStep3 = 2e-3;

namespace detail {

/// Evaluates all drift components and diffusion entries into one flat vector.
inline void eval_all(const Model& m, const double* x, const double* th, std::vector<double>& out) {
    const std::size_t d = m.dim(), dR = m.rough_dim();
    out.resize(d + dR * dR);
    m.drift(x, th, out.data());
    m.diffusion(x, th, out.data() + d);
}

}  // namespace detail

inline DerivedCoefficients<double> Model::derived_fd(const double* x, const double* theta,
                                                     int level) const {
    const std::size_t d = dim(), dR = rough_dim(), dS = smooth_dim();
    const int order = level <= 1 ? 1 : (level == 2 ? 2 : 3);
    const std::size_t nf = d + dR * dR;
    std::vector<double> xv(x, x + d), f0, fp, fm, tmp;
    detail::eval_all(*this, x, theta, f0);

    auto step = [&](std::size_t a, double base) { return base * std::max(1.0, std::abs(x[a])); };

    // Gradient of every output at point xv with scale h.
    auto gradient = [&](std::vector<double>& pt, double base, std::vector<double>& g) {
        g.assign(nf * d, 0.0);
        for (std::size_t a = 0; a < d; ++a) {
            const double h = step(a, base);
            const double keep = pt[a];
            pt[a] = keep + h;
            detail::eval_all(*this, pt.data(), theta, fp);
            pt[a] = keep - h;
            detail::eval_all(*this, pt.data(), theta, fm);
            pt[a] = keep;
            for (std::size_t e = 0; e < nf; ++e) g[e * d + a] = (fp[e] - fm[e]) / (2.0 * h);
        }
    };
    // Hessian of every output at pt: four-point mixed central differences with scale h.
    auto hessian = [&](std::vector<double>& pt, double base, std::vector<double>& H) {
        H.assign(nf * d * d, 0.0);
        std::vector<double> fpp, fpm, fmp, fmm;
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = a; b < d; ++b) {
                const double ha = step(a, base), hb = step(b, base);
                const double ka = pt[a], kb = pt[b];
                auto at = [&](double sa, double sb, std::vector<double>& out) {
                    pt[a] = ka;
                    pt[b] = kb;
                    pt[a] += sa * ha;
                    pt[b] += sb * hb;
                    detail::eval_all(*this, pt.data(), theta, out);
                };
                at(1, 1, fpp);
                at(1, -1, fpm);
                at(-1, 1, fmp);
                at(-1, -1, fmm);
                pt[a] = ka;
                pt[b] = kb;
                for (std::size_t e = 0; e < nf; ++e) {
                    const double v = (fpp[e] - fpm[e] - fmp[e] + fmm[e]) / (4.0 * ha * hb);
                    H[(e * d + a) * d + b] = v;
                    H[(e * d + b) * d + a] = v;
                }
            }
    };

    DerivativeTensors<double> D(dR, dS, order);
    std::vector<double> G, H;
    gradient(xv, kFdStep1, G);
    if (order >= 2) hessian(xv, kFdStep2, H);
    for (std::size_t i = 0; i < d; ++i) {
        D.v0[i] = f0[i];
        for (std::size_t a = 0; a < d; ++a) {
            D.J0(i, a) = G[i * d + a];
            if (order >= 2)
                for (std::size_t b = 0; b < d; ++b) D.H0(i, a, b) = H[(i * d + a) * d + b];
        }
    }
    for (std::size_t k = 0; k < dR; ++k)
        for (std::size_t i = 0; i < dR; ++i) {
            const std::size_t e = d + i + dR * k;
            D.VRe(i, k) = f0[e];
            for (std::size_t a = 0; a < d; ++a) {
                D.JR(i, k, a) = G[e * d + a];
                if (order >= 2)
                    for (std::size_t b = 0; b < d; ++b) D.HR(i, k, a, b) = H[(e * d + a) * d + b];
            }
        }
    if (order >= 3 && dS > 0) {
        // Third derivatives of V_S0 as central differences of Hessians.
        std::vector<double> Hp, Hm;
        for (std::size_t c = 0; c < d; ++c) {
            const double h = step(c, kFdStep3);
            const double keep = xv[c];
            xv[c] = keep + h;
            hessian(xv, kFdStep3, Hp);
            xv[c] = keep - h;
            hessian(xv, kFdStep3, Hm);
            xv[c] = keep;
            for (std::size_t s = 0; s < dS; ++s) {
                const std::size_t e = dR + s;
                for (std::size_t a = 0; a < d; ++a)
                    for (std::size_t b = 0; b < d; ++b)
                        D.T0(s, a, b, c) =
                            (Hp[(e * d + a) * d + b] - Hm[(e * d + a) * d + b]) / (2.0 * h);
            }
        }
    }
    return assemble_derived(D);
}

/// @brief Wraps a static model as a runtime Model.
template <StaticModel M>
class ModelAdapter final : public Model {
public:
    explicit ModelAdapter(M impl) : impl_(std::move(impl)), params_(impl_.parameters()) {}
    ModelAdapter(M impl, std::vector<ParamInfo> params)
        : impl_(std::move(impl)), params_(std::move(params)) {}

    const M& impl() const noexcept { return impl_; }

    std::string name() const override { return impl_.name(); }
    std::size_t rough_dim() const override { return M::kRough; }
    std::size_t smooth_dim() const override { return M::kSmooth; }
    const std::vector<ParamInfo>& parameters() const override { return params_; }

    void drift(const double* x, const double* theta, double* out) const override {
        impl_.drift(x, theta, out);
    }
    void diffusion(const double* x, const double* theta, double* out) const override {
        impl_.diffusion(x, theta, out);
    }
    int derivative_level() const override { return 3; }
    bool has_analytic_derivatives() const override { return true; }
    DerivedCoefficients<double> derived(const double* x, const double* theta) const override {
        return derived_coefficients<M, double>(impl_, x, theta);
    }
    bool state_independent_covariance() const override {
        if constexpr (requires { M::kStateIndependentCovariance; })
            return M::kStateIndependentCovariance;
        else
            return false;
    }
    bool is_sdhs() const override {
        if constexpr (requires(const M& m, const double* p, SdhsView& v) { m.sdhs(p, p, v); })
            return true;
        else
            return false;
    }
    SdhsView sdhs(const double* x, const double* theta) const override {
        if constexpr (requires(const M& m, const double* p, SdhsView& v) { m.sdhs(p, p, v); }) {
            SdhsView v;
            impl_.sdhs(x, theta, v);
            return v;
        } else {
            return Model::sdhs(x, theta);
        }
    }

private:
    M impl_;
    std::vector<ParamInfo> params_;
};

/// @brief A runtime model from plain callbacks; derivatives by finite differences up to `max_level`.
class CallbackModel final : public Model {
public:
    using Fn = std::function<void(const double* x, const double* theta, double* out)>;

    CallbackModel(std::string name, std::size_t d_R, std::size_t d_S, std::vector<ParamInfo> params,
                  Fn drift, Fn diffusion, int max_level = 3)
        : name_(std::move(name)),
          d_R_(d_R),
          d_S_(d_S),
          params_(std::move(params)),
          drift_(std::move(drift)),
          diffusion_(std::move(diffusion)),
          max_level_(max_level) {
        if (d_R < 1 || d_R > kMaxRough || d_R + d_S > kMaxDim)
            throw DimensionError("CallbackModel: unsupported dimensions");
    }

    std::string name() const override { return name_; }
    std::size_t rough_dim() const override { return d_R_; }
    std::size_t smooth_dim() const override { return d_S_; }
    const std::vector<ParamInfo>& parameters() const override { return params_; }
    void drift(const double* x, const double* theta, double* out) const override {
        drift_(x, theta, out);
    }
    void diffusion(const double* x, const double* theta, double* out) const override {
        diffusion_(x, theta, out);
    }
    int derivative_level() const override { return max_level_; }
    bool has_analytic_derivatives() const override { return false; }

private:
    std::string name_;
    std::size_t d_R_, d_S_;
    std::vector<ParamInfo> params_;
    Fn drift_, diffusion_;
    int max_level_;
};

// ---------------------------------------------------------------------------
// Evaluation entry points
// ---------------------------------------------------------------------------

struct Coefficients {
    Eigen::VectorXd drift;      // d
    Eigen::MatrixXd diffusion;  // d_R x d_R
};

/// Drift and diffusion at (x, theta); throws ModelEvaluationError naming a non-finite coordinate.
inline Coefficients eval_coefficients(const Model& model, const Eigen::VectorXd& x,
                                      const Theta& theta) {
    const std::size_t d = model.dim(), dR = model.rough_dim();
    if (static_cast<std::size_t>(x.size()) != d)
        throw DimensionError("eval_coefficients: state has wrong dimension");
    for (std::size_t i = 0; i < d; ++i)
        if (!std::isfinite(x[static_cast<Eigen::Index>(i)]))
            throw ModelEvaluationError("state coordinate " + std::to_string(i) + " is not finite", i);
    Coefficients c{Eigen::VectorXd(static_cast<Eigen::Index>(d)),
                   Eigen::MatrixXd(static_cast<Eigen::Index>(dR), static_cast<Eigen::Index>(dR))};
    model.drift(x.data(), theta.data(), c.drift.data());
    model.diffusion(x.data(), theta.data(), c.diffusion.data());
    for (std::size_t i = 0; i < d; ++i)
        if (!std::isfinite(c.drift[static_cast<Eigen::Index>(i)]))
            throw ModelEvaluationError(
                model.name() + ": drift coordinate " + std::to_string(i) + " is not finite", i);
    for (std::size_t e = 0; e < dR * dR; ++e)
        if (!std::isfinite(c.diffusion.data()[e]))
            throw ModelEvaluationError(model.name() + ": diffusion entry (" +
                                           std::to_string(e % dR) + "," + std::to_string(e / dR) +
                                           ") is not finite",
                                       e);
    return c;
}

/// Vhat-compositions at (x, theta) using the model's best derivative source.
inline DerivedCoefficients<double> derived_coefficients(const Model& model,
                                                        const Eigen::VectorXd& x,
                                                        const Theta& theta) {
    if (static_cast<std::size_t>(x.size()) != model.dim())
        throw DimensionError("derived_coefficients: state has wrong dimension");
    return model.derived(x.data(), theta.data());
}

/// a_R = V_R V_R^T at (x, theta).
inline Eigen::MatrixXd diffusion_covariance(const Model& model, const Eigen::VectorXd& x,
                                            const Theta& theta) {
    const auto c = eval_coefficients(model, x, theta);
    return c.diffusion * c.diffusion.transpose();
}

}  // namespace hypo
