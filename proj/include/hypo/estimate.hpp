#pragma once

/// @file estimate.hpp
/// @brief Contrast functions for complete high-frequency observations, their gradients,
/// Adam minimization, the quadratic-variation baseline and replicate studies.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hypo/core/error.hpp"
#include "hypo/core/jet.hpp"
#include "hypo/core/parallel.hpp"
#include "hypo/core/rng.hpp"
#include "hypo/expansion.hpp"
#include "hypo/gauss.hpp"
#include "hypo/model.hpp"
#include "hypo/models/builtin.hpp"
#include "hypo/scheme.hpp"

namespace hypo {

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Which contrast to evaluate: with the Phi_2 correction or the plain local Gaussian one.
enum class ContrastMethod { new_contrast, local_gaussian };

inline std::string to_string(ContrastMethod m) { return m == ContrastMethod::new_contrast ? "new" : "lg"; }

inline ContrastMethod parse_contrast_method(const std::string& s) {
    if (s == "new" || s == "new_contrast") return ContrastMethod::new_contrast;
    if (s == "lg" || s == "local_gaussian") return ContrastMethod::local_gaussian;
    throw InvalidArgument("unknown contrast method '" + s + "' (expected new or lg)");
}

/// @brief Sigma_1 failed to factorize at one observation.
class ContrastSpdError : public SpdError {
public:
    ContrastSpdError(const std::string& what, std::size_t observation, const SpdError& cause)
        : SpdError(what, cause.pivot_index(), cause.pivot_value()), observation_(observation) {}
    /// Index m of the transition X_{m-1} -> X_m, counted from 1.
    std::size_t observation() const noexcept { return observation_; }

private:
    std::size_t observation_;
};

/// @brief Adam aborted on a non-finite objective or gradient.
class OptimizationError : public Error {
public:
    OptimizationError(const std::string& what, std::size_t iteration, std::vector<double> trace)
        : Error(what), iteration_(iteration), trace_(std::move(trace)) {}
    std::size_t iteration() const noexcept { return iteration_; }
    const std::vector<double>& trace() const noexcept { return trace_; }

private:
    std::size_t iteration_;
    std::vector<double> trace_;
};

struct ContrastOptions {
    std::size_t workers = 1;
};

/// Sums of the three contrast pieces over all transitions.
template <class T>
struct ContrastParts {
    T quadratic{0.0};
    T logdet{0.0};
    T phi2{0.0};

    ContrastParts() = default;
    ContrastParts(double) {}  // NOLINT: zero element for the reductions

    friend ContrastParts operator+(const ContrastParts& a, const ContrastParts& b) {
        ContrastParts s;
        s.quadratic = a.quadratic + b.quadratic;
        s.logdet = a.logdet + b.logdet;
        s.phi2 = a.phi2 + b.phi2;
        return s;
    }

    /// quadratic + logdet - 2 Delta phi2 (the last term only for the new contrast).
    T total(ContrastMethod method, double delta) const {
        T out = quadratic + logdet;
        if (method == ContrastMethod::new_contrast) out = out - 2.0 * delta * phi2;
        return out;
    }
};

inline void validate_observations(const Model& model, const ObservationSet& obs) {
    if (obs.n() < 1) throw InvalidArgument("observations: need at least two states");
    if (!(obs.delta > 0.0)) throw InvalidArgument("observations: step must be positive");
    if (static_cast<std::size_t>(obs.states.cols()) != model.dim())
        throw DimensionError("observations: state dimension does not match model '" + model.name() + "'");
    if (!obs.states.allFinite()) throw InvalidArgument("observations: non-finite state");
}

// ---------------------------------------------------------------------------
// Scalar-generic contrast
// ---------------------------------------------------------------------------

namespace detail {

/// Sigma_1, its inverse, log-determinant and G, when none of them depends on the state.
template <class T>
struct Sigma1Cache {
    SMat<T> L;
    SMat<T> inv;
    SMat<T> G;
    T logdet{0.0};
};

template <class T>
Sigma1Cache<T> make_sigma1_cache(const DerivedCoefficients<T>& dc, bool with_g) {
    Sigma1Cache<T> c;
    c.L = cholesky(lg_covariance(dc, 1.0));
    c.inv = chol_inverse(c.L);
    c.logdet = chol_logdet(c.L);
    if (with_g) c.G = g_matrix(dc);
    return c;
}

template <class T>
ContrastParts<T> contrast_term(const DerivedCoefficients<T>& dc, const double* x, const double* y,
                               double delta, bool with_phi2, const Sigma1Cache<T>* cache) {
    const std::size_t d = dc.dim();
    SVec<T> xs(d);
    for (std::size_t i = 0; i < d; ++i) xs[i] = T(x[i]);
    const SVec<T> mu = lg_mean(dc, xs.begin(), delta);
    const SVec<T> r = normalized_residual(mu, y, dc.d_R, delta);
    ContrastParts<T> out;
    SVec<T> h1(d);
    if (cache) {
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) h1[i] = h1[i] + cache->inv(i, j) * r[j];
        out.logdet = cache->logdet;
    } else {
        const SMat<T> L = cholesky(lg_covariance(dc, 1.0));
        h1 = chol_solve(L, r);
        out.logdet = chol_logdet(L);
        if (with_phi2) out.phi2 = contract_hermite2(g_matrix(dc), h1, chol_inverse(L));
    }
    for (std::size_t i = 0; i < d; ++i) out.quadratic = out.quadratic + r[i] * h1[i];
    if (cache && with_phi2) out.phi2 = contract_hermite2(cache->G, h1, cache->inv);
    return out;
}

/// Sums contrast terms; `dc_at(x)` returns the derived coefficients at the state pointer x.
template <class T, class DcAt>
ContrastParts<T> contrast_sum(const ObservationSet& obs, DcAt&& dc_at, ContrastMethod method,
                              bool state_independent, std::size_t workers) {
    const std::size_t n = obs.n();
    const auto d = static_cast<std::size_t>(obs.states.cols());
    // Row-major copy so each state is contiguous.
    std::vector<double> xs((n + 1) * d);
    for (std::size_t m = 0; m <= n; ++m)
        for (std::size_t i = 0; i < d; ++i)
            xs[m * d + i] = obs.states(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(i));
    const bool with_phi2 = method == ContrastMethod::new_contrast;
    std::optional<Sigma1Cache<T>> cache;
    if (state_independent) {
        try {
            cache = make_sigma1_cache(dc_at(xs.data()), with_phi2);
        } catch (const SpdError& e) {
            throw ContrastSpdError("contrast: Sigma_1 is not SPD at observation 1", 1, e);
        }
    }
    const Sigma1Cache<T>* cp = cache ? &*cache : nullptr;
    return deterministic_sum<ContrastParts<T>>(n, workers, [&](std::size_t m) {
        const double* x = xs.data() + m * d;
        try {
            return contrast_term(dc_at(x), x, x + d, obs.delta, with_phi2, cp);
        } catch (const SpdError& e) {
            throw ContrastSpdError("contrast: Sigma_1 is not SPD at observation " + std::to_string(m + 1),
                                   m + 1, e);
        }
    });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Runtime contrast
// ---------------------------------------------------------------------------

/// The three summed pieces of the contrast at theta (phi2 is left at zero for the LG method).
inline ContrastParts<double> contrast_parts(const Model& model, const ObservationSet& obs, const Theta& theta,
                                            ContrastMethod method = ContrastMethod::new_contrast,
                                            const ContrastOptions& opt = {}) {
    validate_observations(model, obs);
    theta.validate();
    if (model.is_hypoelliptic() && model.derivative_level() < 2)
        throw CapabilityError("contrast: model '" + model.name() + "' lacks second-order derivatives");
    if (method == ContrastMethod::new_contrast && model.derivative_level() < (model.is_hypoelliptic() ? 3 : 2))
        throw CapabilityError("contrast: model '" + model.name() + "' cannot provide the Phi_2 coefficients");
    const double* th = theta.data();
    return detail::contrast_sum<double>(
        obs, [&](const double* x) { return model.derived(x, th); }, method,
        model.state_independent_covariance(), opt.workers);
}

/// Proxy of -2 log-likelihood: sum of quadratic forms plus log|Sigma_1|, minus 2 Delta sum Phi_2
/// for the new contrast. Elliptic models use the rough blocks only.
inline double contrast(const Model& model, const ObservationSet& obs, const Theta& theta,
                       ContrastMethod method = ContrastMethod::new_contrast, const ContrastOptions& opt = {}) {
    return contrast_parts(model, obs, theta, method, opt).total(method, obs.delta);
}

// ---------------------------------------------------------------------------
// Gradients
// ---------------------------------------------------------------------------

/// Largest number of free parameters handled by forward-mode gradients.
inline constexpr int kMaxJetParams = 6;

enum class GradientMode { automatic, finite_difference };

struct GradientOptions {
    GradientMode mode = GradientMode::automatic;
    double fd_step = 1e-6;  // central differences in transformed coordinates
    ContrastOptions contrast;
};

/// @brief Contrast value and its gradient in transformed free coordinates.
struct ContrastGradient {
    double value = 0.0;
    Eigen::VectorXd gradient;  // one entry per free parameter, log scale for positive ones
    bool automatic = false;    // false when finite differences were used
};

namespace detail {

template <int P, class Fn>
bool dispatch_jet_size(int p, Fn&& fn) {
    if (p == P) {
        fn(std::integral_constant<int, P>{});
        return true;
    }
    if constexpr (P < kMaxJetParams)
        return dispatch_jet_size<P + 1>(p, std::forward<Fn>(fn));
    else
        return false;
}

template <StaticModel M, int P>
ContrastGradient contrast_gradient_jet(const M& impl, const Model& model, const ObservationSet& obs,
                                       const Theta& theta, ContrastMethod method, const ContrastOptions& opt) {
    using J = Jet<double, P, 1>;
    const auto free = theta.free_indices();
    std::vector<J> th(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) th[i] = J(theta[i]);
    for (int k = 0; k < P; ++k) {
        const std::size_t i = free[static_cast<std::size_t>(k)];
        // d theta / d u: theta for log-transformed coordinates.
        th[i].g[static_cast<std::size_t>(k)] = theta.info()[i].positive ? theta[i] : 1.0;
    }
    const auto parts = contrast_sum<J>(
        obs,
        [&](const double* x) {
            SVec<J> xj(model.dim());
            for (std::size_t a = 0; a < model.dim(); ++a) xj[a] = J(x[a]);
            return derived_coefficients<M, J>(impl, xj.begin(), th.data());
        },
        method, model.state_independent_covariance(), opt.workers);
    const J total = parts.total(method, obs.delta);
    ContrastGradient out;
    out.value = total.v;
    out.gradient.resize(P);
    for (int k = 0; k < P; ++k) out.gradient[k] = total.g[static_cast<std::size_t>(k)];
    out.automatic = true;
    return out;
}

}  // namespace detail

/// Gradient by central differences in transformed free coordinates.
inline ContrastGradient contrast_gradient_fd(const Model& model, const ObservationSet& obs, const Theta& theta,
                                             ContrastMethod method, double h = 1e-6,
                                             const ContrastOptions& opt = {}) {
    const auto free = theta.free_indices();
    ContrastGradient out;
    out.value = contrast(model, obs, theta, method, opt);
    out.gradient.resize(static_cast<Eigen::Index>(free.size()));
    for (std::size_t k = 0; k < free.size(); ++k) {
        Theta tp = theta, tm = theta;
        const double u = theta.transformed(free[k]);
        tp.set_transformed(free[k], u + h);
        tm.set_transformed(free[k], u - h);
        out.gradient[static_cast<Eigen::Index>(k)] =
            (contrast(model, obs, tp, method, opt) - contrast(model, obs, tm, method, opt)) / (2.0 * h);
    }
    return out;
}

/// Contrast gradient with respect to the free coordinates in transformed space.
/// Builtin models with at most kMaxJetParams free parameters use forward-mode jets; others fall back
/// to central differences. Throws if any entry is non-finite.
inline ContrastGradient contrast_gradient(const Model& model, const ObservationSet& obs, const Theta& theta,
                                          ContrastMethod method = ContrastMethod::new_contrast,
                                          const GradientOptions& opt = {}) {
    validate_observations(model, obs);
    theta.validate();
    const int p = static_cast<int>(theta.free_indices().size());
    std::optional<ContrastGradient> out;
    if (opt.mode == GradientMode::automatic && p >= 1) {
        visit_static_model(model, [&](const auto& impl) {
            using M = std::decay_t<decltype(impl)>;
            detail::dispatch_jet_size<1>(p, [&](auto pc) {
                out = detail::contrast_gradient_jet<M, decltype(pc)::value>(impl, model, obs, theta, method,
                                                                             opt.contrast);
            });
        });
    }
    if (!out) out = contrast_gradient_fd(model, obs, theta, method, opt.fd_step, opt.contrast);
    if (!std::isfinite(out->value) || !out->gradient.allFinite())
        throw InvalidArgument("contrast_gradient: non-finite value or gradient entry");
    return *out;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
    double step_size = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t n_iters = 20000;
    double grad_tol = 0.0;      // stop once the gradient norm drops below this; 0 disables
    bool keep_trace = false;    // record the objective at every iteration
};

/// Objective in optimizer coordinates; fills `grad` and returns the value.
using Objective = std::function<double(const Eigen::VectorXd& u, Eigen::VectorXd& grad)>;

struct AdamResult {
    Eigen::VectorXd u;
    double value = 0.0;
    std::size_t iterations = 0;
    std::vector<double> trace;
};

/// Adam with bias-corrected moments. `value` is the objective at the returned point.
inline AdamResult adam_minimize(const Objective& f, Eigen::VectorXd u0, const AdamConfig& cfg = {}) {
    const auto p = u0.size();
    Eigen::VectorXd m = Eigen::VectorXd::Zero(p), v = Eigen::VectorXd::Zero(p), g(p);
    AdamResult res;
    res.u = std::move(u0);
    double value = f(res.u, g);
    if (!std::isfinite(value) || !g.allFinite())
        throw OptimizationError("adam: objective not finite at the starting point", 0, {});
    double b1t = 1.0, b2t = 1.0;
    std::size_t it = 0;
    for (; it < cfg.n_iters; ++it) {
        if (cfg.keep_trace) res.trace.push_back(value);
        if (cfg.grad_tol > 0.0 && g.norm() < cfg.grad_tol) break;
        b1t *= cfg.beta1;
        b2t *= cfg.beta2;
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        const Eigen::VectorXd mhat = m / (1.0 - b1t);
        const Eigen::VectorXd vhat = v / (1.0 - b2t);
        res.u -= (cfg.step_size * mhat.array() / (vhat.array().sqrt() + cfg.epsilon)).matrix();
        value = f(res.u, g);
        if (!std::isfinite(value) || !g.allFinite()) {
            res.trace.push_back(value);
            throw OptimizationError("adam: non-finite objective at iteration " + std::to_string(it + 1), it + 1,
                                    res.trace);
        }
    }
    if (cfg.keep_trace) res.trace.push_back(value);
    res.value = value;
    res.iterations = it;
    return res;
}

/// @brief Result of one contrast minimization.
struct EstimateReport {
    Theta theta_hat;
    double objective = 0.0;
    std::size_t iterations = 0;
    std::vector<double> trace;
    ContrastMethod method = ContrastMethod::new_contrast;
};

/// Free coordinates of theta in optimizer space.
inline Eigen::VectorXd to_optimizer(const Theta& theta) {
    const auto free = theta.free_indices();
    Eigen::VectorXd u(static_cast<Eigen::Index>(free.size()));
    for (std::size_t k = 0; k < free.size(); ++k) u[static_cast<Eigen::Index>(k)] = theta.transformed(free[k]);
    return u;
}

inline Theta from_optimizer(const Theta& base, const Eigen::VectorXd& u) {
    Theta t = base;
    const auto free = t.free_indices();
    for (std::size_t k = 0; k < free.size(); ++k) t.set_transformed(free[k], u[static_cast<Eigen::Index>(k)]);
    return t;
}

/// Minimizes the contrast over the free parameters, starting from theta0.
inline EstimateReport estimate(const Model& model, const ObservationSet& obs, const Theta& theta0,
                               ContrastMethod method, const AdamConfig& adam = {},
                               const GradientOptions& gopt = {}) {
    const Objective f = [&](const Eigen::VectorXd& u, Eigen::VectorXd& grad) {
        const auto cg = contrast_gradient(model, obs, from_optimizer(theta0, u), method, gopt);
        grad = cg.gradient;
        return cg.value;
    };
    const AdamResult r = adam_minimize(f, to_optimizer(theta0), adam);
    EstimateReport rep;
    rep.theta_hat = from_optimizer(theta0, r.u);
    rep.objective = r.value;
    rep.iterations = r.iterations;
    rep.trace = r.trace;
    rep.method = method;
    return rep;
}

// ---------------------------------------------------------------------------
// Quadratic-variation baseline
// ---------------------------------------------------------------------------

/// sqrt((1 / T) sum_m (X_m - X_{m-1})^2) for one coordinate, T = n Delta.
inline double qv_sigma(const ObservationSet& obs, std::size_t coord) {
    if (obs.n() < 1) throw InvalidArgument("qv_sigma: need at least two states");
    if (coord >= static_cast<std::size_t>(obs.states.cols())) throw DimensionError("qv_sigma: coordinate out of range");
    const auto c = static_cast<Eigen::Index>(coord);
    std::vector<double> sq(obs.n());
    for (std::size_t m = 1; m <= obs.n(); ++m) {
        const double inc = obs.states(static_cast<Eigen::Index>(m), c) - obs.states(static_cast<Eigen::Index>(m - 1), c);
        sq[m - 1] = inc * inc;
    }
    return std::sqrt(pairwise_sum(sq) / (static_cast<double>(obs.n()) * obs.delta));
}

// ---------------------------------------------------------------------------
// Replicate studies
// ---------------------------------------------------------------------------

/// @brief Observation design: n transitions of step delta, simulated on a fine grid and subsampled.
struct StudyDesign {
    std::string name;
    std::size_t n = 0;
    double delta = 0.0;
    double fine_delta = 1e-4;
};

/// Named designs from the experiments: fn1..fn3 and jr1..jr3.
inline StudyDesign named_design(const std::string& name) {
    if (name == "fn1") return {name, 5000, 0.02};
    if (name == "fn2") return {name, 10000, 0.01};
    if (name == "fn3") return {name, 20000, 0.005};
    if (name == "jr1") return {name, 12500, 0.008};
    if (name == "jr2") return {name, 25000, 0.004};
    if (name == "jr3") return {name, 50000, 0.002};
    throw InvalidArgument("unknown design '" + name + "'");
}

struct StudyConfig {
    StudyDesign design;
    std::size_t n_replicates = 10;
    std::vector<ContrastMethod> methods{ContrastMethod::new_contrast, ContrastMethod::local_gaussian};
    std::uint64_t seed = 0;
    AdamConfig adam;
    double start_jitter = 0.2;     // theta0 = truth * U(1 - j, 1 + j) per free coordinate
    std::size_t workers = 1;       // replicates run in parallel
    std::optional<Eigen::VectorXd> x0;  // initial state; zeros by default
    std::vector<std::size_t> qv_coords; // coordinates for the quadratic-variation baseline
};

/// One row of the replicate table; `ok` is false for replicates that failed to converge.
struct ReplicateRow {
    std::size_t replicate = 0;
    std::string method;
    std::string param;
    double estimate = 0.0;
    bool ok = true;
};

struct SummaryRow {
    std::string method;
    std::string param;
    double truth = 0.0;
    std::size_t count = 0;
    double mean = 0.0;
    double sd = 0.0;
    double se = 0.0;
    double rmse = 0.0;
};

struct StudyTable {
    std::vector<ReplicateRow> rows;
    std::map<std::string, double> truth;
    std::vector<std::string> failures;

    /// Mean, SD, SE and RMSE per (method, param) over successful replicates.
    std::vector<SummaryRow> summary() const {
        std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
        std::vector<std::pair<std::string, std::string>> order;
        for (const auto& r : rows) {
            if (!r.ok) continue;
            const auto key = std::make_pair(r.method, r.param);
            if (!groups.count(key)) order.push_back(key);
            groups[key].push_back(r.estimate);
        }
        std::vector<SummaryRow> out;
        for (const auto& key : order) {
            const auto& v = groups[key];
            SummaryRow s;
            s.method = key.first;
            s.param = key.second;
            s.truth = truth.count(key.second) ? truth.at(key.second) : std::nan("");
            s.count = v.size();
            s.mean = pairwise_sum(v) / static_cast<double>(v.size());
            double ss = 0.0, se2 = 0.0;
            for (double x : v) {
                ss += (x - s.mean) * (x - s.mean);
                se2 += (x - s.truth) * (x - s.truth);
            }
            s.sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
            s.se = s.sd / std::sqrt(static_cast<double>(v.size()));
            s.rmse = std::sqrt(se2 / static_cast<double>(v.size()));
            out.push_back(s);
        }
        return out;
    }

    SummaryRow find(const std::string& method, const std::string& param) const {
        for (const auto& s : summary())
            if (s.method == method && s.param == param) return s;
        throw InvalidArgument("no summary for " + method + "/" + param);
    }
};

/// Simulates one dataset under the study protocol: fine-grid local Gaussian (Euler for elliptic
/// models) from x0, then every stride-th state.
inline ObservationSet simulate_design(const Model& model, const Theta& truth, const StudyDesign& design,
                                      const Eigen::VectorXd& x0, SeededRng& rng) {
    const auto stride = static_cast<std::size_t>(std::llround(design.delta / design.fine_delta));
    if (stride < 1 || std::abs(static_cast<double>(stride) * design.fine_delta - design.delta) > 1e-9 * design.delta)
        throw InvalidArgument("simulate_design: delta must be a multiple of the fine step");
    const Scheme s = model.is_hypoelliptic() ? Scheme::local_gauss : Scheme::euler;
    const Path p = simulate_path(model, s, x0, truth, design.fine_delta, design.n * stride, rng);
    return subsample(p, stride);
}

/// Runs n_replicates independent datasets, fitting each requested method from a common jittered start.
inline StudyTable replicate_study(const Model& model, const Theta& truth, const StudyConfig& cfg,
                                  const std::function<void(const std::string&)>& log = {}) {
    StudyTable table;
    for (std::size_t i = 0; i < truth.size(); ++i) table.truth[truth.info()[i].name] = truth[i];
    const Eigen::VectorXd x0 = cfg.x0 ? *cfg.x0 : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.dim()));
    std::vector<std::vector<ReplicateRow>> per(cfg.n_replicates);
    std::vector<std::string> fails(cfg.n_replicates);
    std::mutex log_mutex;
    parallel_for(cfg.n_replicates, cfg.workers, [&](std::size_t r) {
        SeededRng sim(cfg.seed, 2 * r), start(cfg.seed, 2 * r + 1);
        ObservationSet obs;
        try {
            obs = simulate_design(model, truth, cfg.design, x0, sim);
        } catch (const Error& e) {
            fails[r] = "replicate " + std::to_string(r) + ": simulation failed: " + e.what();
            return;
        }
        Theta theta0 = truth;
        for (std::size_t i : truth.free_indices())
            theta0[i] = truth[i] * (1.0 - cfg.start_jitter + 2.0 * cfg.start_jitter * start.uniform());
        for (std::size_t c : cfg.qv_coords)
            per[r].push_back({r, "qv", "qv" + std::to_string(c), qv_sigma(obs, c), true});
        for (ContrastMethod method : cfg.methods) {
            try {
                const EstimateReport rep = estimate(model, obs, theta0, method, cfg.adam);
                for (std::size_t i : truth.free_indices())
                    per[r].push_back({r, to_string(method), truth.info()[i].name, rep.theta_hat[i], true});
                if (log) {
                    std::lock_guard<std::mutex> lock(log_mutex);
                    std::ostringstream os;
                    os << "replicate " << r << " " << to_string(method) << " objective " << rep.objective;
                    for (std::size_t i : truth.free_indices())
                        os << " " << truth.info()[i].name << "=" << rep.theta_hat[i];
                    log(os.str());
                }
            } catch (const Error& e) {
                for (std::size_t i : truth.free_indices())
                    per[r].push_back({r, to_string(method), truth.info()[i].name, std::nan(""), false});
                fails[r] += "replicate " + std::to_string(r) + " " + to_string(method) + ": " + e.what() + "; ";
            }
        }
    });
    for (auto& v : per) table.rows.insert(table.rows.end(), v.begin(), v.end());
    for (auto& f : fails)
        if (!f.empty()) table.failures.push_back(f);
    return table;
}

/// Writes `replicate,method,param,estimate` rows with 17 significant digits.
inline void write_study_csv(std::ostream& os, const StudyTable& t) {
    os << "replicate,method,param,estimate\n";
    os << std::setprecision(17);
    for (const auto& r : t.rows) os << r.replicate << ',' << r.method << ',' << r.param << ',' << r.estimate << '\n';
}

}  // namespace hypo
