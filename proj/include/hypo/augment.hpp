#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "hypo/core/error.hpp"
#include "hypo/core/rng.hpp"
#include "hypo/core/var.hpp"
#include "hypo/estimate.hpp"
#include "hypo/gauss.hpp"
#include "hypo/model.hpp"
#include "hypo/models/builtin.hpp"
#include "hypo/scheme.hpp"
#include "hypo/variates.hpp"

namespace hypo {

// ---------------------------------------------------------------------------
// Priors and layout
// ---------------------------------------------------------------------------

enum class PriorTransform { identity, log };

/// theta = mean + sd u (identity) or exp(mean + sd u) (log-normal), u ~ N(0, 1).
struct PriorSpec {
    std::string name;
    PriorTransform transform = PriorTransform::identity;
    double mean = 0.0;
    double sd = 1.0;

    template <class T>
    T apply(const T& u) const {
        using std::exp;
        const T z = mean + sd * u;
        return transform == PriorTransform::log ? T(exp(z)) : z;
    }
    double invert(double theta) const {
        const double z = transform == PriorTransform::log ? std::log(theta) : theta;
        return (z - mean) / sd;
    }
};

/// Initial value of one state coordinate: fixed, or mean + sd u0 with u0 ~ N(0, 1).
struct InitialSpec {
    bool random = false;
    double value = 0.0;
    double mean = 0.0;
    double sd = 1.0;

    static InitialSpec fixed(double v) { return {false, v, 0.0, 1.0}; }
    static InitialSpec normal(double m, double s) { return {true, 0.0, m, s}; }
};

/// Y = h(x_coord) + noise_sd eps, h = identity or exp.
struct ObservationSpec {
    std::size_t coord = 0;
    bool exp_link = false;
    double noise_sd = 1.0;
};

/// Data augmentation problem. y[m] is observed at time m delta; NaN marks a missing value.
struct AugmentSpec {
    std::vector<PriorSpec> priors;
    std::vector<InitialSpec> initial;
    ObservationSpec observe;
    std::vector<double> y;
    double delta = 1.0;
    std::size_t M = 1;
    Scheme scheme = Scheme::euler;
    /// Values of parameters without a prior; empty means the model defaults.
    std::optional<Theta> theta_fixed;
};

/// @brief Offsets of q = [u, u0, v].
///
/// v holds one block of `per_step` normals per imputation step, step-major. EM reads the
/// d_R increments; weak2 reads the full bundle inventory in the order of the variate builders.
struct AugmentedLayout {
    std::size_t n_u = 0;
    std::size_t n_u0 = 0;
    std::size_t intervals = 0;
    std::size_t M = 1;
    std::size_t per_step = 0;

    std::size_t steps() const { return intervals * M; }
    std::size_t n_v() const { return steps() * per_step; }
    std::size_t dim() const { return n_u + n_u0 + n_v(); }
    std::size_t u0_offset() const { return n_u; }
    std::size_t v_offset() const { return n_u + n_u0; }
};

namespace detail {

struct AugmentPlan {
    AugmentedLayout layout;
    std::vector<double> theta_base;
    std::vector<std::size_t> prior_index;  // parameter slot per prior
    std::vector<PriorSpec> priors;
    std::vector<InitialSpec> initial;
    ObservationSpec observe;
    std::vector<double> y;
    double delta = 1.0;
    Scheme scheme = Scheme::euler;
    bool hypo = false;
    std::size_t d_R = 0;
    std::size_t dim_x = 0;
};

/// Log-posterior of q; fills `path` ((steps + 1) x d, double) when given. Returns -inf on
/// non-finite propagation and writes the reason to `diag`.
template <StaticModel Mdl, class T>
T augmented_logpost(const Mdl& model, const AugmentPlan& plan, const T* q, Eigen::MatrixXd* path,
                    std::string* diag) {
    using std::log;
    constexpr std::size_t dR = Mdl::kRough, d = Mdl::kRough + Mdl::kSmooth;
    const AugmentedLayout& L = plan.layout;
    const std::size_t dq = L.dim();

    T lp(-0.5 * static_cast<double>(dq) * kLog2Pi);
    for (std::size_t i = 0; i < dq; ++i) lp = lp - 0.5 * q[i] * q[i];

    std::vector<T> theta(plan.theta_base.begin(), plan.theta_base.end());
    for (std::size_t k = 0; k < plan.priors.size(); ++k) theta[plan.prior_index[k]] = plan.priors[k].apply(q[k]);

    SVec<T> x(d);
    {
        std::size_t r = 0;
        for (std::size_t i = 0; i < d; ++i) {
            const InitialSpec& s = plan.initial[i];
            x[i] = s.random ? T(s.mean + s.sd * q[L.u0_offset() + r++]) : T(s.value);
        }
    }
    if (path) {
        path->resize(static_cast<Eigen::Index>(L.steps() + 1), static_cast<Eigen::Index>(d));
        for (std::size_t i = 0; i < d; ++i) (*path)(0, static_cast<Eigen::Index>(i)) = value_of(x[i]);
    }

    const double sy = plan.observe.noise_sd;
    const double obs_const = -std::log(sy) - 0.5 * kLog2Pi;
    auto observe = [&](std::size_t m) {
        if (m >= plan.y.size() || !std::isfinite(plan.y[m])) return;
        using std::exp;
        const T& xc = x[plan.observe.coord];
        const T h = plan.observe.exp_link ? T(exp(xc)) : xc;
        const T r = (plan.y[m] - h) / sy;
        lp = lp + (obs_const - 0.5 * r * r);
    };
    observe(0);

    const double dt = plan.delta / static_cast<double>(L.M);
    const std::size_t nps = normals_per_step(dR, plan.hypo);
    std::vector<T> z(nps, T(0.0));
    const T* v = q + L.v_offset();
    std::size_t step = 0;
    for (std::size_t j = 0; j < L.intervals; ++j) {
        for (std::size_t k = 0; k < L.M; ++k, ++step) {
            const T* blk = v + step * L.per_step;
            for (std::size_t i = 0; i < L.per_step; ++i) z[i] = blk[i];
            const VariateBundle<T> b =
                plan.hypo ? hypo_bundle<T>(dt, dR, z.data()) : elliptic_bundle<T>(dt, dR, z.data());
            x = static_step<Mdl, T>(model, plan.scheme, x, theta.data(), b);
            for (std::size_t i = 0; i < d; ++i)
                if (!std::isfinite(value_of(x[i]))) {
                    if (diag) {
                        std::ostringstream os;
                        os << "non-finite state at imputation step " << step + 1 << " (coordinate " << i << ")";
                        *diag = os.str();
                    }
                    return T(-std::numeric_limits<double>::infinity());
                }
            if (path)
                for (std::size_t i = 0; i < d; ++i)
                    (*path)(static_cast<Eigen::Index>(step + 1), static_cast<Eigen::Index>(i)) = value_of(x[i]);
        }
        observe(j + 1);
    }
    if (!std::isfinite(value_of(lp))) {
        if (diag) *diag = "non-finite log-posterior";
        return T(-std::numeric_limits<double>::infinity());
    }
    if (diag) diag->clear();
    return lp;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Augmented posterior
// ---------------------------------------------------------------------------

/// @brief Non-centred log-posterior over q = [u, u0, v]; q is a priori standard normal.
///
/// The latent path is a deterministic function of q through the chosen stepper with step
/// delta / M. Gradients use the reverse-mode tape of the calling thread.
class AugmentedPosterior {
public:
    AugmentedPosterior(const Model& model, AugmentSpec spec) : spec_(std::move(spec)) {
        validate(model);
        bool ok = visit_static_model(model, [&](const auto& impl) { bind(impl); });
        if (!ok) throw CapabilityError("augment: model '" + model.name() + "' has no static form");
    }

    const AugmentedLayout& layout() const { return plan_.layout; }
    std::size_t dim() const { return plan_.layout.dim(); }
    const AugmentSpec& spec() const { return spec_; }

    double log_density(const Eigen::VectorXd& q) const {
        check(q);
        return eval_double_(q.data(), nullptr, &diag_);
    }

    /// Value and gradient; the gradient is zero when the value is -inf.
    double log_density(const Eigen::VectorXd& q, Eigen::VectorXd& grad) const {
        check(q);
        grad = Eigen::VectorXd::Zero(q.size());
        return eval_var_(q.data(), grad.data(), &diag_);
    }

    /// Diagnostic of the last evaluation on this object (empty when finite).
    const std::string& last_diagnostic() const { return diag_; }

    Eigen::MatrixXd path(const Eigen::VectorXd& q) const {
        check(q);
        Eigen::MatrixXd p;
        eval_double_(q.data(), &p, &diag_);
        return p;
    }

    Theta theta(const Eigen::VectorXd& q) const {
        check(q);
        Theta t = base_;
        for (std::size_t k = 0; k < plan_.priors.size(); ++k)
            t[plan_.prior_index[k]] = plan_.priors[k].apply(q[static_cast<Eigen::Index>(k)]);
        return t;
    }

    /// Names of the summary quantities: parameters with priors, then random initial coordinates.
    std::vector<std::string> summary_names() const {
        std::vector<std::string> n;
        for (const auto& p : plan_.priors) n.push_back(p.name);
        for (std::size_t i = 0; i < plan_.initial.size(); ++i)
            if (plan_.initial[i].random) n.push_back("x0[" + std::to_string(i) + "]");
        return n;
    }

    Eigen::VectorXd summary_values(const Eigen::VectorXd& q) const {
        check(q);
        const AugmentedLayout& L = plan_.layout;
        Eigen::VectorXd s(static_cast<Eigen::Index>(L.n_u + L.n_u0));
        for (std::size_t k = 0; k < L.n_u; ++k)
            s[static_cast<Eigen::Index>(k)] = plan_.priors[k].apply(q[static_cast<Eigen::Index>(k)]);
        std::size_t r = 0;
        for (const auto& in : plan_.initial)
            if (in.random) {
                s[static_cast<Eigen::Index>(L.n_u + r)] = in.mean + in.sd * q[static_cast<Eigen::Index>(L.n_u + r)];
                ++r;
            }
        return s;
    }

    /// q whose parameters and initial state equal the given values, innovations zero.
    Eigen::VectorXd initial_point(const Theta& theta, const Eigen::VectorXd& x0) const {
        Eigen::VectorXd q = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim()));
        for (std::size_t k = 0; k < plan_.priors.size(); ++k)
            q[static_cast<Eigen::Index>(k)] = plan_.priors[k].invert(theta[plan_.prior_index[k]]);
        std::size_t r = 0;
        for (std::size_t i = 0; i < plan_.initial.size(); ++i)
            if (plan_.initial[i].random) {
                const auto& in = plan_.initial[i];
                q[static_cast<Eigen::Index>(plan_.layout.n_u + r++)] = (x0[static_cast<Eigen::Index>(i)] - in.mean) / in.sd;
            }
        return q;
    }

private:
    void validate(const Model& model) {
        std::vector<std::string> errs;
        if (spec_.M < 1) errs.push_back("M must be at least 1");
        if (!(spec_.delta > 0.0) || !std::isfinite(spec_.delta)) errs.push_back("delta must be positive");
        if (spec_.scheme == Scheme::local_gauss) errs.push_back("scheme must be euler or weak2");
        if (!(spec_.observe.noise_sd > 0.0) || !std::isfinite(spec_.observe.noise_sd))
            errs.push_back("observation noise sd must be positive and finite");
        if (spec_.observe.coord >= model.dim()) errs.push_back("observed coordinate out of range");
        if (spec_.initial.size() != model.dim()) errs.push_back("initial spec needs one entry per state coordinate");
        for (const auto& in : spec_.initial)
            if (in.random && !(in.sd > 0.0)) errs.push_back("initial prior sd must be positive");
        if (spec_.y.empty()) errs.push_back("need at least the time-zero slot in y");
        base_ = spec_.theta_fixed ? *spec_.theta_fixed : model.default_theta();
        if (base_.size() != model.default_theta().size()) errs.push_back("fixed parameter vector has wrong size");
        for (const auto& p : spec_.priors) {
            if (!(p.sd > 0.0)) errs.push_back("prior '" + p.name + "' needs positive sd");
            try {
                const std::size_t idx = base_.index_of(p.name);
                if (std::find(plan_.prior_index.begin(), plan_.prior_index.end(), idx) != plan_.prior_index.end())
                    errs.push_back("duplicate prior for '" + p.name + "'");
                plan_.prior_index.push_back(idx);
            } catch (const InvalidArgument& e) {
                errs.push_back(e.what());
            }
        }
        if (!errs.empty()) {
            std::string msg = "augment: invalid specification:";
            for (const auto& e : errs) msg += "\n  - " + e;
            throw InvalidArgument(msg);
        }
        plan_.theta_base.assign(base_.data(), base_.data() + base_.size());
        plan_.priors = spec_.priors;
        plan_.initial = spec_.initial;
        plan_.observe = spec_.observe;
        plan_.y = spec_.y;
        plan_.delta = spec_.delta;
        plan_.scheme = spec_.scheme;
        plan_.hypo = model.is_hypoelliptic();
        plan_.d_R = model.rough_dim();
        plan_.dim_x = model.dim();
        AugmentedLayout& L = plan_.layout;
        L.n_u = spec_.priors.size();
        L.n_u0 = static_cast<std::size_t>(
            std::count_if(spec_.initial.begin(), spec_.initial.end(), [](const InitialSpec& s) { return s.random; }));
        L.intervals = spec_.y.size() - 1;
        L.M = spec_.M;
        L.per_step = spec_.scheme == Scheme::euler ? plan_.d_R : normals_per_step(plan_.d_R, plan_.hypo);
    }

    template <class Impl>
    void bind(const Impl& impl) {
        std::shared_ptr<const detail::AugmentPlan> plan = std::make_shared<detail::AugmentPlan>(plan_);
        eval_double_ = [impl, plan](const double* q, Eigen::MatrixXd* path, std::string* diag) {
            return detail::augmented_logpost<Impl, double>(impl, *plan, q, path, diag);
        };
        eval_var_ = [impl, plan](const double* q, double* grad, std::string* diag) {
            Tape& tape = Tape::active();
            tape.clear();
            const std::size_t n = plan->layout.dim();
            std::vector<Var> qv(n);
            for (std::size_t i = 0; i < n; ++i) qv[i] = Var::input(q[i]);
            const Var r = detail::augmented_logpost<Impl, Var>(impl, *plan, qv.data(), nullptr, diag);
            if (!std::isfinite(r.val) || r.idx < 0) {
                tape.clear();
                return r.val;
            }
            const std::vector<double> adj = tape.adjoints(r.idx);
            for (std::size_t i = 0; i < n; ++i) grad[i] = adj[static_cast<std::size_t>(qv[i].idx)];
            tape.clear();
            return r.val;
        };
    }

    void check(const Eigen::VectorXd& q) const {
        if (static_cast<std::size_t>(q.size()) != dim())
            throw DimensionError("augment: q has dimension " + std::to_string(q.size()) + ", expected " +
                                 std::to_string(dim()));
    }

    AugmentSpec spec_;
    Theta base_;
    detail::AugmentPlan plan_;
    std::function<double(const double*, Eigen::MatrixXd*, std::string*)> eval_double_;
    std::function<double(const double*, double*, std::string*)> eval_var_;
    mutable std::string diag_;
};

inline AugmentedPosterior build_logpost(const Model& model, AugmentSpec spec) {
    return AugmentedPosterior(model, std::move(spec));
}

// ---------------------------------------------------------------------------
// SIR demonstration problem
// ---------------------------------------------------------------------------

/// Daily counts of infected pupils, days 1 to 14.
inline std::vector<double> sir_demo_counts() {
    return {3, 8, 26, 76, 225, 298, 258, 233, 189, 128, 68, 29, 14, 4};
}

/// SIR on x = (log S, log I, log C) with N = 763, S0 = 762, I0 = 1, observed I with sd 5.
/// Day 0 is unobserved; log C0 ~ N(0, 1).
inline AugmentSpec sir_demo_spec(Scheme scheme, double dt) {
    AugmentSpec s;
    s.priors = {{"alpha", PriorTransform::log, 0.0, 1.0},
                {"beta", PriorTransform::identity, 0.0, 1.0},
                {"sigma", PriorTransform::log, -3.0, 1.0},
                {"lambda", PriorTransform::log, 0.0, 1.0}};
    s.initial = {InitialSpec::fixed(std::log(762.0)), InitialSpec::fixed(0.0), InitialSpec::normal(0.0, 1.0)};
    s.observe = {1, true, 5.0};
    s.y.push_back(std::numeric_limits<double>::quiet_NaN());
    for (double c : sir_demo_counts()) s.y.push_back(c);
    s.delta = 1.0;
    const double m = std::round(s.delta / dt);
    if (!(m >= 1.0) || std::abs(m * dt - s.delta) > 1e-9)
        throw InvalidArgument("sir demo: dt must divide one day");
    s.M = static_cast<std::size_t>(m);
    s.scheme = scheme;
    return s;
}

inline std::shared_ptr<const Model> sir_demo_model() { return builtin_model("sir_log", {{"N", 763.0}}); }

// ---------------------------------------------------------------------------
// Hamiltonian Monte Carlo
// ---------------------------------------------------------------------------

/// Returns log pi(q) and writes its gradient.
using LogDensityFn = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct HmcConfig {
    double step_size = 0.01;
    std::size_t n_leapfrog = 20;
    std::size_t n_iters = 1000;
    std::size_t warmup = 0;
    std::uint64_t seed = 0;
    double divergence_threshold = 1000.0;
};

struct LeapfrogState {
    Eigen::VectorXd q;
    Eigen::VectorXd p;
    double logp = 0.0;
    Eigen::VectorXd grad;
};

/// H(q, p) = -log pi(q) + |p|^2 / 2 (identity mass).
inline double hamiltonian(const LeapfrogState& s) { return -s.logp + 0.5 * s.p.squaredNorm(); }

/// n_steps leapfrog steps of size eps. Stops early when the density becomes non-finite.
inline LeapfrogState leapfrog(const LogDensityFn& f, LeapfrogState s, double eps, std::size_t n_steps) {
    for (std::size_t i = 0; i < n_steps; ++i) {
        s.p += 0.5 * eps * s.grad;
        s.q += eps * s.p;
        s.logp = f(s.q, s.grad);
        if (!std::isfinite(s.logp)) return s;
        s.p += 0.5 * eps * s.grad;
    }
    return s;
}

struct HmcChain {
    Eigen::MatrixXd draws;  // post-warmup states, one per row
    std::vector<double> logp;
    std::size_t accepted = 0;      // post-warmup
    std::size_t divergences = 0;   // all iterations
    std::vector<std::size_t> divergent_iterations;
    std::size_t iterations = 0;    // post-warmup

    double acceptance_rate() const {
        return iterations == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(iterations);
    }
};

/// Fixed-step HMC with identity mass; a trajectory whose energy error exceeds the threshold
/// (or turns non-finite) is a divergence and is rejected.
inline HmcChain hmc_sample(const LogDensityFn& f, const Eigen::VectorXd& q0, const HmcConfig& cfg) {
    if (!(cfg.step_size > 0.0)) throw InvalidArgument("hmc: step size must be positive");
    if (cfg.n_leapfrog < 1) throw InvalidArgument("hmc: need at least one leapfrog step");
    LeapfrogState cur;
    cur.q = q0;
    cur.logp = f(cur.q, cur.grad);
    if (!std::isfinite(cur.logp)) throw InvalidArgument("hmc: initial point has non-finite log density");
    SeededRng rng(cfg.seed, 0);
    const Eigen::Index d = q0.size();
    HmcChain chain;
    chain.draws.resize(static_cast<Eigen::Index>(cfg.n_iters), d);
    chain.logp.reserve(cfg.n_iters);
    const std::size_t total = cfg.warmup + cfg.n_iters;
    for (std::size_t it = 0; it < total; ++it) {
        cur.p.resize(d);
        for (Eigen::Index i = 0; i < d; ++i) cur.p[i] = rng.normal();
        const double h0 = hamiltonian(cur);
        const LeapfrogState prop = leapfrog(f, cur, cfg.step_size, cfg.n_leapfrog);
        const double h1 = std::isfinite(prop.logp) ? hamiltonian(prop) : std::numeric_limits<double>::infinity();
        const double dh = h1 - h0;
        const double u = rng.uniform();
        bool accept = false;
        if (!std::isfinite(dh) || dh > cfg.divergence_threshold) {
            ++chain.divergences;
            chain.divergent_iterations.push_back(it);
        } else {
            accept = std::log(u) < -dh;
        }
        if (accept) {
            cur.q = prop.q;
            cur.logp = prop.logp;
            cur.grad = prop.grad;
        }
        if (it >= cfg.warmup) {
            const auto row = static_cast<Eigen::Index>(it - cfg.warmup);
            chain.draws.row(row) = cur.q.transpose();
            chain.logp.push_back(cur.logp);
            ++chain.iterations;
            if (accept) ++chain.accepted;
        }
    }
    return chain;
}

/// Log density and gradient of an augmented posterior as an HMC target.
inline LogDensityFn as_log_density(const AugmentedPosterior& post) {
    return [&post](const Eigen::VectorXd& q, Eigen::VectorXd& g) { return post.log_density(q, g); };
}

/// Applies f to every draw.
inline Eigen::MatrixXd map_draws(const Eigen::MatrixXd& draws,
                                 const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f) {
    if (draws.rows() == 0) return {};
    const Eigen::VectorXd first = f(draws.row(0).transpose());
    Eigen::MatrixXd out(draws.rows(), first.size());
    out.row(0) = first.transpose();
    for (Eigen::Index r = 1; r < draws.rows(); ++r) out.row(r) = f(draws.row(r).transpose()).transpose();
    return out;
}

// ---------------------------------------------------------------------------
// Posterior summaries
// ---------------------------------------------------------------------------

struct PosteriorStat {
    std::string name;
    double mean = 0.0;
    double sd = 0.0;
    double mcse = 0.0;  // batch-means Monte Carlo standard error of the mean
    double q05 = 0.0;
    double q50 = 0.0;
    double q95 = 0.0;
};

namespace detail {

inline double quantile_sorted(const std::vector<double>& v, double p) {
    const double h = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace detail

/// Standard error of the mean of an autocorrelated series from non-overlapping batch means.
inline double batch_means_se(const Eigen::VectorXd& x, std::size_t n_batches = 20) {
    const auto n = static_cast<std::size_t>(x.size());
    if (n < 2) return 0.0;
    n_batches = std::clamp<std::size_t>(n_batches, 2, n);
    const std::size_t len = n / n_batches;
    Eigen::VectorXd means(static_cast<Eigen::Index>(n_batches));
    for (std::size_t b = 0; b < n_batches; ++b)
        means[static_cast<Eigen::Index>(b)] =
            x.segment(static_cast<Eigen::Index>(b * len), static_cast<Eigen::Index>(len)).mean();
    const double m = means.mean();
    const double var = (means.array() - m).square().sum() / static_cast<double>(n_batches - 1);
    return std::sqrt(var / static_cast<double>(n_batches));
}

/// One row per column of `draws`.
inline std::vector<PosteriorStat> posterior_summary(const Eigen::MatrixXd& draws,
                                                    const std::vector<std::string>& names) {
    if (draws.rows() == 0) throw InvalidArgument("posterior_summary: empty chain");
    if (static_cast<std::size_t>(draws.cols()) != names.size())
        throw DimensionError("posterior_summary: one name per column required");
    std::vector<PosteriorStat> out;
    for (Eigen::Index c = 0; c < draws.cols(); ++c) {
        const Eigen::VectorXd col = draws.col(c);
        PosteriorStat s;
        s.name = names[static_cast<std::size_t>(c)];
        s.mean = col.mean();
        s.sd = draws.rows() > 1
                   ? std::sqrt((col.array() - s.mean).square().sum() / static_cast<double>(draws.rows() - 1))
                   : 0.0;
        s.mcse = batch_means_se(col);
        std::vector<double> v(col.data(), col.data() + col.size());
        std::sort(v.begin(), v.end());
        s.q05 = detail::quantile_sorted(v, 0.05);
        s.q50 = detail::quantile_sorted(v, 0.50);
        s.q95 = detail::quantile_sorted(v, 0.95);
        out.push_back(s);
    }
    return out;
}

inline void write_posterior_summary_csv(std::ostream& os, const std::vector<PosteriorStat>& rows) {
    os << "param,mean,sd,mcse,q05,q50,q95\n" << std::setprecision(17);
    for (const auto& r : rows)
        os << r.name << ',' << r.mean << ',' << r.sd << ',' << r.mcse << ',' << r.q05 << ',' << r.q50 << ','
           << r.q95 << '\n';
}

struct MeanShift {
    std::string name;
    double mean_a = 0.0;
    double mean_b = 0.0;
    double shift = 0.0;  // mean_b - mean_a
};

/// Per-parameter mean shift between two summaries (matched by name).
inline std::vector<MeanShift> compare_summaries(const std::vector<PosteriorStat>& a,
                                                const std::vector<PosteriorStat>& b) {
    std::vector<MeanShift> out;
    for (const auto& ra : a)
        for (const auto& rb : b)
            if (ra.name == rb.name) out.push_back({ra.name, ra.mean, rb.mean, rb.mean - ra.mean});
    return out;
}

// ---------------------------------------------------------------------------
// SIR demonstration run
// ---------------------------------------------------------------------------

struct SirDemoConfig {
    Scheme scheme = Scheme::euler;
    double dt = 0.05;
    std::size_t iters = 1500;
    std::size_t warmup = 500;
    double step_size = 0.001;
    std::size_t n_leapfrog = 20;
    std::size_t map_iters = 2000;  // Adam steps towards the posterior mode before sampling
    double map_step = 0.01;
    std::uint64_t seed = 0;
};

struct SirDemoResult {
    HmcChain chain;
    Eigen::MatrixXd summaries;  // summary_values per draw
    std::vector<std::string> names;
    std::vector<PosteriorStat> stats;
    double map_logpost = 0.0;
};

/// Start for the SIR demo: a plausible epidemic (alpha 1, beta 0.6, lambda 0.5, sigma 0.05,
/// log C0 0.6) with zero innovations; the prior mean itself propagates to a flat path.
inline Eigen::VectorXd sir_demo_start(const AugmentedPosterior& post) {
    Theta th = sir_demo_model()->default_theta();
    th.set("alpha", 1.0);
    th.set("beta", 0.6);
    th.set("lambda", 0.5);
    th.set("sigma", 0.05);
    Eigen::VectorXd x0(3);
    x0 << std::log(762.0), 0.0, 0.6;
    return post.initial_point(th, x0);
}

/// Adam ascent to near the mode, then fixed-step HMC.
inline SirDemoResult run_sir_demo(const SirDemoConfig& cfg) {
    const auto model = sir_demo_model();
    const AugmentedPosterior post = build_logpost(*model, sir_demo_spec(cfg.scheme, cfg.dt));
    Eigen::VectorXd q = sir_demo_start(post);
    SirDemoResult out;
    if (cfg.map_iters > 0) {
        AdamConfig ac;
        ac.step_size = cfg.map_step;
        ac.n_iters = cfg.map_iters;
        const Objective f = [&](const Eigen::VectorXd& u, Eigen::VectorXd& g) {
            const double v = post.log_density(u, g);
            g = -g;
            return -v;
        };
        q = adam_minimize(f, q, ac).u;
    }
    out.map_logpost = post.log_density(q);
    HmcConfig hc;
    hc.step_size = cfg.step_size;
    hc.n_leapfrog = cfg.n_leapfrog;
    hc.n_iters = cfg.iters;
    hc.warmup = cfg.warmup;
    hc.seed = cfg.seed;
    out.chain = hmc_sample(as_log_density(post), q, hc);
    out.names = post.summary_names();
    out.summaries = map_draws(out.chain.draws, [&](const Eigen::VectorXd& d) { return post.summary_values(d); });
    out.stats = posterior_summary(out.summaries, out.names);
    return out;
}

inline void write_chain_csv(std::ostream& os, const Eigen::MatrixXd& draws, const std::vector<std::string>& names) {
    if (static_cast<std::size_t>(draws.cols()) != names.size())
        throw DimensionError("write_chain_csv: one name per column required");
    os << "iteration";
    for (const auto& n : names) os << ',' << n;
    os << '\n' << std::setprecision(17);
    for (Eigen::Index r = 0; r < draws.rows(); ++r) {
        os << r;
        for (Eigen::Index c = 0; c < draws.cols(); ++c) os << ',' << draws(r, c);
        os << '\n';
    }
}

}  // namespace hypo
