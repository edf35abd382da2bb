#include <catch_amalgamated.hpp>

#include <cmath>

#include "hypo/estimate.hpp"
#include "hypo/expansion.hpp"
#include "hypo/models/builtin.hpp"
#include "hypo/scheme.hpp"

using namespace hypo;
using Catch::Approx;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double a : v) out[i++] = a;
    return out;
}

ObservationSet simulate_obs(const Model& m, const Theta& th, const Eigen::VectorXd& x0, double delta, std::size_t n,
                            std::size_t stride, std::uint64_t seed) {
    SeededRng rng(seed, 0);
    const Scheme s = m.is_hypoelliptic() ? Scheme::local_gauss : Scheme::euler;
    return subsample(simulate_path(m, s, x0, th, delta / static_cast<double>(stride), n * stride, rng), stride);
}

}  // namespace

TEST_CASE("single transition of a unit Brownian motion", "[estimate]") {
    auto m = builtin_model("constant_coefficients", {{"c", 0.0}, {"s", 1.0}});
    ObservationSet obs;
    obs.delta = 1.0;
    obs.states = Eigen::MatrixXd(2, 1);
    obs.states << 0.0, 1.0;
    CHECK(contrast(*m, obs, m->default_theta(), ContrastMethod::local_gaussian) == Approx(1.0));
    CHECK(contrast(*m, obs, m->default_theta(), ContrastMethod::new_contrast) == Approx(1.0));
}

TEST_CASE("constant-coefficient SDHS: both contrasts coincide", "[estimate]") {
    auto m = builtin_model("linear_sdhs", {{"c", 0.0}, {"k", 0.0}});
    const Theta th = m->default_theta();
    const auto obs = simulate_obs(*m, th, vec({0.2, -0.1}), 0.05, 200, 5, 3);
    CHECK(contrast(*m, obs, th, ContrastMethod::new_contrast) ==
          Approx(contrast(*m, obs, th, ContrastMethod::local_gaussian)).epsilon(1e-14));
}

TEST_CASE("contrast terms agree with the local Gaussian log-density", "[estimate]") {
    for (std::string name : {"fitzhugh_nagumo", "ou", "jansen_rit"}) {
        auto m = builtin_model(name);
        const Theta th = m->default_theta();
        const double delta = name == "jansen_rit" ? 0.002 : 0.05;
        const auto obs = simulate_obs(*m, th, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m->dim())), delta,
                                      50, 10, 4);
        // -2 log p = quadratic + log|Sigma_1| + (d_R + 3 d_S) log Delta + d log(2 pi).
        double ref = 0.0;
        const double dR = static_cast<double>(m->rough_dim()), dS = static_cast<double>(m->smooth_dim());
        for (std::size_t k = 1; k <= obs.n(); ++k) {
            const auto g = lg_moments(*m, obs.state(k - 1), th, delta);
            ref += -2.0 * lg_logdensity(g, obs.state(k)) - (dR + 3 * dS) * std::log(delta) -
                   (dR + dS) * kLog2Pi;
        }
        INFO(name);
        CHECK(contrast(*m, obs, th, ContrastMethod::local_gaussian) == Approx(ref).epsilon(1e-9));
    }
}

TEST_CASE("new contrast minus LG contrast is -2 Delta sum Phi_2", "[estimate]") {
    SeededRng rng(5, 0);
    for (std::string name : {"fitzhugh_nagumo", "jansen_rit", "ou", "linear_sdhs"}) {
        auto m = builtin_model(name);
        const Theta truth = m->default_theta();
        const double delta = name == "jansen_rit" ? 0.002 : 0.02;
        const auto obs = simulate_obs(*m, truth, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m->dim())), delta,
                                      100, 4, 6);
        for (int rep = 0; rep < 3; ++rep) {
            Theta th = truth;
            for (std::size_t i : th.free_indices()) th[i] *= 0.8 + 0.4 * rng.uniform();
            double phi_sum = 0.0;  // independent per-transition evaluation
            for (std::size_t k = 1; k <= obs.n(); ++k) phi_sum += phi2(*m, obs.state(k - 1), th, delta, obs.state(k));
            const double a = contrast(*m, obs, th, ContrastMethod::new_contrast);
            const double b = contrast(*m, obs, th, ContrastMethod::local_gaussian);
            const auto parts = contrast_parts(*m, obs, th);
            INFO(name << " new " << a << " lg " << b << " phi " << phi_sum);
            CHECK(std::abs((a - b) - (-2.0 * delta * parts.phi2)) <= 1e-12 * std::max(1.0, std::abs(a)));
            CHECK(parts.phi2 == Approx(phi_sum).epsilon(1e-9).margin(1e-9));
        }
    }
}

TEST_CASE("contrast does not depend on the worker count", "[estimate]") {
    auto m = builtin_model("fitzhugh_nagumo");
    const Theta th = m->default_theta();
    const auto obs = simulate_obs(*m, th, vec({0.0, 0.0}), 0.005, 3000, 5, 7);
    ContrastOptions one, three;
    three.workers = 3;
    const double a = contrast(*m, obs, th, ContrastMethod::new_contrast, one);
    const double b = contrast(*m, obs, th, ContrastMethod::new_contrast, three);
    CHECK(a == b);
    CHECK(contrast(*m, obs, th, ContrastMethod::new_contrast, one) == a);
}

TEST_CASE("SPD failure reports the observation index", "[estimate]") {
    // Diffusion x vanishes at the origin, so the second transition (from x = 0) fails.
    CallbackModel zero_noise(
        "zero_noise", 1, 0, {{"s", ParamBlock::sigma, true, 1.0}},
        [](const double*, const double*, double* out) { out[0] = 0.0; },
        [](const double* x, const double* th, double* out) { out[0] = th[0] * x[0]; });
    ObservationSet obs;
    obs.delta = 0.1;
    obs.states = Eigen::MatrixXd(3, 1);
    obs.states << 1.0, 0.0, 2.0;
    try {
        contrast(zero_noise, obs, zero_noise.default_theta(), ContrastMethod::local_gaussian);
        FAIL("expected ContrastSpdError");
    } catch (const ContrastSpdError& e) {
        CHECK(e.observation() == 2);
    }
}

TEST_CASE("OU LG contrast gradient matches the hand gradient", "[estimate]") {
    auto m = builtin_model("ou");
    Theta th = m->default_theta();
    th.set("kappa", 1.3);
    th.set("mu", 0.4);
    th.set("sigma", 0.7);
    const auto obs = simulate_obs(*m, m->default_theta(), vec({1.0}), 0.05, 400, 5, 8);
    const double k = 1.3, mu = 0.4, s = 0.7, dt = obs.delta;
    // e = y - x - kappa (mu - x) dt; contrast = sum e^2 / (s^2 dt) + log s^2.
    Eigen::Vector3d g = Eigen::Vector3d::Zero();
    for (std::size_t i = 1; i <= obs.n(); ++i) {
        const double x = obs.states(static_cast<Eigen::Index>(i - 1), 0), y = obs.states(static_cast<Eigen::Index>(i), 0);
        const double e = y - x - k * (mu - x) * dt;
        g[0] += k * 2 * e * (-(mu - x) * dt) / (s * s * dt);
        g[1] += 2 * e * (-k * dt) / (s * s * dt);
        g[2] += -2 * e * e / (s * s * dt) + 2.0;
    }
    const auto ad = contrast_gradient(*m, obs, th, ContrastMethod::local_gaussian);
    CHECK(ad.automatic);
    GradientOptions fdo;
    fdo.mode = GradientMode::finite_difference;
    const auto fd = contrast_gradient(*m, obs, th, ContrastMethod::local_gaussian, fdo);
    CHECK_FALSE(fd.automatic);
    for (Eigen::Index i = 0; i < 3; ++i) {
        CHECK(ad.gradient[i] == Approx(g[i]).epsilon(1e-10));
        CHECK(fd.gradient[i] == Approx(g[i]).epsilon(1e-5));
    }
}

TEST_CASE("forward-mode and finite-difference gradients agree", "[estimate]") {
    for (std::string name : {"fitzhugh_nagumo", "jansen_rit", "linear_sdhs"}) {
        auto m = builtin_model(name);
        const Theta th = m->default_theta();
        const double delta = name == "jansen_rit" ? 0.002 : 0.01;
        const auto obs = simulate_obs(*m, th, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m->dim())), delta,
                                      300, 5, 9);
        Theta t1 = th;
        for (std::size_t i : t1.free_indices()) t1[i] *= 1.1;
        for (ContrastMethod method : {ContrastMethod::new_contrast, ContrastMethod::local_gaussian}) {
            const auto ad = contrast_gradient(*m, obs, t1, method);
            const auto fd = contrast_gradient_fd(*m, obs, t1, method);
            CHECK(ad.automatic);
            CHECK(ad.value == Approx(fd.value).epsilon(1e-13));
            const double scale = fd.gradient.cwiseAbs().maxCoeff();
            for (Eigen::Index i = 0; i < fd.gradient.size(); ++i) {
                INFO(name << " " << to_string(method) << " coord " << i << " ad " << ad.gradient[i] << " fd "
                          << fd.gradient[i]);
                CHECK(std::abs(ad.gradient[i] - fd.gradient[i]) <= 1e-5 * std::max(1.0, scale));
            }
        }
    }
}

TEST_CASE("Adam on a convex quadratic", "[estimate]") {
    const Objective f = [](const Eigen::VectorXd& u, Eigen::VectorXd& g) {
        g = 2.0 * (u.array() - 3.0).matrix();
        return (u.array() - 3.0).square().sum();
    };
    const auto r = adam_minimize(f, Eigen::VectorXd::Zero(1));
    CHECK(std::abs(r.u[0] - 3.0) <= 1e-3);
    CHECK(r.iterations == 20000);

    const Objective flat = [](const Eigen::VectorXd&, Eigen::VectorXd& g) {
        g = Eigen::VectorXd::Zero(2);
        return 1.0;
    };
    const auto z = adam_minimize(flat, vec({0.5, -2.0}), {0.01, 0.9, 0.999, 1e-8, 100});
    CHECK(z.u == vec({0.5, -2.0}));

    const Objective bad = [](const Eigen::VectorXd& u, Eigen::VectorXd& g) {
        g = Eigen::VectorXd::Ones(1);
        return u[0] < -0.05 ? std::nan("") : u[0];
    };
    AdamConfig cfg;
    cfg.keep_trace = true;
    try {
        adam_minimize(bad, Eigen::VectorXd::Zero(1), cfg);
        FAIL("expected OptimizationError");
    } catch (const OptimizationError& e) {
        CHECK(e.iteration() == 6);
        CHECK(e.trace().size() == 7);
    }
}

TEST_CASE("positive parameters stay positive along the optimizer path", "[estimate]") {
    auto m = builtin_model("ou", {{"kappa", 1.0}, {"mu", 0.0}});
    const auto obs = simulate_obs(*m, m->default_theta(), vec({0.0}), 0.01, 2000, 2, 10);
    Theta start = m->default_theta();
    start.set("sigma", 5.0);
    double min_sigma = 1e300;
    const Objective f = [&](const Eigen::VectorXd& u, Eigen::VectorXd& g) {
        const Theta t = from_optimizer(start, u);
        min_sigma = std::min(min_sigma, t.at("sigma"));
        const auto cg = contrast_gradient(*m, obs, t, ContrastMethod::local_gaussian);
        g = cg.gradient;
        return cg.value;
    };
    AdamConfig cfg;
    cfg.step_size = 0.5;  // aggressive, overshoots in u
    cfg.n_iters = 300;
    const auto r = adam_minimize(f, to_optimizer(start), cfg);
    CHECK(min_sigma > 0.0);
    CHECK(std::isfinite(r.value));
}

TEST_CASE("optimizer fixed point is the closed-form sigma estimate", "[estimate]") {
    auto m = builtin_model("ou", {{"kappa", 1.0}, {"mu", 0.0}});
    const auto obs = simulate_obs(*m, m->default_theta(), vec({0.5}), 0.01, 2000, 2, 11);
    // LG contrast in sigma alone: sum e^2 / (sigma^2 dt) + n log sigma^2, minimized at mean(e^2) / dt.
    double s2 = 0.0;
    for (std::size_t i = 1; i <= obs.n(); ++i) {
        const double x = obs.states(static_cast<Eigen::Index>(i - 1), 0), y = obs.states(static_cast<Eigen::Index>(i), 0);
        const double e = y - x + x * obs.delta;
        s2 += e * e / obs.delta;
    }
    s2 /= static_cast<double>(obs.n());
    AdamConfig cfg;
    cfg.n_iters = 3000;
    const auto rep = estimate(*m, obs, m->default_theta(), ContrastMethod::local_gaussian, cfg);
    CHECK(rep.theta_hat.at("sigma") == Approx(std::sqrt(s2)).epsilon(1e-4));
    Theta at = m->default_theta();
    at.set("sigma", std::sqrt(s2));
    CHECK(std::abs(contrast_gradient(*m, obs, at, ContrastMethod::local_gaussian).gradient[0]) <= 1e-8 * obs.n());
}

TEST_CASE("quadratic-variation estimate", "[estimate]") {
    ObservationSet flat;
    flat.delta = 0.1;
    flat.states = Eigen::MatrixXd::Constant(11, 2, 3.0);
    CHECK(qv_sigma(flat, 1) == 0.0);

    auto bm = builtin_model("constant_coefficients", {{"c", 0.0}, {"s", 2.0}});
    const auto obs = simulate_obs(*bm, bm->default_theta(), vec({0.0}), 0.01, 10000, 1, 12);
    const double s = qv_sigma(obs, 0);
    CHECK(s >= 1.9);
    CHECK(s <= 2.1);
}

TEST_CASE("replicate study rows and summary", "[estimate]") {
    auto m = builtin_model("ou", {{"mu", 0.0}});
    StudyConfig cfg;
    cfg.design = {"tiny", 500, 0.02, 0.01};
    cfg.n_replicates = 3;
    cfg.adam.n_iters = 200;
    cfg.adam.step_size = 0.05;
    cfg.seed = 1;
    cfg.qv_coords = {0};
    const auto t = replicate_study(*m, m->default_theta(), cfg);
    CHECK(t.failures.empty());
    // Per replicate: one qv row plus two free parameters for each of two methods.
    CHECK(t.rows.size() == 3 * (1 + 2 * 2));
    const auto s = t.find("new", "sigma");
    CHECK(s.count == 3);
    CHECK(s.se == Approx(s.sd / std::sqrt(3.0)));
    std::ostringstream os;
    write_study_csv(os, t);
    CHECK(os.str().rfind("replicate,method,param,estimate\n", 0) == 0);
    const auto t2 = replicate_study(*m, m->default_theta(), cfg);
    std::ostringstream os2;
    write_study_csv(os2, t2);
    CHECK(os.str() == os2.str());
}

TEST_CASE("OU estimates land near the truth", "[estimate][mc]") {
    auto m = builtin_model("ou", {{"mu", 0.0}});
    StudyConfig cfg;
    cfg.design = {"ou", 10000, 0.01, 0.01};
    cfg.n_replicates = 20;
    cfg.methods = {ContrastMethod::local_gaussian};
    cfg.adam.n_iters = 1500;
    cfg.adam.step_size = 0.02;
    cfg.seed = 2;
    const auto t = replicate_study(*m, m->default_theta(), cfg);
    REQUIRE(t.failures.empty());
    for (std::string p : {"kappa", "sigma"}) {
        const auto s = t.find("lg", p);
        INFO(p << " mean " << s.mean << " sd " << s.sd);
        CHECK(std::abs(s.mean - s.truth) <= 3.0 * s.sd);
    }
}
