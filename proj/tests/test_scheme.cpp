#include <catch_amalgamated.hpp>

#include <cmath>

#include "hypo/gauss.hpp"
#include "hypo/models/builtin.hpp"
#include "hypo/scheme.hpp"
#include "support.hpp"

using namespace hypo;
using Catch::Approx;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double a : v) out[i++] = a;
    return out;
}

VariateBundle<double> zero_bundle(const Model& m, Scheme s, double delta) {
    return test::bundle_from(m, s, delta, std::vector<double>(test::normals_for(m, s), 0.0));
}

}  // namespace

TEST_CASE("scheme names", "[scheme]") {
    for (Scheme s : {Scheme::euler, Scheme::local_gauss, Scheme::weak2}) CHECK(parse_scheme(to_string(s)) == s);
    CHECK_THROWS_AS(parse_scheme("rk4"), InvalidArgument);
}

TEST_CASE("Euler step examples", "[scheme]") {
    auto ou = builtin_model("ou");
    const Theta th = ou->default_theta();
    CHECK(step_euler(*ou, vec({1.0}), th, 0.5, zero_bundle(*ou, Scheme::euler, 0.5))[0] == Approx(0.5));

    auto cc = builtin_model("constant_coefficients", {{"c", 0.0}, {"s", 1.0}});
    SeededRng rng(1, 0);
    const auto b = draw_elliptic(rng, 0.3, 1);
    CHECK(step_euler(*cc, vec({0.0}), cc->default_theta(), 0.3, b)[0] == Approx(b.B[0]));

    auto cd = builtin_model("constant_coefficients", {{"c", 2.0}, {"s", 0.0}});
    CHECK(step_euler(*cd, vec({1.5}), cd->default_theta(), 0.3, b)[0] == 1.5 + 2.0 * 0.3);
}

TEST_CASE("bundle step size must match", "[scheme]") {
    auto ou = builtin_model("ou");
    CHECK_THROWS_AS(step_euler(*ou, vec({1.0}), ou->default_theta(), 0.5, zero_bundle(*ou, Scheme::euler, 0.25)),
                    InvalidArgument);
}

TEST_CASE("weak second-order OU mean", "[scheme]") {
    auto ou = builtin_model("ou");
    const auto a = test::affine_step(*ou, Scheme::weak2, ou->default_theta(), 0.5);
    CHECK(a.A(0, 0) + a.b[0] == Approx(0.625));
    CHECK(step_weak2_elliptic(*ou, vec({1.0}), ou->default_theta(), 0.5, zero_bundle(*ou, Scheme::weak2, 0.5))[0] ==
          Approx(0.625));
}

TEST_CASE("elliptic weak step refuses hypo-elliptic models", "[scheme]") {
    auto fn = builtin_model("fitzhugh_nagumo");
    SeededRng rng(1, 0);
    CHECK_THROWS_AS(step_weak2_elliptic(*fn, vec({0.0, 0.0}), fn->default_theta(), 0.1, draw_elliptic(rng, 0.1, 1)),
                    DimensionError);
}

TEST_CASE("constant coefficients: weak step equals Euler step", "[scheme]") {
    auto cc = builtin_model("constant_coefficients", {{"c", 0.7}, {"s", 1.3}});
    SeededRng rng(2, 0);
    for (int i = 0; i < 20; ++i) {
        const auto b = draw_elliptic(rng, 0.2, 1);
        CHECK(step_weak2_elliptic(*cc, vec({0.4}), cc->default_theta(), 0.2, b)[0] ==
              Approx(step_euler(*cc, vec({0.4}), cc->default_theta(), 0.2, b)[0]));
    }
}

TEST_CASE("steps of linear models are affine in the normals", "[scheme]") {
    SeededRng rng(4, 0);
    for (std::string name : {"ou", "linear_sdhs"}) {
        auto m = builtin_model(name);
        const Theta th = m->default_theta();
        for (Scheme s : {Scheme::euler, Scheme::local_gauss, Scheme::weak2}) {
            if (s == Scheme::local_gauss && !m->is_hypoelliptic()) continue;
            const auto a = test::affine_step(*m, s, th, 0.3);
            std::vector<double> z(test::normals_for(*m, s));
            for (auto& v : z) v = rng.normal();
            Eigen::VectorXd x(static_cast<Eigen::Index>(m->dim()));
            for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.normal();
            const Eigen::VectorXd direct = step(*m, s, x, th, 0.3, test::bundle_from(*m, s, 0.3, z));
            const Eigen::VectorXd zz = Eigen::Map<const Eigen::VectorXd>(z.data(), static_cast<Eigen::Index>(z.size()));
            const Eigen::VectorXd affine = a.A * x + a.b + a.C * zz;
            CHECK((direct - affine).norm() <= 1e-12 * (1 + direct.norm()));
        }
    }
}

TEST_CASE("weak second-order step of linear SDHS matches the exact mean to third order", "[scheme]") {
    auto m = builtin_model("linear_sdhs");
    const Theta th = m->default_theta();
    const Eigen::VectorXd x0 = vec({0.8, -0.3});
    std::vector<double> err;
    for (double delta : {0.25, 0.125}) {
        const auto a = test::affine_step(*m, Scheme::weak2, th, delta);
        const Eigen::VectorXd mean = a.A * x0 + a.b;
        const auto ex = test::exact_linear(*m, th, x0, delta);
        err.push_back((mean - ex.mean).norm());
    }
    CHECK(err[0] <= 0.25 * 0.25 * 0.25);
    CHECK(err[0] / err[1] >= 6.0);
}

namespace {

std::vector<double> moment_errors(const Model& m, Scheme s, const Theta& th, const Eigen::VectorXd& x0, double T,
                                  const std::vector<double>& deltas, Eigen::Index c, int p) {
    const auto ex = test::exact_linear(m, th, x0, T);
    std::vector<double> err;
    for (double delta : deltas) {
        const auto n = static_cast<std::size_t>(std::lround(T / delta));
        const auto g = test::propagate(test::affine_step(m, s, th, delta),
                                       {x0, Eigen::MatrixXd::Zero(x0.size(), x0.size())}, n);
        err.push_back(std::abs(test::gaussian_moment(g.mean[c], g.cov(c, c), p) -
                               test::gaussian_moment(ex.mean[c], ex.cov(c, c), p)));
    }
    return err;
}

}  // namespace

TEST_CASE("global weak error orders on linear models", "[scheme]") {
    // Coarse grids: with c = k = 1 some moments cross zero error between 0.4 and 0.05,
    // so the slope fit uses a slower linear SDHS and a longer horizon.
    const double T = 1.6;
    const std::vector<double> deltas{0.4, 0.2, 0.1, 0.05};
    for (std::string name : {"ou", "linear_sdhs"}) {
        auto m = name == "ou" ? builtin_model(name) : builtin_model(name, {{"c", 0.5}, {"k", 0.5}});
        const Theta th = m->default_theta();
        const Eigen::VectorXd x0 = m->dim() == 1 ? vec({1.0}) : vec({1.0, 1.0});
        for (Scheme s : {Scheme::euler, Scheme::weak2})
            for (Eigen::Index c = 0; c < x0.size(); ++c)
                for (int p : {1, 2, 4}) {
                    const double slope = test::loglog_slope(deltas, moment_errors(*m, s, th, x0, T, deltas, c, p));
                    INFO(name << " " << to_string(s) << " coord " << c << " phi=y^" << p << " slope " << slope);
                    if (s == Scheme::weak2)
                        CHECK(slope >= 1.8);
                    else {
                        CHECK(slope >= 0.8);
                        CHECK(slope <= 1.2);
                    }
                }
    }
}

TEST_CASE("weak2 error ratio approaches four on fine grids", "[scheme]") {
    auto m = builtin_model("linear_sdhs");
    const Theta th = m->default_theta();
    const Eigen::VectorXd x0 = vec({0.8, -0.3});
    const std::vector<double> deltas{0.02, 0.01, 0.005};
    for (Eigen::Index c = 0; c < 2; ++c)
        for (int p : {1, 2}) {
            const auto err = moment_errors(*m, Scheme::weak2, th, x0, 0.8, deltas, c, p);
            const auto e1 = moment_errors(*m, Scheme::euler, th, x0, 0.8, deltas, c, p);
            INFO("coord " << c << " phi=y^" << p << " ratios " << err[0] / err[1] << " " << err[1] / err[2]);
            CHECK(err[1] / err[2] == Approx(4.0).epsilon(0.15));
            CHECK(e1[1] / e1[2] == Approx(2.0).epsilon(0.15));
        }
}

TEST_CASE("local Gaussian step has the local Gaussian moments", "[scheme][mc]") {
    auto fn = builtin_model("fitzhugh_nagumo");
    const Theta th = fn->default_theta();
    const Eigen::VectorXd x = vec({0.4, -0.7});
    const double delta = 0.1;
    const auto g = lg_moments(*fn, x, th, delta);
    SeededRng rng(77, 0);
    const std::size_t n = 400000;
    Eigen::VectorXd s1 = Eigen::VectorXd::Zero(2);
    Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(2, 2);
    std::vector<Eigen::VectorXd> ys;
    ys.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::VectorXd y = step_local_gauss(*fn, x, th, delta, draw_hypo(rng, delta, 1));
        s1 += y;
        ys.push_back(y);
    }
    const Eigen::VectorXd mean = s1 / static_cast<double>(n);
    for (const auto& y : ys) s2 += (y - g.mu) * (y - g.mu).transpose();
    const Eigen::MatrixXd cov = s2 / static_cast<double>(n);
    for (Eigen::Index i = 0; i < 2; ++i) {
        const double se = std::sqrt(g.sigma(i, i) / static_cast<double>(n));
        CHECK(std::abs(mean[i] - g.mu[i]) <= 5 * se);
        for (Eigen::Index j = 0; j < 2; ++j) {
            // Var of a product of centred Gaussians: S_ii S_jj + S_ij^2.
            const double se2 = std::sqrt((g.sigma(i, i) * g.sigma(j, j) + g.sigma(i, j) * g.sigma(i, j)) /
                                         static_cast<double>(n));
            CHECK(std::abs(cov(i, j) - g.sigma(i, j)) <= 5 * se2);
        }
    }
}

TEST_CASE("small steps leave the state nearly unchanged", "[scheme]") {
    auto fn = builtin_model("fitzhugh_nagumo");
    const Theta th = fn->default_theta();
    const Eigen::VectorXd x = vec({0.4, -0.7});
    SeededRng rng(8, 0);
    for (Scheme s : {Scheme::euler, Scheme::local_gauss, Scheme::weak2}) {
        const double delta = 1e-10;
        const Eigen::VectorXd y = step(*fn, s, x, th, delta, draw_bundle(*fn, s, rng, delta));
        CHECK((y - x).norm() <= 1e-4);
    }
}

TEST_CASE("eta terms change the hypo-elliptic step for FN", "[scheme]") {
    auto fn = builtin_model("fitzhugh_nagumo");
    const Theta th = fn->default_theta();
    const Eigen::VectorXd x = vec({0.4, -0.7});
    SeededRng rng(12, 0);
    const auto b = draw_hypo(rng, 0.2, 1);
    const Eigen::VectorXd lg = step_local_gauss(*fn, x, th, 0.2, b);
    const Eigen::VectorXd w2 = step_weak2_hypo(*fn, x, th, 0.2, b);
    // The rough coordinates differ through the zeta-weighted terms; the smooth ones through eta.
    CHECK(std::abs(lg[1] - w2[1]) > 1e-8);
}

TEST_CASE("path simulation", "[scheme]") {
    auto fn = builtin_model("fitzhugh_nagumo");
    const Theta th = fn->default_theta();
    SeededRng r0(5, 0);
    const auto p0 = simulate_path(*fn, Scheme::local_gauss, vec({0.1, 0.2}), th, 1e-3, 0, r0);
    CHECK(p0.size() == 1);
    CHECK(p0.states(0, 1) == 0.2);

    SeededRng r1(5, 0), r2(5, 0);
    const auto a = simulate_path(*fn, Scheme::local_gauss, vec({0.1, 0.2}), th, 1e-4, 1000, r1);
    const auto b = simulate_path(*fn, Scheme::local_gauss, vec({0.1, 0.2}), th, 1e-4, 1000, r2);
    CHECK(a.states == b.states);
    CHECK(a.times.back() == Approx(0.1));

    const auto o1 = subsample(a, 1);
    CHECK(o1.states == a.states);
    CHECK(subsample(a, 50).delta == Approx(0.005));
    CHECK(subsample(a, 50).n() == 20);
    CHECK(subsample(a, 20).delta == Approx(0.002));
    CHECK_THROWS_AS(subsample(a, 1001), InvalidArgument);
}

TEST_CASE("non-finite states abort with the step index", "[scheme]") {
    CallbackModel blow(
        "blow", 1, 0, {{"a", ParamBlock::beta, false, 1.0}},
        [](const double*, const double*, double* out) { out[0] = 1e308; },
        [](const double*, const double*, double* out) { out[0] = 1.0; });
    SeededRng rng(1, 0);
    try {
        simulate_path(blow, Scheme::euler, vec({1.0}), blow.default_theta(), 1.0, 10, rng);
        FAIL("expected NonFiniteStateError");
    } catch (const NonFiniteStateError& e) {
        CHECK(e.step() == 2);
    }
}
