#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <sstream>

#include "hypo/augment.hpp"
#include "hypo/core/rng.hpp"
#include "hypo/estimate.hpp"
#include "hypo/models/builtin.hpp"

using namespace hypo;
using Catch::Approx;

namespace {

constexpr double kKappa = 1.0, kSigma = 0.5, kNoise = 0.3, kDelta = 0.5;

// OU with kappa, sigma fixed; mu ~ N(0, 1) and x0 ~ N(0, 1); all coordinates observed with noise.
AugmentSpec toy_spec(std::size_t M, Scheme scheme) {
    AugmentSpec s;
    s.priors = {{"mu", PriorTransform::identity, 0.0, 1.0}};
    s.initial = {InitialSpec::normal(0.0, 1.0)};
    s.observe = {0, false, kNoise};
    s.y = {0.4, 0.9, 0.3, 1.1, 0.7};
    s.delta = kDelta;
    s.M = M;
    s.scheme = scheme;
    return s;
}

std::shared_ptr<const Model> toy_model() { return builtin_model("ou", {{"kappa", kKappa}, {"sigma", kSigma}}); }

// Rows of H map q to the EM latent state at each observation time, built from the recursion
// x_{s+1} = (1 - kappa dt) x_s + kappa dt mu + sigma sqrt(dt) v_s.
Eigen::MatrixXd toy_em_design(std::size_t M, std::size_t n_obs) {
    const double dt = kDelta / static_cast<double>(M);
    const std::size_t steps = (n_obs - 1) * M;
    const auto dq = static_cast<Eigen::Index>(2 + steps);
    Eigen::MatrixXd H(static_cast<Eigen::Index>(n_obs), dq);
    Eigen::RowVectorXd c = Eigen::RowVectorXd::Zero(dq);
    c[1] = 1.0;
    H.row(0) = c;
    for (std::size_t s = 0; s < steps; ++s) {
        c *= 1.0 - kKappa * dt;
        c[0] += kKappa * dt;
        c[static_cast<Eigen::Index>(2 + s)] += kSigma * std::sqrt(dt);
        if ((s + 1) % M == 0) H.row(static_cast<Eigen::Index>((s + 1) / M)) = c;
    }
    return H;
}

double mvn_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
    const Eigen::LLT<Eigen::MatrixXd> llt(cov);
    const Eigen::VectorXd r = llt.matrixL().solve(x - mean);
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return -0.5 * (r.squaredNorm() + logdet + static_cast<double>(x.size()) * std::log(2.0 * M_PI));
}

struct ToyPosterior {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    double log_evidence;
};

// q ~ N(0, I), Y = H q + noise: Gaussian posterior and marginal likelihood of Y.
ToyPosterior toy_conjugate(std::size_t M) {
    const auto spec = toy_spec(M, Scheme::euler);
    const Eigen::MatrixXd H = toy_em_design(M, spec.y.size());
    const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(spec.y.data(), static_cast<Eigen::Index>(spec.y.size()));
    const Eigen::MatrixXd prec = Eigen::MatrixXd::Identity(H.cols(), H.cols()) + H.transpose() * H / (kNoise * kNoise);
    ToyPosterior p;
    p.cov = prec.inverse();
    p.mean = p.cov * H.transpose() * y / (kNoise * kNoise);
    const Eigen::MatrixXd ycov = H * H.transpose() + kNoise * kNoise * Eigen::MatrixXd::Identity(H.rows(), H.rows());
    p.log_evidence = mvn_logpdf(y, Eigen::VectorXd::Zero(y.size()), ycov);
    return p;
}

double std_normal_logpdf(const Eigen::VectorXd& q) {
    return -0.5 * q.squaredNorm() - 0.5 * static_cast<double>(q.size()) * std::log(2.0 * M_PI);
}

Eigen::VectorXd random_q(std::size_t d, SeededRng& rng, double scale) {
    Eigen::VectorXd q(static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < q.size(); ++i) q[i] = scale * rng.normal();
    return q;
}

LogDensityFn gaussian_target(const Eigen::MatrixXd& cov) {
    const Eigen::MatrixXd prec = cov.inverse();
    return [prec](const Eigen::VectorXd& q, Eigen::VectorXd& g) {
        g = -prec * q;
        return -0.5 * q.dot(prec * q);
    };
}

double ks_statistic_normal(std::vector<double> x, double sd) {
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = 0.5 * std::erfc(-x[i] / (sd * std::sqrt(2.0)));
        d = std::max({d, std::abs(f - static_cast<double>(i) / n), std::abs(f - static_cast<double>(i + 1) / n)});
    }
    return d;
}

}  // namespace

TEST_CASE("layout counts parameters, initial state and innovations", "[augment]") {
    auto m = toy_model();
    const auto em = build_logpost(*m, toy_spec(3, Scheme::euler));
    CHECK(em.layout().n_u == 1);
    CHECK(em.layout().n_u0 == 1);
    CHECK(em.layout().intervals == 4);
    CHECK(em.dim() == 2 + 4 * 3);
    auto sir = sir_demo_model();
    const auto s_em = build_logpost(*sir, sir_demo_spec(Scheme::euler, 0.25));
    const auto s_w2 = build_logpost(*sir, sir_demo_spec(Scheme::weak2, 0.25));
    CHECK(s_em.dim() == 4 + 1 + 14 * 4 * 3);
    CHECK(s_w2.dim() == 4 + 1 + 14 * 4 * 5);
    CHECK(s_em.summary_names() == std::vector<std::string>{"alpha", "beta", "sigma", "lambda", "x0[2]"});
}

TEST_CASE("SIR demo defaults", "[augment]") {
    const auto s = sir_demo_spec(Scheme::euler, 0.05);
    CHECK(s.M == 20);
    CHECK(s.observe.noise_sd == 5.0);
    CHECK(s.observe.exp_link);
    CHECK(s.initial[0].value == Approx(std::log(762.0)));
    CHECK(s.initial[1].value == 0.0);
    CHECK(s.initial[2].random);
    CHECK(s.y.size() == 15);
    CHECK(std::isnan(s.y[0]));
    CHECK(s.y[6] == 298.0);
    REQUIRE(s.priors.size() == 4);
    CHECK(s.priors[0].transform == PriorTransform::log);
    CHECK(s.priors[1].transform == PriorTransform::identity);
    CHECK(s.priors[2].mean == -3.0);
    CHECK(sir_demo_model()->name() == "sir_log");
    CHECK_THROWS_AS(sir_demo_spec(Scheme::euler, 0.3), InvalidArgument);
}

TEST_CASE("invalid specifications are listed together", "[augment]") {
    auto m = toy_model();
    auto s = toy_spec(0, Scheme::local_gauss);
    s.observe.noise_sd = -1.0;
    s.priors.push_back({"nope", PriorTransform::identity, 0.0, 1.0});
    try {
        build_logpost(*m, s);
        FAIL("expected InvalidArgument");
    } catch (const InvalidArgument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("M must be") != std::string::npos);
        CHECK(msg.find("euler or weak2") != std::string::npos);
        CHECK(msg.find("noise sd") != std::string::npos);
        CHECK(msg.find("nope") != std::string::npos);
    }
}

TEST_CASE("EM log-posterior of the linear toy equals the Gaussian posterior plus evidence", "[augment]") {
    auto m = toy_model();
    SeededRng rng(101, 0);
    for (std::size_t M : {1, 3}) {
        const auto post = build_logpost(*m, toy_spec(M, Scheme::euler));
        const ToyPosterior ref = toy_conjugate(M);
        for (int rep = 0; rep < 5; ++rep) {
            const Eigen::VectorXd q = random_q(post.dim(), rng, 1.0);
            const double oracle = mvn_logpdf(q, ref.mean, ref.cov) + ref.log_evidence;
            CHECK(std::abs(post.log_density(q) - oracle) <= 1e-8);
        }
    }
}

TEST_CASE("without informative observations the posterior is the prior", "[augment]") {
    auto m = toy_model();
    SeededRng rng(102, 0);
    auto s = toy_spec(2, Scheme::weak2);
    s.y.assign(s.y.size(), std::numeric_limits<double>::quiet_NaN());
    const auto none = build_logpost(*m, s);
    s = toy_spec(2, Scheme::weak2);
    s.observe.noise_sd = 1e8;
    const auto vague = build_logpost(*m, s);
    for (int rep = 0; rep < 5; ++rep) {
        const Eigen::VectorXd q = random_q(none.dim(), rng, 1.0);
        Eigen::VectorXd g;
        CHECK(none.log_density(q, g) == Approx(std_normal_logpdf(q)).epsilon(1e-14));
        CHECK((g + q).norm() <= 1e-12);
        vague.log_density(q, g);
        CHECK((g + q).norm() <= 1e-6);
    }
}

TEST_CASE("gradient matches central differences", "[augment]") {
    SeededRng rng(103, 0);
    auto sir = sir_demo_model();
    auto toy = toy_model();
    const std::vector<std::pair<std::shared_ptr<const Model>, AugmentSpec>> cases = {
        {toy, toy_spec(3, Scheme::euler)},
        {toy, toy_spec(3, Scheme::weak2)},
        {sir, sir_demo_spec(Scheme::euler, 0.25)},
        {sir, sir_demo_spec(Scheme::weak2, 0.25)},
        {builtin_model("linear_sdhs"), [] {
             AugmentSpec s;
             s.priors = {{"sigma", PriorTransform::log, 0.0, 0.5}, {"c", PriorTransform::identity, 1.0, 0.3}};
             s.initial = {InitialSpec::normal(0.0, 1.0), InitialSpec::fixed(0.2)};
             s.observe = {1, false, 0.2};
             s.y = {0.2, 0.5, std::numeric_limits<double>::quiet_NaN(), 0.1};
             s.delta = 0.5;
             s.M = 2;
             s.scheme = Scheme::weak2;
             return s;
         }()},
    };
    for (const auto& [model, spec] : cases) {
        const auto post = build_logpost(*model, spec);
        // SIR points sit near a plausible epidemic so the path stays finite.
        Eigen::VectorXd centre = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(post.dim()));
        if (model->name() == "sir_log") {
            Theta th = model->default_theta();
            th.set("alpha", 1.0);
            th.set("beta", 0.6);
            th.set("lambda", 0.5);
            th.set("sigma", 0.05);
            Eigen::VectorXd x0(3);
            x0 << std::log(762.0), 0.0, 0.6;
            centre = post.initial_point(th, x0);
        }
        const double scale = model->name() == "sir_log" ? 0.02 : 1.0;
        for (int rep = 0; rep < 10; ++rep) {
            const Eigen::VectorXd q = centre + random_q(post.dim(), rng, scale);
            Eigen::VectorXd g;
            const double v = post.log_density(q, g);
            REQUIRE(std::isfinite(v));
            CHECK(v == Approx(post.log_density(q)).epsilon(1e-13));
            Eigen::VectorXd fd(q.size());
            for (Eigen::Index i = 0; i < q.size(); ++i) {
                const double h = 1e-6 * std::max(1.0, std::abs(q[i]));
                Eigen::VectorXd a = q, b = q;
                a[i] += h;
                b[i] -= h;
                fd[i] = (post.log_density(a) - post.log_density(b)) / (2.0 * h);
            }
            INFO(model->name() << " scheme " << to_string(spec.scheme));
            CHECK((fd - g).norm() <= 1e-4 * g.norm());
        }
    }
}

TEST_CASE("non-finite propagation gives minus infinity with a diagnostic", "[augment]") {
    auto sir = sir_demo_model();
    const auto post = build_logpost(*sir, sir_demo_spec(Scheme::euler, 0.25));
    Eigen::VectorXd q = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(post.dim()));
    q[1] = 40.0;  // beta = 40: log C runs away
    Eigen::VectorXd g;
    CHECK(post.log_density(q, g) == -std::numeric_limits<double>::infinity());
    CHECK(g.isZero());
    CHECK(post.last_diagnostic().find("non-finite") != std::string::npos);
    CHECK_THROWS_AS(post.log_density(Eigen::VectorXd::Zero(3)), DimensionError);
}

TEST_CASE("leapfrog energy error is second order", "[augment][hmc]") {
    Eigen::MatrixXd cov(2, 2);
    cov << 1.0, 0.3, 0.3, 4.0;
    const LogDensityFn f = gaussian_target(cov);
    LeapfrogState s0;
    s0.q = Eigen::Vector2d(0.7, -1.2);
    s0.p = Eigen::Vector2d(0.4, 1.1);
    s0.logp = f(s0.q, s0.grad);
    const double h0 = hamiltonian(s0);
    std::vector<double> err;
    for (double eps : {0.1, 0.05, 0.025, 0.0125}) {
        const auto s1 = leapfrog(f, s0, eps, static_cast<std::size_t>(std::lround(1.0 / eps)));
        err.push_back(std::abs(hamiltonian(s1) - h0));
    }
    for (std::size_t i = 1; i < err.size(); ++i) {
        INFO("ratio " << err[i - 1] / err[i]);
        CHECK(err[i - 1] / err[i] == Approx(4.0).epsilon(0.1));
    }
}

TEST_CASE("HMC on a standard normal target", "[augment][hmc]") {
    const LogDensityFn f = gaussian_target(Eigen::MatrixXd::Identity(1, 1));
    HmcConfig cfg;
    cfg.step_size = 0.3;
    cfg.n_leapfrog = 5;
    cfg.n_iters = 10000;
    cfg.warmup = 100;
    cfg.seed = 7;
    const auto ch = hmc_sample(f, Eigen::VectorXd::Constant(1, 2.0), cfg);
    const Eigen::VectorXd x = ch.draws.col(0);
    const double mean = x.mean();
    const double var = (x.array() - mean).square().mean();
    CHECK(std::abs(mean) <= 5.0 * batch_means_se(x));
    CHECK(std::abs(var - 1.0) <= 0.1);
    CHECK(ch.divergences == 0);
    CHECK(ch.acceptance_rate() > 0.9);

    cfg.step_size = 1e-3;
    cfg.n_iters = 300;
    cfg.n_leapfrog = 10;
    CHECK(hmc_sample(f, Eigen::VectorXd::Constant(1, 2.0), cfg).acceptance_rate() == 1.0);
}

TEST_CASE("HMC marginals on a correlated 2D Gaussian pass a KS test", "[augment][hmc]") {
    Eigen::MatrixXd cov(2, 2);
    cov << 1.0, 0.6, 0.6, 2.0;
    HmcConfig cfg;
    cfg.step_size = 0.25;
    cfg.n_leapfrog = 8;
    cfg.n_iters = 10000;
    cfg.warmup = 200;
    cfg.seed = 11;
    const auto ch = hmc_sample(gaussian_target(cov), Eigen::Vector2d(1.0, -1.0), cfg);
    const std::size_t thin = 10;
    for (Eigen::Index c = 0; c < 2; ++c) {
        std::vector<double> x;
        for (Eigen::Index r = 0; r < ch.draws.rows(); r += thin) x.push_back(ch.draws(r, c));
        const double d = ks_statistic_normal(x, std::sqrt(cov(c, c)));
        CHECK(d <= 1.628 / std::sqrt(static_cast<double>(x.size())));  // 1% critical value
    }
}

TEST_CASE("divergent trajectories are counted and rejected", "[augment][hmc]") {
    // Steep target where a large step blows up the energy.
    const LogDensityFn f = gaussian_target(Eigen::MatrixXd::Identity(1, 1) * 1e-4);
    HmcConfig cfg;
    cfg.step_size = 0.5;
    cfg.n_leapfrog = 10;
    cfg.n_iters = 20;
    const auto ch = hmc_sample(f, Eigen::VectorXd::Constant(1, 0.01), cfg);
    CHECK(ch.divergences == 20);
    CHECK(ch.accepted == 0);
    CHECK((ch.draws.array() == 0.01).all());
}

TEST_CASE("HMC on the linear toy recovers the conjugate posterior mean", "[augment][hmc]") {
    auto m = toy_model();
    const std::size_t M = 2;
    const auto post = build_logpost(*m, toy_spec(M, Scheme::euler));
    const ToyPosterior ref = toy_conjugate(M);
    HmcConfig cfg;
    cfg.step_size = 0.15;
    cfg.n_leapfrog = 12;
    cfg.n_iters = 6000;
    cfg.warmup = 300;
    cfg.seed = 13;
    const auto ch = hmc_sample(as_log_density(post), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(post.dim())), cfg);
    CHECK(ch.divergences == 0);
    const auto rows = posterior_summary(ch.draws.leftCols(2), {"mu", "x0"});
    for (Eigen::Index i = 0; i < 2; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        INFO(r.name << " mean " << r.mean << " closed form " << ref.mean[i] << " mcse " << r.mcse);
        CHECK(std::abs(r.mean - ref.mean[i]) <= 3.0 * r.mcse);
        CHECK(r.sd == Approx(std::sqrt(ref.cov(i, i))).epsilon(0.1));
    }
}

TEST_CASE("EM and weak2 posteriors agree on the linear toy with many imputation steps", "[augment][hmc]") {
    auto m = toy_model();
    HmcConfig cfg;
    cfg.step_size = 0.12;
    cfg.n_leapfrog = 15;
    cfg.n_iters = 4000;
    cfg.warmup = 300;
    cfg.seed = 17;
    std::vector<std::vector<PosteriorStat>> runs;
    for (Scheme s : {Scheme::euler, Scheme::weak2}) {
        const auto post = build_logpost(*m, toy_spec(20, s));
        const auto ch = hmc_sample(as_log_density(post), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(post.dim())), cfg);
        CHECK(ch.divergences == 0);
        const Eigen::MatrixXd S = map_draws(ch.draws, [&](const Eigen::VectorXd& q) { return post.summary_values(q); });
        runs.push_back(posterior_summary(S, post.summary_names()));
    }
    const auto shifts = compare_summaries(runs[0], runs[1]);
    REQUIRE(shifts.size() == 2);
    for (std::size_t i = 0; i < shifts.size(); ++i) {
        const double se = std::hypot(runs[0][i].mcse, runs[1][i].mcse);
        INFO(shifts[i].name << " shift " << shifts[i].shift << " se " << se);
        CHECK(std::abs(shifts[i].shift) <= 3.0 * se);
    }
}

TEST_CASE("posterior summary arithmetic", "[augment]") {
    const Eigen::MatrixXd constant = Eigen::MatrixXd::Constant(50, 2, 1.25);
    const auto rows = posterior_summary(constant, {"a", "b"});
    CHECK(rows[0].mean == 1.25);
    CHECK(rows[0].sd == 0.0);
    CHECK(rows[1].q05 == 1.25);
    CHECK(rows[1].q95 == 1.25);
    CHECK_THROWS_AS(posterior_summary(Eigen::MatrixXd(0, 2), {"a", "b"}), InvalidArgument);

    Eigen::MatrixXd shifted = constant;
    shifted.col(1).array() += 0.5;
    const auto diff = compare_summaries(rows, posterior_summary(shifted, {"a", "b"}));
    CHECK(diff[0].shift == 0.0);
    CHECK(diff[1].shift == Approx(0.5));

    std::ostringstream os;
    write_posterior_summary_csv(os, rows);
    CHECK(os.str().rfind("param,mean,sd,mcse,q05,q50,q95\na,1.25,0,0,1.25,1.25,1.25\n", 0) == 0);
}
