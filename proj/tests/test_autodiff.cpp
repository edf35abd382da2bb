#include <catch_amalgamated.hpp>

#include <cmath>

#include "hypo/core/jet.hpp"
#include "hypo/core/var.hpp"

using hypo::Jet;
using hypo::Var;
using Catch::Approx;

TEST_CASE("jet of a polynomial carries exact derivative tensors", "[autodiff]") {
    using J = Jet<double, 2, 3>;
    const J x = J::variable(1.5, 0);
    const J y = J::variable(-0.5, 1);
    const J f = x * x * y * y * y;  // x^2 y^3
    const double X = 1.5, Y = -0.5;
    CHECK(f.v == Approx(X * X * Y * Y * Y));
    CHECK(f.g[0] == Approx(2 * X * Y * Y * Y));
    CHECK(f.g[1] == Approx(3 * X * X * Y * Y));
    CHECK(f.hess(0, 0) == Approx(2 * Y * Y * Y));
    CHECK(f.hess(0, 1) == Approx(6 * X * Y * Y));
    CHECK(f.hess(1, 0) == Approx(6 * X * Y * Y));
    CHECK(f.hess(1, 1) == Approx(6 * X * X * Y));
    CHECK(f.third(0, 0, 0) == Approx(0.0).margin(1e-14));
    CHECK(f.third(0, 0, 1) == Approx(6 * Y * Y));
    CHECK(f.third(0, 1, 1) == Approx(12 * X * Y));
    CHECK(f.third(1, 1, 1) == Approx(6 * X * X));
    CHECK(f.third(1, 0, 1) == Approx(12 * X * Y));
}

TEST_CASE("jet elementary functions match closed-form derivatives", "[autodiff]") {
    using J = Jet<double, 1, 3>;
    const double a = 0.7;
    const J x = J::variable(a, 0);

    const J e = exp(2.0 * x);
    CHECK(e.g[0] == Approx(2 * std::exp(2 * a)));
    CHECK(e.hess(0, 0) == Approx(4 * std::exp(2 * a)));
    CHECK(e.third(0, 0, 0) == Approx(8 * std::exp(2 * a)));

    const J l = log(x);
    CHECK(l.third(0, 0, 0) == Approx(2 / (a * a * a)));

    const J s = sqrt(x);
    CHECK(s.g[0] == Approx(0.5 / std::sqrt(a)));
    CHECK(s.hess(0, 0) == Approx(-0.25 * std::pow(a, -1.5)));
    CHECK(s.third(0, 0, 0) == Approx(0.375 * std::pow(a, -2.5)));

    const J q = 1.0 / (1.0 + x * x);
    const double d = 1 + a * a;
    CHECK(q.g[0] == Approx(-2 * a / (d * d)));
    CHECK(q.hess(0, 0) == Approx((6 * a * a - 2) / (d * d * d)));
    CHECK(q.third(0, 0, 0) == Approx(24 * a * (1 - a * a) / (d * d * d * d)));

    const J p = pow(x, 2.5);
    CHECK(p.third(0, 0, 0) == Approx(2.5 * 1.5 * 0.5 * std::pow(a, -0.5)));
}

TEST_CASE("reverse-mode tape gradient matches hand derivative", "[autodiff]") {
    hypo::Tape::active().clear();
    const Var x = Var::input(2.0);
    const Var y = Var::input(3.0);
    const Var f = log(x) * y + sqrt(x * y) - exp(-y) / x;
    const auto adj = hypo::Tape::active().adjoints(f.idx);
    const double X = 2.0, Y = 3.0;
    CHECK(f.val == Approx(std::log(X) * Y + std::sqrt(X * Y) - std::exp(-Y) / X));
    CHECK(adj[x.idx] == Approx(Y / X + 0.5 * std::sqrt(Y / X) + std::exp(-Y) / (X * X)));
    CHECK(adj[y.idx] == Approx(std::log(X) + 0.5 * std::sqrt(X / Y) + std::exp(-Y) / X));
}

TEST_CASE("spatial jets over the tape differentiate mixed derivatives", "[autodiff]") {
    hypo::Tape::active().clear();
    using J = Jet<Var, 1, 2>;
    const Var th = Var::input(1.3);
    const J x = J::variable(Var(0.4), 0);
    const J f = th * x * x * x;  // d2f/dx2 = 6 th x, then d/dth = 6 x
    const Var h = f.hess(0, 0);
    const auto adj = hypo::Tape::active().adjoints(h.idx);
    CHECK(h.val == Approx(6 * 1.3 * 0.4));
    CHECK(adj[th.idx] == Approx(6 * 0.4));
}

TEST_CASE("constants never touch the tape", "[autodiff]") {
    hypo::Tape::active().clear();
    const Var a(2.0), b(5.0);
    const Var c = a * b + exp(a);
    CHECK(c.idx == -1);
    CHECK(hypo::Tape::active().size() == 0);
}
