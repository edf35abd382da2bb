#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace hypo {

/// @brief Append-only record of elementary operations for reverse-mode differentiation.
///
/// Each node has up to two parents with local partial derivatives. One tape per thread.
class Tape {
public:
    struct Node {
        std::int32_t a;
        std::int32_t b;
        double da;
        double db;
    };

    static Tape& active() {
        thread_local Tape tape;
        return tape;
    }

    std::int32_t push(std::int32_t a, double da, std::int32_t b, double db) {
        nodes_.push_back(Node{a, b, da, db});
        return static_cast<std::int32_t>(nodes_.size() - 1);
    }

    std::int32_t new_input() { return push(-1, 0.0, -1, 0.0); }

    std::size_t size() const noexcept { return nodes_.size(); }
    void clear() { nodes_.clear(); }
    void reserve(std::size_t n) { nodes_.reserve(n); }

    /// Reverse sweep from `output`; returns adjoints of every node.
    std::vector<double> adjoints(std::int32_t output) const {
        std::vector<double> adj(nodes_.size(), 0.0);
        if (output < 0) return adj;
        adj[static_cast<std::size_t>(output)] = 1.0;
        for (std::int32_t i = output; i >= 0; --i) {
            const double w = adj[static_cast<std::size_t>(i)];
            if (w == 0.0) continue;
            const Node& n = nodes_[static_cast<std::size_t>(i)];
            if (n.a >= 0) adj[static_cast<std::size_t>(n.a)] += w * n.da;
            if (n.b >= 0) adj[static_cast<std::size_t>(n.b)] += w * n.db;
        }
        return adj;
    }

private:
    std::vector<Node> nodes_;
};

/// @brief Reverse-mode scalar. Constants carry index -1 and never touch the tape.
struct Var {
    double val = 0.0;
    std::int32_t idx = -1;

    Var() = default;
    Var(double v) : val(v) {}  // NOLINT: constants lift implicitly
    Var(double v, std::int32_t i) : val(v), idx(i) {}

    static Var input(double v) { return Var(v, Tape::active().new_input()); }

    Var& operator+=(const Var& o) { return *this = *this + o; }
    Var& operator-=(const Var& o) { return *this = *this - o; }
    Var& operator*=(const Var& o) { return *this = *this * o; }
    Var& operator/=(const Var& o) { return *this = *this / o; }

    friend Var unary(const Var& a, double f, double df) {
        if (a.idx < 0) return Var(f);
        return Var(f, Tape::active().push(a.idx, df, -1, 0.0));
    }
    friend Var binary(const Var& a, const Var& b, double f, double da, double db) {
        if (a.idx < 0 && b.idx < 0) return Var(f);
        if (a.idx < 0) return Var(f, Tape::active().push(b.idx, db, -1, 0.0));
        if (b.idx < 0) return Var(f, Tape::active().push(a.idx, da, -1, 0.0));
        return Var(f, Tape::active().push(a.idx, da, b.idx, db));
    }

    friend Var operator-(const Var& a) { return unary(a, -a.val, -1.0); }
    friend Var operator+(const Var& a, const Var& b) { return binary(a, b, a.val + b.val, 1.0, 1.0); }
    friend Var operator-(const Var& a, const Var& b) { return binary(a, b, a.val - b.val, 1.0, -1.0); }
    friend Var operator*(const Var& a, const Var& b) { return binary(a, b, a.val * b.val, b.val, a.val); }
    friend Var operator/(const Var& a, const Var& b) {
        const double q = a.val / b.val;
        return binary(a, b, q, 1.0 / b.val, -q / b.val);
    }

    friend bool operator<(const Var& a, const Var& b) { return a.val < b.val; }
    friend bool operator>(const Var& a, const Var& b) { return a.val > b.val; }
};

inline Var exp(const Var& a) {
    const double e = std::exp(a.val);
    return unary(a, e, e);
}
inline Var log(const Var& a) { return unary(a, std::log(a.val), 1.0 / a.val); }
inline Var sqrt(const Var& a) {
    const double s = std::sqrt(a.val);
    return unary(a, s, 0.5 / s);
}
inline Var sin(const Var& a) { return unary(a, std::sin(a.val), std::cos(a.val)); }
inline Var cos(const Var& a) { return unary(a, std::cos(a.val), -std::sin(a.val)); }
inline Var pow(const Var& a, double p) {
    const double f = std::pow(a.val, p);
    return unary(a, f, p * std::pow(a.val, p - 1.0));
}

/// Scalar value of plain, reverse-mode, or nested jet scalars.
inline double value_of(double x) { return x; }
inline double value_of(const Var& x) { return x.val; }
template <class J>
    requires requires(const J& j) { j.v; j.g; }
double value_of(const J& j) {
    return value_of(j.v);
}

}  // namespace hypo
