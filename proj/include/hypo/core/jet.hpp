#pragma once

#include <array>
#include <cmath>
#include <type_traits>

namespace hypo {

/// @brief Truncated multivariate Taylor jet: value plus derivative tensors up to order K in N variables.
///
/// The base scalar T may itself be an AD type, so jets nest (e.g. spatial jets over a reverse-mode tape).
/// Tensors are stored in full (not symmetry-reduced) row-major form.
template <class T, int N, int K>
struct Jet {
    static_assert(N >= 1 && K >= 1 && K <= 3);
    static constexpr int kH = K >= 2 ? N * N : 0;
    static constexpr int kT = K >= 3 ? N * N * N : 0;

    T v;
    std::array<T, N> g;
    std::array<T, kH> h;
    std::array<T, kT> t;

    // Default-initialized jets are left indeterminate (cheap fixed-capacity containers); Jet{} is zero.
    Jet() = default;
    Jet(const T& c) : v(c) { zero_tail(); }  // NOLINT: implicit lift of constants
    template <class U = T>
        requires(!std::is_same_v<U, double>)
    Jet(double c) : v(c) {  // NOLINT
        zero_tail();
    }

    /// Seeds coordinate i with the given value.
    static Jet variable(const T& value, int i) {
        Jet out(value);
        out.g[i] = T(1.0);
        return out;
    }

    T& hess(int i, int j) { return h[i * N + j]; }
    const T& hess(int i, int j) const { return h[i * N + j]; }
    T& third(int i, int j, int k) { return t[(i * N + j) * N + k]; }
    const T& third(int i, int j, int k) const { return t[(i * N + j) * N + k]; }

    Jet& operator+=(const Jet& o) {
        v += o.v;
        for (int i = 0; i < N; ++i) g[i] += o.g[i];
        for (int i = 0; i < kH; ++i) h[i] += o.h[i];
        for (int i = 0; i < kT; ++i) t[i] += o.t[i];
        return *this;
    }
    Jet& operator-=(const Jet& o) {
        v -= o.v;
        for (int i = 0; i < N; ++i) g[i] -= o.g[i];
        for (int i = 0; i < kH; ++i) h[i] -= o.h[i];
        for (int i = 0; i < kT; ++i) t[i] -= o.t[i];
        return *this;
    }
    Jet& operator*=(const Jet& o) { return *this = *this * o; }
    Jet& operator/=(const Jet& o) { return *this = *this / o; }

    Jet scaled(const T& c) const {
        Jet out;
        out.v = v * c;
        for (int i = 0; i < N; ++i) out.g[i] = g[i] * c;
        for (int i = 0; i < kH; ++i) out.h[i] = h[i] * c;
        for (int i = 0; i < kT; ++i) out.t[i] = t[i] * c;
        return out;
    }

    friend Jet operator-(const Jet& a) { return a.scaled(T(-1.0)); }
    friend Jet operator+(Jet a, const Jet& b) { return a += b; }
    friend Jet operator-(Jet a, const Jet& b) { return a -= b; }

    friend Jet operator*(const Jet& a, const Jet& b) {
        Jet out;
        out.v = a.v * b.v;
        for (int i = 0; i < N; ++i) out.g[i] = a.v * b.g[i] + b.v * a.g[i];
        if constexpr (K >= 2) {
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < N; ++j)
                    out.hess(i, j) = a.v * b.hess(i, j) + b.v * a.hess(i, j) + a.g[i] * b.g[j] +
                                     a.g[j] * b.g[i];
        }
        if constexpr (K >= 3) {
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < N; ++j)
                    for (int k = 0; k < N; ++k)
                        out.third(i, j, k) = a.v * b.third(i, j, k) + b.v * a.third(i, j, k) +
                                             a.g[i] * b.hess(j, k) + a.g[j] * b.hess(i, k) +
                                             a.g[k] * b.hess(i, j) + b.g[i] * a.hess(j, k) +
                                             b.g[j] * a.hess(i, k) + b.g[k] * a.hess(i, j);
        }
        return out;
    }

    friend Jet operator/(const Jet& a, const Jet& b) { return a * reciprocal(b); }

    friend Jet operator+(Jet a, const T& c) {
        a.v += c;
        return a;
    }
    friend Jet operator+(const T& c, Jet a) {
        a.v += c;
        return a;
    }
    friend Jet operator-(Jet a, const T& c) {
        a.v -= c;
        return a;
    }
    friend Jet operator-(const T& c, const Jet& a) { return (-a) + c; }
    friend Jet operator*(const Jet& a, const T& c) { return a.scaled(c); }
    friend Jet operator*(const T& c, const Jet& a) { return a.scaled(c); }
    friend Jet operator/(const Jet& a, const T& c) { return a.scaled(T(1.0) / c); }
    friend Jet operator/(const T& c, const Jet& a) { return reciprocal(a).scaled(c); }

    /// Applies a scalar function given its value and first three derivatives at v.
    static Jet chain(const Jet& a, const T& f0, const T& f1, const T& f2, const T& f3) {
        Jet out;
        out.v = f0;
        for (int i = 0; i < N; ++i) out.g[i] = f1 * a.g[i];
        if constexpr (K >= 2) {
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < N; ++j)
                    out.hess(i, j) = f2 * a.g[i] * a.g[j] + f1 * a.hess(i, j);
        }
        if constexpr (K >= 3) {
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < N; ++j)
                    for (int k = 0; k < N; ++k)
                        out.third(i, j, k) =
                            f3 * a.g[i] * a.g[j] * a.g[k] +
                            f2 * (a.hess(i, j) * a.g[k] + a.hess(i, k) * a.g[j] +
                                  a.hess(j, k) * a.g[i]) +
                            f1 * a.third(i, j, k);
        }
        return out;
    }

    friend Jet reciprocal(const Jet& a) {
        const T r = T(1.0) / a.v;
        const T r2 = r * r;
        return chain(a, r, -r2, 2.0 * r2 * r, -6.0 * r2 * r2);
    }

private:
    void zero_tail() {
        g.fill(T(0.0));
        h.fill(T(0.0));
        t.fill(T(0.0));
    }
};

template <class T, int N, int K, class U>
    requires(std::is_same_v<U, double> && !std::is_same_v<T, double>)
Jet<T, N, K> operator+(const Jet<T, N, K>& a, U c) { return a + T(c); }
template <class T, int N, int K, class U>
    requires(std::is_same_v<U, double> && !std::is_same_v<T, double>)
Jet<T, N, K> operator+(U c, const Jet<T, N, K>& a) { return a + T(c); }
template <class T, int N, int K, class U>
    requires(std::is_same_v<U, double> && !std::is_same_v<T, double>)
Jet<T, N, K> operator-(const Jet<T, N, K>& a, U c) { return a - T(c); }
template <class T, int N, int K, class U>
    requires(std::is_same_v<U, double> && !std::is_same_v<T, double>)
Jet<T, N, K> operator-(U c, const Jet<T, N, K>& a) { return T(c) - a; }
template <class T, int N, int K, class U>
    requires(std::is_same_v<U, double> && !std::is_same_v<T, double>)
Jet<T, N, K> operator*(const Jet<T, N, K>& a, U c) { return a.scaled(T(c)); }
template <class T, int N, int K, class U>
    requires(std::is_same_v<U, double> && !std::is_same_v<T, double>)
Jet<T, N, K> operator*(U c, const Jet<T, N, K>& a) { return a.scaled(T(c)); }
template <class T, int N, int K, class U>
    requires(std::is_same_v<U, double> && !std::is_same_v<T, double>)
Jet<T, N, K> operator/(const Jet<T, N, K>& a, U c) { return a.scaled(T(1.0 / c)); }
template <class T, int N, int K, class U>
    requires(std::is_same_v<U, double> && !std::is_same_v<T, double>)
Jet<T, N, K> operator/(U c, const Jet<T, N, K>& a) { return reciprocal(a).scaled(T(c)); }

template <class T, int N, int K>
Jet<T, N, K> exp(const Jet<T, N, K>& a) {
    using std::exp;
    const T e = exp(a.v);
    return Jet<T, N, K>::chain(a, e, e, e, e);
}

template <class T, int N, int K>
Jet<T, N, K> log(const Jet<T, N, K>& a) {
    using std::log;
    const T r = T(1.0) / a.v;
    return Jet<T, N, K>::chain(a, log(a.v), r, -r * r, 2.0 * r * r * r);
}

template <class T, int N, int K>
Jet<T, N, K> sqrt(const Jet<T, N, K>& a) {
    using std::sqrt;
    const T s = sqrt(a.v);
    const T r = T(1.0) / a.v;
    return Jet<T, N, K>::chain(a, s, 0.5 * s * r, -0.25 * s * r * r, 0.375 * s * r * r * r);
}

template <class T, int N, int K>
Jet<T, N, K> sin(const Jet<T, N, K>& a) {
    using std::cos;
    using std::sin;
    const T s = sin(a.v);
    const T c = cos(a.v);
    return Jet<T, N, K>::chain(a, s, c, -s, -c);
}

template <class T, int N, int K>
Jet<T, N, K> cos(const Jet<T, N, K>& a) {
    using std::cos;
    using std::sin;
    const T s = sin(a.v);
    const T c = cos(a.v);
    return Jet<T, N, K>::chain(a, c, -s, -c, s);
}

/// Power with a constant real exponent.
template <class T, int N, int K>
Jet<T, N, K> pow(const Jet<T, N, K>& a, double p) {
    using std::pow;
    const T f0 = pow(a.v, p);
    const T r = T(1.0) / a.v;
    const T f1 = p * f0 * r;
    const T f2 = (p - 1.0) * f1 * r;
    const T f3 = (p - 2.0) * f2 * r;
    return Jet<T, N, K>::chain(a, f0, f1, f2, f3);
}

template <class T>
struct is_jet : std::false_type {};
template <class T, int N, int K>
struct is_jet<Jet<T, N, K>> : std::true_type {};

}  // namespace hypo
