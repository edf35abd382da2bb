#pragma once

/// @file hermite.hpp
/// @brief Hermite polynomials of the N(0, Sigma_1) density, orders 1 to 3:
/// H_alpha(xi) = (-1)^{|alpha|} d_alpha p(xi) / p(xi).

#include <vector>

#include <Eigen/Dense>

#include "hypo/core/small.hpp"

namespace hypo {

/// Order-3 tensor stored densely, index (i, j, k) at (i * d + j) * d + k.
template <class T>
struct Tensor3 {
    std::size_t d = 0;
    std::vector<T> data;

    Tensor3() = default;
    explicit Tensor3(std::size_t dim) : d(dim), data(dim * dim * dim, T(0.0)) {}
    T& operator()(std::size_t i, std::size_t j, std::size_t k) { return data[(i * d + j) * d + k]; }
    const T& operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data[(i * d + j) * d + k];
    }
};

/// @brief Sigma_1^{-1} and the normalized residual m at which polynomials are evaluated.
template <class T>
struct HermiteContext {
    SMat<T> sigma1_inv;
    SVec<T> m;
    std::size_t dim() const { return m.size(); }
};

/// H_(i) = (Sigma_1^{-1} m)_i
template <class T>
SVec<T> hermite1(const HermiteContext<T>& c) {
    const std::size_t d = c.dim();
    SVec<T> h(d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) h[i] = h[i] + c.sigma1_inv(i, j) * c.m[j];
    return h;
}

/// H_(i,j) = H_i H_j - (Sigma_1^{-1})_ij
template <class T>
SMat<T> hermite2(const HermiteContext<T>& c, const SVec<T>& h1) {
    const std::size_t d = c.dim();
    SMat<T> h(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) h(i, j) = h1[i] * h1[j] - c.sigma1_inv(i, j);
    return h;
}

template <class T>
SMat<T> hermite2(const HermiteContext<T>& c) {
    return hermite2(c, hermite1(c));
}

/// H_(i,j,k) = H_i H_j H_k - S_ij H_k - S_ik H_j - S_jk H_i with S = Sigma_1^{-1}.
template <class T>
Tensor3<T> hermite3(const HermiteContext<T>& c, const SVec<T>& h1) {
    const std::size_t d = c.dim();
    const auto& S = c.sigma1_inv;
    Tensor3<T> h(d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t k = 0; k < d; ++k)
                h(i, j, k) = h1[i] * h1[j] * h1[k] - S(i, j) * h1[k] - S(i, k) * h1[j] -
                             S(j, k) * h1[i];
    return h;
}

template <class T>
Tensor3<T> hermite3(const HermiteContext<T>& c) {
    return hermite3(c, hermite1(c));
}

/// Context from Eigen inputs.
inline HermiteContext<double> hermite_context(const Eigen::MatrixXd& sigma1_inv,
                                              const Eigen::VectorXd& m) {
    HermiteContext<double> c;
    const auto d = static_cast<std::size_t>(m.size());
    c.sigma1_inv = SMat<double>(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            c.sigma1_inv(i, j) = sigma1_inv(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    c.m = from_eigen(m);
    return c;
}

}  // namespace hypo
