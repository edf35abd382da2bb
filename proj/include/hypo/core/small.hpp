#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cstddef>

#include <Eigen/Dense>

namespace hypo {

/// Largest state dimension supported by the fixed-capacity containers.
inline constexpr std::size_t kMaxDim = 8;

/// @brief Fixed-capacity vector with a runtime size, usable with any scalar type.
template <class T>
struct SVec {
    std::array<T, kMaxDim> data;
    std::size_t n;

    SVec() : n(0) {}
    explicit SVec(std::size_t size) : n(size) {
        assert(size <= kMaxDim);
        for (std::size_t i = 0; i < n; ++i) data[i] = T(0.0);
    }
    // Copies touch only the live entries.
    SVec(const SVec& o) : n(o.n) { std::copy(o.data.begin(), o.data.begin() + n, data.begin()); }
    SVec& operator=(const SVec& o) {
        n = o.n;
        std::copy(o.data.begin(), o.data.begin() + n, data.begin());
        return *this;
    }

    std::size_t size() const noexcept { return n; }
    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }
    T* begin() { return data.data(); }
    T* end() { return data.data() + n; }
    const T* begin() const { return data.data(); }
    const T* end() const { return data.data() + n; }

    friend bool operator==(const SVec& a, const SVec& b) {
        return a.n == b.n && std::equal(a.begin(), a.end(), b.begin());
    }
};

/// @brief Fixed-capacity column-major matrix with runtime shape.
template <class T>
struct SMat {
    std::array<T, kMaxDim * kMaxDim> data;
    std::size_t rows;
    std::size_t cols;

    SMat() : rows(0), cols(0) {}
    SMat(std::size_t r, std::size_t c) : rows(r), cols(c) {
        assert(r <= kMaxDim && c <= kMaxDim);
        for (std::size_t i = 0; i < r * c; ++i) data[i] = T(0.0);
    }
    SMat(const SMat& o) : rows(o.rows), cols(o.cols) {
        std::copy(o.data.begin(), o.data.begin() + rows * cols, data.begin());
    }
    SMat& operator=(const SMat& o) {
        rows = o.rows;
        cols = o.cols;
        std::copy(o.data.begin(), o.data.begin() + rows * cols, data.begin());
        return *this;
    }

    T& operator()(std::size_t i, std::size_t j) { return data[j * rows + i]; }
    const T& operator()(std::size_t i, std::size_t j) const { return data[j * rows + i]; }

    friend bool operator==(const SMat& a, const SMat& b) {
        return a.rows == b.rows && a.cols == b.cols &&
               std::equal(a.data.begin(), a.data.begin() + a.rows * a.cols, b.data.begin());
    }
};

inline Eigen::VectorXd to_eigen(const SVec<double>& v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.n));
    for (std::size_t i = 0; i < v.n; ++i) out[static_cast<Eigen::Index>(i)] = v[i];
    return out;
}

inline Eigen::MatrixXd to_eigen(const SMat<double>& m) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols));
    for (std::size_t j = 0; j < m.cols; ++j)
        for (std::size_t i = 0; i < m.rows; ++i)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(i, j);
    return out;
}

inline SVec<double> from_eigen(const Eigen::Ref<const Eigen::VectorXd>& v) {
    SVec<double> out(static_cast<std::size_t>(v.size()));
    for (std::size_t i = 0; i < out.n; ++i) out[i] = v[static_cast<Eigen::Index>(i)];
    return out;
}

}  // namespace hypo
