#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hypo {

/// @brief Base class of every error thrown by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// @brief A drift or diffusion evaluator returned a non-finite value.
class ModelEvaluationError : public Error {
public:
    ModelEvaluationError(const std::string& what, std::size_t coordinate)
        : Error(what), coordinate_(coordinate) {}
    std::size_t coordinate() const noexcept { return coordinate_; }

private:
    std::size_t coordinate_;
};

/// @brief The model lacks the derivative order an operation needs.
class CapabilityError : public Error {
public:
    using Error::Error;
};

/// @brief Mismatched or unsupported dimensions.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// @brief Cholesky factorization failed.
class SpdError : public Error {
public:
    SpdError(const std::string& what, std::size_t pivot_index, double pivot_value)
        : Error(what), pivot_index_(pivot_index), pivot_value_(pivot_value) {}
    std::size_t pivot_index() const noexcept { return pivot_index_; }
    double pivot_value() const noexcept { return pivot_value_; }

private:
    std::size_t pivot_index_;
    double pivot_value_;
};

/// @brief Simulation or propagation produced a non-finite state.
class NonFiniteStateError : public Error {
public:
    NonFiniteStateError(const std::string& what, std::size_t step)
        : Error(what), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// @brief Invalid argument outside the categories above.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

}  // namespace hypo
