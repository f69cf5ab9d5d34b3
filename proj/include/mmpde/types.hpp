#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mmpde {

template <int D>
using Vec = Eigen::Matrix<double, D, 1>;

template <int R, int C>
using Mat = Eigen::Matrix<double, R, C>;

/// Supported simplex/ambient dimension pairs: 1 <= m <= d <= 3.
template <int M, int D>
concept SimplexDims = (M >= 1 && M <= D && D <= 3);

constexpr double factorial(int m) {
    double f = 1.0;
    for (int i = 2; i <= m; ++i) f *= i;
    return f;
}

/// Raised when an element has (numerically) zero measure.
class DegenerateElement : public std::runtime_error {
public:
    explicit DegenerateElement(std::ptrdiff_t index, const std::string& what = "degenerate simplex")
        : std::runtime_error(index >= 0 ? what + " (element " + std::to_string(index) + ")" : what),
          index_(index) {}

    std::ptrdiff_t index() const noexcept { return index_; }

private:
    std::ptrdiff_t index_;
};

/// Raised for numerical failures that are not tied to one element (non-SPD metric, rejected step).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad user input: configuration keys, file contents, parameters.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace mmpde
