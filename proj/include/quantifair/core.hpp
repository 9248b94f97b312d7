#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace quantifair {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using IntVector = VectorX<int>;
using Index = Eigen::Index;

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& z) {
  return z.derived().unaryExpr([](double v) { return sigmoid(v); });
}

// log(1 + exp(z)) without overflow.
inline double log1pexp(double z) {
  if (z > 0.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

// Round half up (ties toward +infinity); sampling targets use this consistently.
inline long long round_half_up(double x) {
  return static_cast<long long>(std::floor(x + 0.5));
}

}  // namespace quantifair
