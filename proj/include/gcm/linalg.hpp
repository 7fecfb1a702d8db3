#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>

namespace gcm {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(sigmoid(x)) without overflow.
inline double log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

inline Vector sigmoid(const Vector& x) { return x.unaryExpr([](double v) { return sigmoid(v); }); }

inline Vector relu(const Vector& x) { return x.cwiseMax(0.0); }

/// Numerically stable softmax of a vector.
inline Vector softmax(const Vector& x) {
  Vector out = (x.array() - x.maxCoeff()).exp().matrix();
  out /= out.sum();
  return out;
}

/// Row-wise softmax.
inline Matrix softmax_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out.row(i) = softmax(m.row(i).transpose()).transpose();
  }
  return out;
}

/// Shape and value equality; Eigen's operator== requires equal shapes.
template <class A, class B>
bool same_values(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

/// Uniform(-limit, limit) init, limit = sqrt(6 / (fan_in + fan_out)).
template <class Rng>
Matrix glorot_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng);

}  // namespace gcm

#include "gcm/random.hpp"

namespace gcm {

template <class Rng>
Matrix glorot_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -limit, limit);
  return m;
}

}  // namespace gcm
