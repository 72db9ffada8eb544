#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace ppgm {

// State, control and noise dimensions are small (desk scale), so vectors and
// matrices live on the stack with a compile-time capacity.
inline constexpr int kMaxDim = 3;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vector or matrix shapes that do not match the problem dimensions.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Root finding, ODE or PDE failure (non-finite values, no convergence).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Explicit scheme time step violates the monotonicity bound.
class CflError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// An action outside the effective domain of the nonsmooth cost.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// Malformed input: configuration documents, files, invalid parameters.
class InputError : public Error {
 public:
  using Error::Error;
};

inline Vec make_vec(std::initializer_list<double> values) {
  Vec v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

inline Vec zeros(int n) { return Vec::Zero(n); }

inline Mat scalar_mat(double x) {
  Mat m(1, 1);
  m(0, 0) = x;
  return m;
}

/// Spectral (operator 2-) norm.
inline double op_norm(const Mat& m) {
  if (m.size() == 0) return 0.0;
  if (m.rows() == 1 || m.cols() == 1) return m.norm();
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues()(0);
}

}  // namespace ppgm
