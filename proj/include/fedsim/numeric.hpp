#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "fedsim/errors.hpp"

namespace fedsim {

// Row-major storage so that sample-per-row batches flatten in the natural
// order and parameter serialization is stable.
template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixT<double>;
using Vector = VectorT<double>;
using BoolArray = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline void check_finite(const Eigen::Ref<const Matrix>& m, const std::string& context) {
  if (!m.allFinite()) throw NumericError(context + ": non-finite values");
}

inline void check_finite(const Vector& v, const std::string& context) {
  if (!v.allFinite()) throw NumericError(context + ": non-finite values");
}

inline Matrix matmul(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()));
  }
  return a * b;
}

inline Matrix elementwise_min(const Eigen::Ref<const Matrix>& a,
                              const Eigen::Ref<const Matrix>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("elementwise_min: shape mismatch");
  }
  return a.cwiseMin(b);
}

// Broadcast form: b is a per-feature vector applied to every row of a.
inline Matrix elementwise_min(const Eigen::Ref<const Matrix>& a, const Vector& b) {
  if (a.cols() != b.size()) {
    throw DimensionError("elementwise_min: vector length " + std::to_string(b.size()) +
                         " vs row width " + std::to_string(a.cols()));
  }
  return a.cwiseMin(b.transpose().replicate(a.rows(), 1));
}

template <typename Derived>
double l2_norm(const Eigen::MatrixBase<Derived>& a) {
  return a.norm();
}

// Max-subtracted softmax per row; rows sum to 1.
inline Matrix softmax(const Eigen::Ref<const Matrix>& logits) {
  Matrix shifted = logits.colwise() - logits.rowwise().maxCoeff();
  Matrix e = shifted.array().exp();
  return e.array().colwise() / e.rowwise().sum().array();
}

inline Matrix log_softmax(const Eigen::Ref<const Matrix>& logits) {
  Matrix shifted = logits.colwise() - logits.rowwise().maxCoeff();
  Vector lse = shifted.array().exp().rowwise().sum().log();
  return shifted.colwise() - lse;
}

// Mean cross-entropy over the batch against integer labels.
inline double cross_entropy(const Eigen::Ref<const Matrix>& logits,
                            const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows()) {
    throw DimensionError("cross_entropy: label count vs batch size");
  }
  Matrix logp = log_softmax(logits);
  double total = 0.0;
  for (Eigen::Index i = 0; i < logp.rows(); ++i) {
    int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= logp.cols()) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(y) + " out of range");
    }
    total -= logp(i, y);
  }
  return total / static_cast<double>(logp.rows());
}

// Mean over rows of KL(p || q) with the 0*log(0) = 0 convention.
inline double kl_divergence(const Eigen::Ref<const Matrix>& p, const Eigen::Ref<const Matrix>& q) {
  if (p.rows() != q.rows() || p.cols() != q.cols()) {
    throw DimensionError("kl_divergence: shape mismatch");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      double pij = p(i, j);
      if (pij > 0.0) total += pij * (std::log(pij) - std::log(q(i, j)));
    }
  }
  return total / static_cast<double>(p.rows());
}

// Lowest index wins on ties.
inline int argmax_row(const Eigen::Ref<const Matrix>& m, Eigen::Index row) {
  int best = 0;
  double best_val = m(row, 0);
  for (Eigen::Index j = 1; j < m.cols(); ++j) {
    if (m(row, j) > best_val) {
      best_val = m(row, j);
      best = static_cast<int>(j);
    }
  }
  return best;
}

}  // namespace fedsim
