#pragma once

#include <Eigen/Dense>

namespace subuda {

using Scalar = double;

// Row-major throughout: one sample per row, features along columns.
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using IntVector = Eigen::VectorXi;
using Index = Eigen::Index;

inline bool all_finite(const Eigen::Ref<const Matrix>& m) {
  return m.allFinite();
}

inline double squared_distance(const Eigen::Ref<const RowVector>& a,
                               const Eigen::Ref<const RowVector>& b) {
  return (a - b).squaredNorm();
}

}  // namespace subuda
