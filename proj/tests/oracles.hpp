// Test-only oracles: independent reference computations the implementation is
// checked against. Nothing here may call the code paths under test.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "subuda/types.hpp"

namespace oracles {

using subuda::Index;
using subuda::Matrix;

/// Central finite differences of `f` with respect to the entries of `x`.
inline Matrix finite_diff(Matrix& x, const std::function<double()>& f, double h = 1e-5) {
  Matrix g(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) {
      const double saved = x(i, j);
      x(i, j) = saved + h;
      const double up = f();
      x(i, j) = saved - h;
      const double down = f();
      x(i, j) = saved;
      g(i, j) = (up - down) / (2.0 * h);
    }
  }
  return g;
}

inline double max_rel_err(const Matrix& a, const Matrix& b, double floor = 1e-4) {
  double worst = 0.0;
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) {
      const double denom = std::max({std::abs(a(i, j)), std::abs(b(i, j)), floor});
      worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / denom);
    }
  return worst;
}

/// Exhaustive k-means objective: minimum over all assignments of points to at
/// most k clusters of the within-cluster sum of squared distances to means.
inline double brute_force_kmeans_objective(const Matrix& points, Index k) {
  const Index n = points.rows();
  const long total = static_cast<long>(std::pow(static_cast<double>(k), n));
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> assign(n);
  for (long code = 0; code < total; ++code) {
    long c = code;
    for (Index i = 0; i < n; ++i) {
      assign[i] = static_cast<int>(c % k);
      c /= k;
    }
    Matrix sums = Matrix::Zero(k, points.cols());
    std::vector<int> counts(k, 0);
    for (Index i = 0; i < n; ++i) {
      sums.row(assign[i]) += points.row(i);
      counts[assign[i]] += 1;
    }
    double obj = 0.0;
    for (Index i = 0; i < n; ++i) {
      const subuda::RowVector mean = sums.row(assign[i]) / static_cast<double>(counts[assign[i]]);
      obj += (points.row(i) - mean).squaredNorm();
    }
    best = std::min(best, obj);
  }
  return best;
}

/// Transitive closure of the <= eps squared-distance relation via repeated
/// boolean matrix passes (no union-find).
inline std::vector<int> closure_component_labels(const Matrix& points, double eps) {
  const Index n = points.rows();
  std::vector<std::vector<char>> adj(n, std::vector<char>(n, 0));
  for (Index i = 0; i < n; ++i) {
    adj[i][i] = 1;
    for (Index j = 0; j < n; ++j)
      if ((points.row(i) - points.row(j)).squaredNorm() <= eps) adj[i][j] = 1;
  }
  bool changed = true;
  while (changed) {
    changed = false;
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) {
        if (adj[i][j]) continue;
        for (Index m = 0; m < n; ++m)
          if (adj[i][m] && adj[m][j]) {
            adj[i][j] = 1;
            changed = true;
            break;
          }
      }
  }
  std::vector<int> label(n, -1);
  int next = 0;
  for (Index i = 0; i < n; ++i) {
    if (label[i] >= 0) continue;
    label[i] = next;
    for (Index j = 0; j < n; ++j)
      if (adj[i][j]) label[j] = next;
    ++next;
  }
  return label;
}

}  // namespace oracles
