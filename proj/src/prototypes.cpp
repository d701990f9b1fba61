#include "subuda/prototypes.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "subuda/error.hpp"

namespace subuda {

ClassCentroids class_centroids(const Eigen::Ref<const Matrix>& features,
                               const IntVector& labels, Index num_classes) {
  if (features.rows() != labels.size())
    throw ShapeError("class_centroids: feature rows != label count");
  ClassCentroids c;
  c.centroids = Matrix::Zero(num_classes, features.cols());
  c.counts = IntVector::Zero(num_classes);
  for (Index i = 0; i < labels.size(); ++i) {
    const int n = labels(i);
    if (n < 0 || n >= num_classes)
      throw ValidationError("class_centroids: label " + std::to_string(n) + " out of range");
    c.centroids.row(n) += features.row(i);
    c.counts(n) += 1;
  }
  for (Index n = 0; n < num_classes; ++n)
    if (c.counts(n) > 0) c.centroids.row(n) /= static_cast<double>(c.counts(n));
  return c;
}

namespace {

// Scores s_n = -||f - c_n||^2 over present classes; returns softmax in `probs`
// (full length, zeros at absent classes).
Vector softmax_scores(const Eigen::Ref<const RowVector>& feature, const ClassCentroids& c) {
  const Index N = c.num_classes();
  Vector scores = Vector::Constant(N, -std::numeric_limits<double>::infinity());
  double max_score = -std::numeric_limits<double>::infinity();
  for (Index n = 0; n < N; ++n) {
    if (!c.present(n)) continue;
    scores(n) = -(feature - c.centroids.row(n)).squaredNorm();
    max_score = std::max(max_score, scores(n));
  }
  if (!std::isfinite(max_score))
    throw StateError("prototype_probs: no centroids present");
  Vector probs = Vector::Zero(N);
  double denom = 0.0;
  for (Index n = 0; n < N; ++n) {
    if (!c.present(n)) continue;
    probs(n) = std::exp(scores(n) - max_score);
    denom += probs(n);
  }
  probs /= denom;
  return probs;
}

}  // namespace

Vector prototype_probs(const Eigen::Ref<const RowVector>& feature,
                       const ClassCentroids& centroids) {
  if (feature.size() != centroids.centroids.cols())
    throw ShapeError("prototype_probs: feature dim != centroid dim");
  return softmax_scores(feature, centroids);
}

CeLossResult class_ce_loss(const Eigen::Ref<const Matrix>& queries, const IntVector& labels,
                           const ClassCentroids& centroids) {
  if (queries.rows() != labels.size())
    throw ShapeError("class_ce_loss: query rows != label count");
  const Index B = queries.rows();
  const Index N = centroids.num_classes();
  CeLossResult r;
  r.grad_queries = Matrix::Zero(B, queries.cols());
  r.grad_centroids = Matrix::Zero(N, queries.cols());
  if (B == 0) return r;

  const double inv_b = 1.0 / static_cast<double>(B);
  for (Index i = 0; i < B; ++i) {
    const int y = labels(i);
    if (y < 0 || y >= N)
      throw ValidationError("class_ce_loss: label " + std::to_string(y) + " out of range");
    if (!centroids.present(y))
      throw StateError("class_ce_loss: centroid for label " + std::to_string(y) + " absent");
    const Vector p = softmax_scores(queries.row(i), centroids);
    r.loss += -std::log(std::max(p(y), std::numeric_limits<double>::min())) * inv_b;
    for (Index n = 0; n < N; ++n) {
      if (!centroids.present(n)) continue;
      // dL/ds_n = p_n - [n == y]; s_n = -||f - c_n||^2
      const double coef = (p(n) - (n == y ? 1.0 : 0.0)) * inv_b;
      const RowVector diff = queries.row(i) - centroids.centroids.row(n);
      r.grad_queries.row(i) += coef * (-2.0) * diff;
      r.grad_centroids.row(n) += coef * 2.0 * diff;
    }
  }
  return r;
}

IntVector pseudo_label(const Eigen::Ref<const Matrix>& features,
                       const ClassCentroids& source_centroids) {
  if (source_centroids.present_count() == 0)
    throw StateError("pseudo_label: no source centroids present");
  const Index N = source_centroids.num_classes();
  IntVector out(features.rows());
  for (Index i = 0; i < features.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int best_n = -1;
    for (Index n = 0; n < N; ++n) {
      if (!source_centroids.present(n)) continue;
      const double d2 =
          (features.row(i) - source_centroids.centroids.row(n)).squaredNorm();
      if (d2 < best) {  // strict: ties keep the lowest index
        best = d2;
        best_n = static_cast<int>(n);
      }
    }
    out(i) = best_n;
  }
  return out;
}

MatchLossResult class_match_loss(const ClassCentroids& source, const ClassCentroids& target) {
  if (source.num_classes() != target.num_classes())
    throw ShapeError("class_match_loss: class count mismatch");
  const Index N = source.num_classes();
  MatchLossResult r;
  r.grad_source_centroids = Matrix::Zero(N, source.centroids.cols());
  r.grad_target_centroids = Matrix::Zero(N, target.centroids.cols());

  Index both = 0;
  for (Index n = 0; n < N; ++n)
    if (source.present(n) && target.present(n)) ++both;
  if (both == 0) return r;  // nothing to match

  const double inv = 1.0 / static_cast<double>(both);
  for (Index n = 0; n < N; ++n) {
    if (!(source.present(n) && target.present(n))) continue;
    const RowVector diff = source.centroids.row(n) - target.centroids.row(n);
    r.loss += diff.squaredNorm() * inv;
    r.grad_source_centroids.row(n) = 2.0 * inv * diff;
    r.grad_target_centroids.row(n) = -2.0 * inv * diff;
  }
  return r;
}

void scatter_centroid_grad(const Eigen::Ref<const Matrix>& grad_centroids,
                           const IntVector& labels, const IntVector& counts,
                           Matrix& grad_features) {
  if (grad_features.rows() != labels.size())
    throw ShapeError("scatter_centroid_grad: feature rows != label count");
  for (Index i = 0; i < labels.size(); ++i) {
    const int n = labels(i);
    if (n < 0) continue;
    if (counts(n) <= 0) throw UsageError("scatter_centroid_grad: zero count for used class");
    grad_features.row(i) += grad_centroids.row(n) / static_cast<double>(counts(n));
  }
}

}  // namespace subuda
