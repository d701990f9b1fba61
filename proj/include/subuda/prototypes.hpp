#pragma once

#include "subuda/types.hpp"

namespace subuda {

// Per-class feature centroids for one domain. Row n is meaningful only when
// counts(n) > 0; a class is absent exactly when its count is zero.
struct ClassCentroids {
  Matrix centroids;  // num_classes x dim
  IntVector counts;

  Index num_classes() const { return counts.size(); }
  bool present(Index n) const { return counts(n) > 0; }
  Index present_count() const { return (counts.array() > 0).count(); }
};

/// Arithmetic mean of the features of each class; absent classes get a zero
/// row and count 0.
ClassCentroids class_centroids(const Eigen::Ref<const Matrix>& features,
                               const IntVector& labels, Index num_classes);

/// Softmax over negative squared distances to the present centroids
/// (max-shift stabilized). Absent classes receive probability zero.
Vector prototype_probs(const Eigen::Ref<const RowVector>& feature,
                       const ClassCentroids& centroids);

struct CeLossResult {
  double loss = 0.0;
  Matrix grad_queries;    // d loss / d query features
  Matrix grad_centroids;  // d loss / d centroid rows (zero for absent classes)
};

/// Mean over the batch of -log p(label | feature) under the prototype
/// softmax. Gradients are returned for both the query features and the
/// centroids; map the latter back onto contributing features with
/// scatter_centroid_grad.
CeLossResult class_ce_loss(const Eigen::Ref<const Matrix>& queries, const IntVector& labels,
                           const ClassCentroids& centroids);

/// Nearest present centroid by squared distance; ties break to the lowest
/// class index.
IntVector pseudo_label(const Eigen::Ref<const Matrix>& features,
                       const ClassCentroids& source_centroids);

struct MatchLossResult {
  double loss = 0.0;
  Matrix grad_source_centroids;
  Matrix grad_target_centroids;
};

/// Mean squared centroid gap over classes present on both sides; classes with
/// a missing side are skipped, and the loss is zero when no class qualifies.
MatchLossResult class_match_loss(const ClassCentroids& source, const ClassCentroids& target);

/// Chain rule through the centroid means: each feature of class n receives
/// grad_centroids.row(n) / counts(n). Accumulates into grad_features.
void scatter_centroid_grad(const Eigen::Ref<const Matrix>& grad_centroids,
                           const IntVector& labels, const IntVector& counts,
                           Matrix& grad_features);

}  // namespace subuda
