#pragma once

#include <vector>

#include "subuda/rng.hpp"
#include "subuda/types.hpp"

namespace subuda {

enum class ClusterMode { kmeans, subgraph };

struct ClusterConfig {
  ClusterMode mode = ClusterMode::kmeans;
  std::vector<Index> k_per_class;  // kmeans mode; entries >= 1
  double eps = 1.0;                // reliability-path squared-distance threshold
  double tau = 1.0;                // semi-hard mining squared-distance margin
  int min_size = 1;                // sub-graphs need strictly more than min_size nodes
  int kmeans_max_iters = 100;
  int kmeans_restarts = 5;
  // Ablation switches.
  bool mining_enabled = true;        // off: accept every assigned target
  bool pooled_mean_centroid = false; // on: mu_st pools all members instead of (mu_s+mu_t)/2
  bool use_weights = true;           // off: every cluster weight is 1

  void validate(Index num_classes) const;  // throws ValidationError
};

// One discovered subtype: source members found by clustering, target members
// mined by assignment + semi-hard filtering. Row indices point into the
// window feature matrices the cluster was built from; ids are sample ids.
struct SubtypeCluster {
  int class_id = -1;
  std::vector<long> source_member_ids;
  std::vector<long> target_member_ids;
  std::vector<Index> source_rows;
  std::vector<Index> target_rows;
  RowVector mu_s;
  RowVector mu_t;   // meaningful only when m_t() > 0
  RowVector mu_st;  // (mu_s + mu_t)/2, or mu_s when no target members
  double weight = 1.0;

  Index m_s() const { return static_cast<Index>(source_rows.size()); }
  Index m_t() const { return static_cast<Index>(target_rows.size()); }
};

struct KMeansResult {
  IntVector assignments;
  Matrix centroids;
  double objective = 0.0;
};

/// Lloyd iterations from k-means++ seeding, run `restarts` times, keeping the
/// lowest objective. Empty clusters are re-seeded to the point farthest from
/// its current centroid. Deterministic given the generator state.
KMeansResult kmeans(const Eigen::Ref<const Matrix>& points, Index k, Rng& rng,
                    int max_iters = 100, int restarts = 5);

/// Connected components of the graph joining points at squared distance <=
/// eps. Components are ordered by their smallest member index; members are
/// sorted.
std::vector<std::vector<Index>> connected_components(const Eigen::Ref<const Matrix>& points,
                                                     double eps);

/// Components with strictly more than min_size nodes (the valid sub-graphs);
/// remaining points stay unclustered.
std::vector<std::vector<Index>> build_subgraphs(const Eigen::Ref<const Matrix>& points,
                                                double eps, int min_size);

/// Nearest subtype centroid by squared distance, ties to the lowest index.
IntVector assign_target_subtypes(const Eigen::Ref<const Matrix>& target_features,
                                 const Eigen::Ref<const Matrix>& subtype_centroids);

/// Semi-hard mining: accept assigned targets within tau (squared) of mu_s,
/// then grow along reliability-paths (squared distance <= eps to an already
/// accepted target). Returns accepted indices, sorted.
std::vector<Index> semi_hard_filter(const Eigen::Ref<const Matrix>& target_features,
                                    const std::vector<Index>& assigned,
                                    const Eigen::Ref<const RowVector>& mu_s, double tau,
                                    double eps);

/// Fills mu_t / mu_st and the cluster weights. Weights are 1/sqrt(M_s + M_t),
/// normalized to mean 1 within each class (or identically 1 when use_weights
/// is off).
void finalize_clusters(std::vector<SubtypeCluster>& clusters,
                       const Eigen::Ref<const Matrix>& source_features,
                       const Eigen::Ref<const Matrix>& target_features,
                       const ClusterConfig& config);

struct SubLossResult {
  double loss = 0.0;
  Matrix grad_source;  // d loss / d window source features
  Matrix grad_target;
  Index classes_counted = 0;
};

/// Subtype compactness: per cluster, mean squared distance of source members
/// to mu_st plus the same for mined target members (omitted when there are
/// none), scaled by the cluster weight; averaged over each class's clusters
/// and then over classes that have at least one cluster. Gradients flow
/// through members and through mu_st back into the member features.
SubLossResult subtype_compactness_loss(const std::vector<SubtypeCluster>& clusters,
                                       const Eigen::Ref<const Matrix>& source_features,
                                       const Eigen::Ref<const Matrix>& target_features,
                                       Index num_classes, const ClusterConfig& config);

}  // namespace subuda
