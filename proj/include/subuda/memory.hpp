#pragma once

#include <vector>

#include "subuda/clustering.hpp"
#include "subuda/prototypes.hpp"
#include "subuda/queue.hpp"

namespace subuda {

// Window contents flattened into matrices: source rows first by slot age then
// record order, targets likewise. `live` marks rows of the newest slot (the
// current batch), the only rows gradients may flow into.
struct WindowView {
  Matrix src_features;
  IntVector src_labels;
  std::vector<long> src_ids;
  std::vector<char> src_live;
  Matrix tgt_features;
  IntVector tgt_pseudo;  // filled by rebuild_centroids
  std::vector<long> tgt_ids;
  std::vector<char> tgt_live;
};

WindowView gather_window(const FeatureQueue& queue);

// Cache of the class and subtype centroids over the current window. Always
// recomputable from the queue; never a source of truth on its own.
struct CentroidMemory {
  ClassCentroids source;
  ClassCentroids target;
  std::vector<SubtypeCluster> clusters;
  long generation = 0;  // newest window stamp at rebuild time
};

/// Recomputes class centroids over the window, re-assigns pseudo labels of
/// every window target against the window source centroids (writing them back
/// into the queue records), and re-runs per-class subtype discovery. Requires
/// at least one source record in the window. The clustering generator is
/// derived from (seed_base, newest stamp) so repeated rebuilds of an
/// unchanged queue are identical.
CentroidMemory rebuild_centroids(FeatureQueue& queue, Index num_classes,
                                 const ClusterConfig& config, std::uint64_t seed_base,
                                 bool run_subtype_clustering = true);

/// Same computation plus access to the gathered window (used by the trainer
/// to evaluate losses against the same matrices).
CentroidMemory rebuild_centroids(FeatureQueue& queue, Index num_classes,
                                 const ClusterConfig& config, std::uint64_t seed_base,
                                 bool run_subtype_clustering, WindowView& window_out);

}  // namespace subuda
