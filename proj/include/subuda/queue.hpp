#pragma once

#include <deque>
#include <optional>
#include <vector>

#include "subuda/synth.hpp"
#include "subuda/types.hpp"

namespace subuda {

struct FeatureRecord {
  long sample_id = -1;
  Domain domain = Domain::source;
  RowVector feature;      // current value, possibly momentum-refreshed
  int class_label = -1;   // source ground truth; -1 for targets
  int pseudo_class = -1;  // target pseudo label, refreshed on every rebuild
  long iteration_stamp = 0;
};

struct BatchSlot {
  long stamp = 0;
  std::vector<FeatureRecord> records;
};

// FIFO window over the last `capacity` batches of features. Enqueueing past
// capacity evicts the oldest slot; slots stay ordered by stamp.
class FeatureQueue {
 public:
  explicit FeatureQueue(Index capacity);

  /// Appends one batch (all records must share a stamp newer than the current
  /// newest). Returns the evicted slot, if any, for diagnostics.
  std::optional<BatchSlot> enqueue_batch(std::vector<FeatureRecord> records);

  Index capacity() const { return capacity_; }
  Index size() const { return static_cast<Index>(slots_.size()); }
  bool empty() const { return slots_.empty(); }
  const BatchSlot& slot(Index i) const { return slots_[i]; }  // oldest first
  BatchSlot& slot_mut(Index i) { return slots_[i]; }
  BatchSlot& newest_slot();
  long newest_stamp() const;

  /// Total feature scalars currently stored (for the storage-bound check).
  Index stored_feature_scalars() const;

 private:
  Index capacity_;
  std::deque<BatchSlot> slots_;
};

/// f'' = lambda * f_new + (1 - lambda) * f_old, elementwise.
Matrix blend_features(const Eigen::Ref<const Matrix>& f_old,
                      const Eigen::Ref<const Matrix>& f_new, double lambda);

/// Momentum refresh of the newest slot: row i of new_features corresponds to
/// the slot's i-th record; each stored feature becomes the blend of its old
/// value and the re-encoded one. Only the current batch is touched.
void momentum_refresh(FeatureQueue& queue, const Eigen::Ref<const Matrix>& new_features,
                      double lambda);

}  // namespace subuda
