#include "subuda/queue.hpp"

#include <string>

#include "subuda/error.hpp"

namespace subuda {

FeatureQueue::FeatureQueue(Index capacity) : capacity_(capacity) {
  if (capacity < 1) throw ValidationError("FeatureQueue: capacity must be >= 1");
}

std::optional<BatchSlot> FeatureQueue::enqueue_batch(std::vector<FeatureRecord> records) {
  if (records.empty()) throw UsageError("enqueue_batch: empty batch");
  const long stamp = records.front().iteration_stamp;
  for (const auto& r : records)
    if (r.iteration_stamp != stamp)
      throw UsageError("enqueue_batch: records carry mixed iteration stamps");
  if (!slots_.empty() && stamp <= slots_.back().stamp)
    throw UsageError("enqueue_batch: stamp " + std::to_string(stamp) +
                     " not newer than queue tail");

  std::optional<BatchSlot> evicted;
  if (static_cast<Index>(slots_.size()) == capacity_) {
    evicted = std::move(slots_.front());
    slots_.pop_front();
  }
  slots_.push_back(BatchSlot{stamp, std::move(records)});
  return evicted;
}

BatchSlot& FeatureQueue::newest_slot() {
  if (slots_.empty()) throw StateError("FeatureQueue: empty");
  return slots_.back();
}

long FeatureQueue::newest_stamp() const {
  if (slots_.empty()) throw StateError("FeatureQueue: empty");
  return slots_.back().stamp;
}

Index FeatureQueue::stored_feature_scalars() const {
  Index total = 0;
  for (const auto& s : slots_)
    for (const auto& r : s.records) total += r.feature.size();
  return total;
}

Matrix blend_features(const Eigen::Ref<const Matrix>& f_old,
                      const Eigen::Ref<const Matrix>& f_new, double lambda) {
  if (lambda < 0.0 || lambda > 1.0)
    throw ValidationError("blend_features: lambda must be in [0, 1]");
  if (f_old.rows() != f_new.rows() || f_old.cols() != f_new.cols())
    throw ShapeError("blend_features: shape mismatch");
  return lambda * f_new + (1.0 - lambda) * f_old;
}

void momentum_refresh(FeatureQueue& queue, const Eigen::Ref<const Matrix>& new_features,
                      double lambda) {
  if (lambda < 0.0 || lambda > 1.0)
    throw ValidationError("momentum_refresh: lambda must be in [0, 1]");
  BatchSlot& slot = queue.newest_slot();
  if (new_features.rows() != static_cast<Index>(slot.records.size()))
    throw ShapeError("momentum_refresh: row count does not match the newest batch");
  for (Index i = 0; i < new_features.rows(); ++i) {
    FeatureRecord& rec = slot.records[static_cast<std::size_t>(i)];
    if (rec.feature.size() != new_features.cols())
      throw ShapeError("momentum_refresh: feature width mismatch");
    rec.feature = lambda * new_features.row(i) + (1.0 - lambda) * rec.feature;
  }
}

}  // namespace subuda
