#pragma once

#include <deque>
#include <string>
#include <vector>

#include "subuda/adam.hpp"
#include "subuda/clustering.hpp"
#include "subuda/encoder.hpp"
#include "subuda/memory.hpp"
#include "subuda/queue.hpp"
#include "subuda/synth.hpp"

namespace subuda {

struct EncoderArch {
  std::vector<Index> hidden_dims = {64};
  Index feature_dim = 32;
  bool has_head = false;
  Index head_hidden = 0;
  double dropout_rate = 0.5;
};

struct TrainConfig {
  double alpha = 1.0;
  double beta = 1.0;
  double lambda = 0.5;   // momentum refresh weight
  Index window = 5;      // queue capacity in batches
  Index batch_size = 64; // per domain
  ClusterConfig cluster;
  double learning_rate = 1e-3;
  long total_iterations = 2000;
  std::uint64_t seed = 1;
  long eval_every = 100;
  EncoderArch encoder;
  Index num_classes = 3;

  void validate() const;
};

TrainConfig read_config_json(const std::string& path);
void write_config_json(const std::string& path, const TrainConfig& config);

struct LossReport {
  double ce = 0.0;
  double cls = 0.0;  // class matching term
  double sub = 0.0;  // subtype compactness term
  double total = 0.0;
};

/// Eq.-style composition of the loss terms: ce + alpha * cls + beta * sub.
/// The sub term already carries the within-class omega / K_n averaging.
double total_loss(double ce, double cls, double sub, const TrainConfig& config);

struct TrainState {
  EncoderParams params;
  OptimizerState opt;
  FeatureQueue queue;
  CentroidMemory memory;
  long iteration = 0;
  Rng rng;
  std::vector<LossReport> loss_history;
  // Per-batch first/second moments of the head's pre-standardize activations,
  // kept over the window to refresh HeadNorm.
  std::deque<std::pair<RowVector, RowVector>> head_stats;
  std::deque<Index> head_stat_counts;
};

TrainState init_train_state(const TrainConfig& config, Index input_dim);

/// One pass of the dynamic training loop: sample batches, encode, enqueue,
/// rebuild window centroids and subtype clusters, evaluate the three loss
/// terms, take one optimizer step, re-encode the batch and momentum-refresh
/// the queue, then rebuild the centroid memory. Gradients reach only the
/// current batch's features; older window rows act as constants.
LossReport train_iteration(TrainState& state, const TrainConfig& config,
                           const SourceTrainView& source_pool,
                           const TargetTrainView& target_pool);

struct MetricsRow {
  long iteration = 0;
  double loss_ce = 0.0, loss_class = 0.0, loss_sub = 0.0, loss_total = 0.0;
  double target_acc = 0.0, source_acc = 0.0;
};

struct RunResult {
  TrainState state;
  std::vector<MetricsRow> metrics;
};

/// Full training run over generated samples; deterministic given the config
/// seed. Metrics are appended every eval_every iterations (and at the end).
RunResult run(const TrainConfig& config, const std::vector<LabeledSample>& source,
              const std::vector<LabeledSample>& target);

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

/// Queue snapshot in the feature-export schema (debug aid).
void write_queue_snapshot_csv(const std::string& path, const FeatureQueue& queue);

}  // namespace subuda
