#include "subuda/trainer.hpp"

#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "subuda/error.hpp"
#include "subuda/eval.hpp"
#include "subuda/io_util.hpp"

namespace subuda {

void TrainConfig::validate() const {
  if (alpha < 0.0 || beta < 0.0) throw ValidationError("config: alpha/beta must be >= 0");
  if (lambda < 0.0 || lambda > 1.0) throw ValidationError("config: lambda must be in [0, 1]");
  if (window < 1) throw ValidationError("config: window must be >= 1");
  if (batch_size < 1) throw ValidationError("config: batch_size must be >= 1");
  if (learning_rate <= 0.0) throw ValidationError("config: learning_rate must be > 0");
  if (total_iterations < 0) throw ValidationError("config: total_iterations must be >= 0");
  if (eval_every < 0) throw ValidationError("config: eval_every must be >= 0");
  if (num_classes < 1) throw ValidationError("config: num_classes must be >= 1");
  if (encoder.feature_dim < 1) throw ValidationError("config: feature_dim must be >= 1");
  if (encoder.has_head && encoder.head_hidden < 1)
    throw ValidationError("config: head_hidden must be >= 1 when the head is enabled");
  cluster.validate(num_classes);
}

double total_loss(double ce, double cls, double sub, const TrainConfig& config) {
  return ce + config.alpha * cls + config.beta * sub;
}

TrainState init_train_state(const TrainConfig& config, Index input_dim) {
  config.validate();
  Rng rng(config.seed);
  EncoderParams params =
      config.encoder.has_head
          ? make_encoder_with_head(input_dim, config.encoder.hidden_dims,
                                   config.encoder.head_hidden, config.encoder.feature_dim,
                                   config.encoder.dropout_rate, rng)
          : make_encoder(input_dim, config.encoder.hidden_dims, config.encoder.feature_dim,
                         rng);
  OptimizerState opt = make_optimizer(params, config.learning_rate);
  return TrainState{std::move(params), std::move(opt), FeatureQueue(config.window),
                    CentroidMemory{}, 0,    std::move(rng),
                    {},                {},  {}};
}

namespace {

void refresh_head_norm(TrainState& state, const TrainConfig& config,
                       const ForwardCache& cache) {
  const EncoderParams& p = state.params;
  const Index hl = p.head_layer();
  const Matrix& head_in = hl == 0 ? cache.input : cache.post_act[hl - 1];
  Matrix z = head_in * p.weights[hl];
  z.rowwise() += p.biases[hl];

  state.head_stats.emplace_back(z.colwise().sum(), z.array().square().colwise().sum());
  state.head_stat_counts.push_back(z.rows());
  while (static_cast<Index>(state.head_stats.size()) > config.window) {
    state.head_stats.pop_front();
    state.head_stat_counts.pop_front();
  }

  RowVector sum = RowVector::Zero(z.cols());
  RowVector sumsq = RowVector::Zero(z.cols());
  double count = 0.0;
  for (std::size_t i = 0; i < state.head_stats.size(); ++i) {
    sum += state.head_stats[i].first;
    sumsq += state.head_stats[i].second;
    count += static_cast<double>(state.head_stat_counts[i]);
  }
  RowVector mean = sum / count;
  RowVector var = (sumsq / count - mean.array().square().matrix()).cwiseMax(1e-12);
  state.params.head_norm.mean = std::move(mean);
  state.params.head_norm.stddev = var.array().sqrt();
}

void dump_diagnostics_and_abort(const TrainState& state, const LossReport& report) {
  const std::string path = "subuda_diagnostic_queue.csv";
  write_queue_snapshot_csv(path, state.queue);
  throw StateError("train_iteration: non-finite loss at iteration " +
                   std::to_string(state.iteration + 1) + " (ce=" + fmt_short(report.ce) +
                   ", class=" + fmt_short(report.cls) + ", sub=" + fmt_short(report.sub) +
                   "); queue snapshot written to " + path);
}

}  // namespace

LossReport train_iteration(TrainState& state, const TrainConfig& config,
                           const SourceTrainView& source_pool,
                           const TargetTrainView& target_pool) {
  const Index n_src = source_pool.x.rows();
  const Index n_tgt = target_pool.x.rows();
  if (n_src == 0 || n_tgt == 0)
    throw ValidationError("train_iteration: sample pools must be non-empty");

  const Index B = config.batch_size;
  const long stamp = state.iteration + 1;

  // 1. Sample one batch per domain, uniform with replacement.
  std::vector<Index> src_idx(B), tgt_idx(B);
  for (Index i = 0; i < B; ++i)
    src_idx[i] = static_cast<Index>(state.rng.below(static_cast<std::uint64_t>(n_src)));
  for (Index i = 0; i < B; ++i)
    tgt_idx[i] = static_cast<Index>(state.rng.below(static_cast<std::uint64_t>(n_tgt)));

  Matrix inputs(2 * B, source_pool.x.cols());
  for (Index i = 0; i < B; ++i) inputs.row(i) = source_pool.x.row(src_idx[i]);
  for (Index i = 0; i < B; ++i) inputs.row(B + i) = target_pool.x.row(tgt_idx[i]);

  // 2. Forward pass.
  ForwardCache cache;
  const Matrix features = forward(state.params, inputs, true, state.rng, &cache);

  // 3. Enqueue the batch.
  std::vector<FeatureRecord> records;
  records.reserve(2 * B);
  for (Index i = 0; i < B; ++i)
    records.push_back(FeatureRecord{source_pool.ids[src_idx[i]], Domain::source,
                                    features.row(i), source_pool.labels(src_idx[i]), -1,
                                    stamp});
  for (Index i = 0; i < B; ++i)
    records.push_back(FeatureRecord{target_pool.ids[tgt_idx[i]], Domain::target,
                                    features.row(B + i), -1, -1, stamp});
  state.queue.enqueue_batch(std::move(records));

  // 4. Window centroids, pseudo labels and subtype clusters. Clustering waits
  // out the first `window` iterations so it never runs on a half-filled queue.
  const bool clustering = config.beta > 0.0 && stamp > config.window;
  WindowView w;
  CentroidMemory mem = rebuild_centroids(state.queue, config.num_classes, config.cluster,
                                         config.seed, clustering, w);

  const Index n_src_win = w.src_features.rows();
  const Index n_tgt_win = w.tgt_features.rows();
  std::vector<Index> live_src, live_tgt;
  for (Index i = 0; i < n_src_win; ++i)
    if (w.src_live[i]) live_src.push_back(i);
  for (Index i = 0; i < n_tgt_win; ++i)
    if (w.tgt_live[i]) live_tgt.push_back(i);

  // 5. Loss terms. Current-batch source rows are the CE queries.
  Matrix queries(static_cast<Index>(live_src.size()), w.src_features.cols());
  IntVector query_labels(static_cast<Index>(live_src.size()));
  for (std::size_t i = 0; i < live_src.size(); ++i) {
    queries.row(static_cast<Index>(i)) = w.src_features.row(live_src[i]);
    query_labels(static_cast<Index>(i)) = w.src_labels(live_src[i]);
  }
  const CeLossResult ce = class_ce_loss(queries, query_labels, mem.source);
  const MatchLossResult ml = class_match_loss(mem.source, mem.target);
  SubLossResult sl;
  if (clustering && !mem.clusters.empty()) {
    sl = subtype_compactness_loss(mem.clusters, w.src_features, w.tgt_features,
                                  config.num_classes, config.cluster);
  } else {
    sl.grad_source = Matrix::Zero(n_src_win, w.src_features.cols());
    sl.grad_target = Matrix::Zero(n_tgt_win, w.tgt_features.cols());
  }

  LossReport report;
  report.ce = ce.loss;
  report.cls = ml.loss;
  report.sub = sl.loss;
  report.total = total_loss(report.ce, report.cls, report.sub, config);
  if (!std::isfinite(report.total)) dump_diagnostics_and_abort(state, report);

  // 6. Assemble feature gradients over the window, then keep the live rows
  // only; older batches were produced by stale parameters and stay constant.
  Matrix g_src = Matrix::Zero(n_src_win, w.src_features.cols());
  Matrix g_tgt = Matrix::Zero(n_tgt_win, w.tgt_features.cols());
  Matrix cg_src = ce.grad_centroids + config.alpha * ml.grad_source_centroids;
  scatter_centroid_grad(cg_src, w.src_labels, mem.source.counts, g_src);
  if (n_tgt_win > 0 && mem.target.present_count() > 0) {
    Matrix cg_tgt = config.alpha * ml.grad_target_centroids;
    scatter_centroid_grad(cg_tgt, w.tgt_pseudo, mem.target.counts, g_tgt);
  }
  g_src += config.beta * sl.grad_source;
  g_tgt += config.beta * sl.grad_target;
  for (std::size_t i = 0; i < live_src.size(); ++i)
    g_src.row(live_src[i]) += ce.grad_queries.row(static_cast<Index>(i));

  Matrix grad_features = Matrix::Zero(2 * B, w.src_features.cols());
  for (std::size_t i = 0; i < live_src.size(); ++i)
    grad_features.row(static_cast<Index>(i)) = g_src.row(live_src[i]);
  for (std::size_t i = 0; i < live_tgt.size(); ++i)
    grad_features.row(B + static_cast<Index>(i)) = g_tgt.row(live_tgt[i]);

  // 7. Backward and one optimizer step.
  const EncoderGrad grads = backward(state.params, cache, grad_features);
  opt_step(state.opt, state.params, grads);

  // 8. Re-encode this batch with the updated parameters and momentum-refresh
  // the stored features.
  ForwardCache cache2;
  const Matrix re_encoded = forward(state.params, inputs, true, state.rng, &cache2);
  momentum_refresh(state.queue, re_encoded, config.lambda);
  if (state.params.has_head) refresh_head_norm(state, config, cache2);

  // 9. Update the centroid memory from the refreshed window.
  state.memory = rebuild_centroids(state.queue, config.num_classes, config.cluster,
                                   config.seed, clustering);

  state.iteration = stamp;
  state.loss_history.push_back(report);
  return report;
}

namespace {

double pool_accuracy(const EncoderParams& params, const CentroidMemory& memory,
                     const Matrix& x, const IntVector& labels) {
  Rng scratch(0);  // eval mode draws nothing
  const Matrix f = forward(params, x, false, scratch);
  const IntVector pred =
      classify_test(f, memory, PrototypeVariant::source_target_mean, /*lenient=*/true);
  return accuracy(pred, labels);
}

}  // namespace

RunResult run(const TrainConfig& config, const std::vector<LabeledSample>& source,
              const std::vector<LabeledSample>& target) {
  config.validate();
  if (source.empty() || target.empty())
    throw ValidationError("run: source and target datasets must be non-empty");

  const SourceTrainView src_view = source_view(source);
  const TargetTrainView tgt_view = target_view(target);

  // Ground-truth labels stay on the evaluation side; the training loop above
  // only ever sees the firewalled views.
  IntVector src_truth(static_cast<Index>(source.size()));
  for (std::size_t i = 0; i < source.size(); ++i)
    src_truth(static_cast<Index>(i)) = source[i].class_label;
  IntVector tgt_truth(static_cast<Index>(target.size()));
  for (std::size_t i = 0; i < target.size(); ++i)
    tgt_truth(static_cast<Index>(i)) = target[i].class_label;
  Matrix tgt_x(static_cast<Index>(target.size()), target[0].x.size());
  for (std::size_t i = 0; i < target.size(); ++i)
    tgt_x.row(static_cast<Index>(i)) = target[i].x;

  RunResult result{init_train_state(config, src_view.x.cols()), {}};
  for (long it = 1; it <= config.total_iterations; ++it) {
    const LossReport rep = train_iteration(result.state, config, src_view, tgt_view);
    const bool report_now =
        config.eval_every > 0 &&
        (it % config.eval_every == 0 || it == config.total_iterations);
    if (report_now) {
      MetricsRow row;
      row.iteration = it;
      row.loss_ce = rep.ce;
      row.loss_class = rep.cls;
      row.loss_sub = rep.sub;
      row.loss_total = rep.total;
      row.source_acc =
          pool_accuracy(result.state.params, result.state.memory, src_view.x, src_truth);
      row.target_acc =
          pool_accuracy(result.state.params, result.state.memory, tgt_x, tgt_truth);
      result.metrics.push_back(row);
    }
  }
  return result;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  auto out = open_out(path);
  out << "iteration,loss_ce,loss_class,loss_sub,loss_total,target_acc,source_acc\n";
  for (const auto& r : rows) {
    out << r.iteration << ',' << fmt_short(r.loss_ce) << ',' << fmt_short(r.loss_class)
        << ',' << fmt_short(r.loss_sub) << ',' << fmt_short(r.loss_total) << ','
        << fmt_short(r.target_acc) << ',' << fmt_short(r.source_acc) << "\n";
  }
}

void write_queue_snapshot_csv(const std::string& path, const FeatureQueue& queue) {
  auto out = open_out(path);
  Index dim = 0;
  for (Index s = 0; s < queue.size(); ++s)
    if (!queue.slot(s).records.empty()) dim = queue.slot(s).records.front().feature.size();
  out << "id,domain,class,pseudo";
  for (Index j = 0; j < dim; ++j) out << ",f" << j;
  out << "\n";
  for (Index s = 0; s < queue.size(); ++s) {
    for (const auto& r : queue.slot(s).records) {
      out << r.sample_id << ',' << domain_name(r.domain) << ',' << r.class_label << ','
          << r.pseudo_class;
      for (Index j = 0; j < r.feature.size(); ++j) out << ',' << fmt_full(r.feature(j));
      out << "\n";
    }
  }
}

// ---------------------------------------------------------------------------
// Config serialization
// ---------------------------------------------------------------------------

namespace {

const char* cluster_mode_name(ClusterMode m) {
  return m == ClusterMode::kmeans ? "kmeans" : "subgraph";
}

ClusterMode cluster_mode_from(const std::string& s) {
  if (s == "kmeans") return ClusterMode::kmeans;
  if (s == "subgraph") return ClusterMode::subgraph;
  throw ValidationError("config: unknown cluster mode '" + s + "'");
}

}  // namespace

void write_config_json(const std::string& path, const TrainConfig& c) {
  nlohmann::json j;
  j["format"] = "subuda-train-config";
  j["version"] = 1;
  j["alpha"] = c.alpha;
  j["beta"] = c.beta;
  j["lambda"] = c.lambda;
  j["window"] = c.window;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["total_iterations"] = c.total_iterations;
  j["seed"] = c.seed;
  j["eval_every"] = c.eval_every;
  j["num_classes"] = c.num_classes;
  j["cluster"]["mode"] = cluster_mode_name(c.cluster.mode);
  j["cluster"]["k_per_class"] = c.cluster.k_per_class;
  j["cluster"]["eps"] = c.cluster.eps;
  j["cluster"]["tau"] = c.cluster.tau;
  j["cluster"]["min_size"] = c.cluster.min_size;
  j["cluster"]["kmeans_max_iters"] = c.cluster.kmeans_max_iters;
  j["cluster"]["kmeans_restarts"] = c.cluster.kmeans_restarts;
  j["cluster"]["mining_enabled"] = c.cluster.mining_enabled;
  j["cluster"]["pooled_mean_centroid"] = c.cluster.pooled_mean_centroid;
  j["cluster"]["use_weights"] = c.cluster.use_weights;
  j["encoder"]["hidden_dims"] = c.encoder.hidden_dims;
  j["encoder"]["feature_dim"] = c.encoder.feature_dim;
  j["encoder"]["has_head"] = c.encoder.has_head;
  j["encoder"]["head_hidden"] = c.encoder.head_hidden;
  j["encoder"]["dropout_rate"] = c.encoder.dropout_rate;
  auto out = open_out(path);
  out << j.dump(2) << "\n";
}

TrainConfig read_config_json(const std::string& path) {
  auto in = open_in(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config json: parse failure in " + path + ": " + e.what());
  }
  TrainConfig c;
  try {
    c.alpha = j.at("alpha").get<double>();
    c.beta = j.at("beta").get<double>();
    c.lambda = j.at("lambda").get<double>();
    c.window = j.at("window").get<Index>();
    c.batch_size = j.at("batch_size").get<Index>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.total_iterations = j.at("total_iterations").get<long>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.eval_every = j.at("eval_every").get<long>();
    c.num_classes = j.at("num_classes").get<Index>();
    const auto& cl = j.at("cluster");
    c.cluster.mode = cluster_mode_from(cl.at("mode").get<std::string>());
    c.cluster.k_per_class = cl.at("k_per_class").get<std::vector<Index>>();
    c.cluster.eps = cl.at("eps").get<double>();
    c.cluster.tau = cl.at("tau").get<double>();
    c.cluster.min_size = cl.at("min_size").get<int>();
    c.cluster.kmeans_max_iters = cl.at("kmeans_max_iters").get<int>();
    c.cluster.kmeans_restarts = cl.at("kmeans_restarts").get<int>();
    c.cluster.mining_enabled = cl.at("mining_enabled").get<bool>();
    c.cluster.pooled_mean_centroid = cl.at("pooled_mean_centroid").get<bool>();
    c.cluster.use_weights = cl.at("use_weights").get<bool>();
    const auto& enc = j.at("encoder");
    c.encoder.hidden_dims = enc.at("hidden_dims").get<std::vector<Index>>();
    c.encoder.feature_dim = enc.at("feature_dim").get<Index>();
    c.encoder.has_head = enc.at("has_head").get<bool>();
    c.encoder.head_hidden = enc.at("head_hidden").get<Index>();
    c.encoder.dropout_rate = enc.at("dropout_rate").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config json: missing or malformed field in " + path + ": " +
                          e.what());
  }
  c.validate();
  return c;
}

}  // namespace subuda
