#include "subuda/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "subuda/error.hpp"
#include "subuda/io_util.hpp"
#include "subuda/prototypes.hpp"

namespace subuda {

const char* variant_name(PrototypeVariant v) {
  switch (v) {
    case PrototypeVariant::source_target_mean: return "cst";
    case PrototypeVariant::source_only: return "cs";
    case PrototypeVariant::target_only: return "ct";
  }
  return "?";
}

Matrix variant_centroids(const CentroidMemory& memory, PrototypeVariant variant,
                         bool lenient) {
  const Index N = memory.source.num_classes();
  const Index dim = memory.source.centroids.cols();
  Matrix proto(N, dim);
  for (Index n = 0; n < N; ++n) {
    const bool s = memory.source.present(n);
    const bool t = memory.target.present(n);
    switch (variant) {
      case PrototypeVariant::source_only:
        if (s)
          proto.row(n) = memory.source.centroids.row(n);
        else if (lenient && t)
          proto.row(n) = memory.target.centroids.row(n);
        else
          throw StateError("variant_centroids: source centroid absent for class " +
                           std::to_string(n));
        break;
      case PrototypeVariant::target_only:
        if (t)
          proto.row(n) = memory.target.centroids.row(n);
        else if (lenient && s)
          proto.row(n) = memory.source.centroids.row(n);
        else
          throw StateError("variant_centroids: target centroid absent for class " +
                           std::to_string(n));
        break;
      case PrototypeVariant::source_target_mean:
        if (s && t)
          proto.row(n) = 0.5 * (memory.source.centroids.row(n) +
                                memory.target.centroids.row(n));
        else if (lenient && s)
          proto.row(n) = memory.source.centroids.row(n);
        else if (lenient && t)
          proto.row(n) = memory.target.centroids.row(n);
        else
          throw StateError("variant_centroids: centroid pair incomplete for class " +
                           std::to_string(n));
        break;
    }
  }
  return proto;
}

IntVector classify_test(const Eigen::Ref<const Matrix>& features,
                        const CentroidMemory& memory, PrototypeVariant variant,
                        bool lenient) {
  const Matrix proto = variant_centroids(memory, variant, lenient);
  IntVector pred(features.rows());
  for (Index i = 0; i < features.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int best_n = 0;
    for (Index n = 0; n < proto.rows(); ++n) {
      const double d2 = (features.row(i) - proto.row(n)).squaredNorm();
      if (d2 < best) {
        best = d2;
        best_n = static_cast<int>(n);
      }
    }
    pred(i) = best_n;
  }
  return pred;
}

double accuracy(const IntVector& predictions, const IntVector& truth) {
  if (predictions.size() != truth.size())
    throw ShapeError("accuracy: prediction/truth length mismatch");
  if (predictions.size() == 0) throw ValidationError("accuracy: empty inputs");
  return (predictions.array() == truth.array()).cast<double>().mean();
}

// ---------------------------------------------------------------------------
// Proxy A-distance
// ---------------------------------------------------------------------------

namespace {

// Linear logistic probe reusing the encoder machinery: one fc layer with the
// output nonlinearity off, trained full-batch by the shared optimizer.
struct Probe {
  EncoderParams params;
};

Probe train_probe(const Eigen::Ref<const Matrix>& x, const Vector& y, Rng& rng) {
  Probe probe;
  probe.params = make_encoder(x.cols(), {}, 1, rng);
  probe.params.relu_on_output = false;
  OptimizerState opt = make_optimizer(probe.params, 0.05);
  const Index n = x.rows();
  Rng scratch(0);
  for (int iter = 0; iter < 200; ++iter) {
    ForwardCache cache;
    const Matrix z = forward(probe.params, x, false, scratch, &cache);
    Matrix dz(n, 1);
    for (Index i = 0; i < n; ++i) {
      const double p = 1.0 / (1.0 + std::exp(-z(i, 0)));
      dz(i, 0) = (p - y(i)) / static_cast<double>(n);
    }
    EncoderGrad grads = backward(probe.params, cache, dz);
    opt_step(opt, probe.params, grads);
  }
  return probe;
}

Index probe_errors(const Probe& probe, const Eigen::Ref<const Matrix>& x, const Vector& y) {
  Rng scratch(0);
  const Matrix z = forward(probe.params, x, false, scratch);
  Index errors = 0;
  for (Index i = 0; i < x.rows(); ++i) {
    const int pred = z(i, 0) > 0.0 ? 1 : 0;
    if (pred != static_cast<int>(y(i))) ++errors;
  }
  return errors;
}

std::vector<Index> shuffled_indices(Index n, Rng& rng) {
  std::vector<Index> idx(n);
  std::iota(idx.begin(), idx.end(), Index{0});
  for (Index i = n - 1; i > 0; --i) {
    const Index j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(idx[i], idx[j]);
  }
  return idx;
}

}  // namespace

double proxy_a_distance(const Eigen::Ref<const Matrix>& source_features,
                        const Eigen::Ref<const Matrix>& target_features, int folds,
                        Rng& rng) {
  const Index ns = source_features.rows();
  const Index nt = target_features.rows();
  if (ns < 2 || nt < 2)
    throw ValidationError("proxy_a_distance: need at least two samples per domain");
  if (source_features.cols() != target_features.cols())
    throw ShapeError("proxy_a_distance: feature dims differ");
  folds = std::max(2, std::min<int>(folds, static_cast<int>(std::min(ns, nt))));

  // Stratified folds keep both domains represented in every split.
  const std::vector<Index> src_order = shuffled_indices(ns, rng);
  const std::vector<Index> tgt_order = shuffled_indices(nt, rng);

  const Index dim = source_features.cols();
  Index total_errors = 0, total_eval = 0;
  for (int f = 0; f < folds; ++f) {
    std::vector<Index> train_rows, val_rows;  // into the stacked matrix below
    Matrix stacked(ns + nt, dim);
    Vector labels(ns + nt);
    for (Index i = 0; i < ns; ++i) {
      stacked.row(i) = source_features.row(src_order[i]);
      labels(i) = 0.0;
    }
    for (Index i = 0; i < nt; ++i) {
      stacked.row(ns + i) = target_features.row(tgt_order[i]);
      labels(ns + i) = 1.0;
    }
    for (Index i = 0; i < ns; ++i)
      (static_cast<int>(i % folds) == f ? val_rows : train_rows).push_back(i);
    for (Index i = 0; i < nt; ++i)
      (static_cast<int>(i % folds) == f ? val_rows : train_rows).push_back(ns + i);

    Matrix xtr(static_cast<Index>(train_rows.size()), dim);
    Vector ytr(static_cast<Index>(train_rows.size()));
    for (std::size_t i = 0; i < train_rows.size(); ++i) {
      xtr.row(static_cast<Index>(i)) = stacked.row(train_rows[i]);
      ytr(static_cast<Index>(i)) = labels(train_rows[i]);
    }
    // Standardize with training-fold statistics.
    RowVector mean = xtr.colwise().mean();
    RowVector sd = ((xtr.rowwise() - mean).array().square().colwise().mean())
                       .cwiseMax(1e-12)
                       .sqrt();
    xtr = (xtr.rowwise() - mean).array().rowwise() / sd.array();

    Matrix xval(static_cast<Index>(val_rows.size()), dim);
    Vector yval(static_cast<Index>(val_rows.size()));
    for (std::size_t i = 0; i < val_rows.size(); ++i) {
      xval.row(static_cast<Index>(i)) =
          ((stacked.row(val_rows[i]) - mean).array() / sd.array()).matrix();
      yval(static_cast<Index>(i)) = labels(val_rows[i]);
    }

    Rng probe_rng(mix_seed(0x9A0DC5ULL, static_cast<std::uint64_t>(f)));
    const Probe probe = train_probe(xtr, ytr, probe_rng);
    total_errors += probe_errors(probe, xval, yval);
    total_eval += xval.rows();
  }
  const double err = static_cast<double>(total_errors) / static_cast<double>(total_eval);
  return std::clamp(2.0 * (1.0 - 2.0 * err), 0.0, 2.0);
}

// ---------------------------------------------------------------------------
// Consensus clustering
// ---------------------------------------------------------------------------

namespace {

std::uint64_t hash_row(const Eigen::Ref<const Matrix>& features, Index row) {
  // FNV-1a over the row's byte representation; keys subsampling to point
  // values so the analysis does not depend on row order.
  std::uint64_t h = 1469598103934665603ULL;
  for (Index j = 0; j < features.cols(); ++j) {
    const double v = features(row, j);
    const unsigned char* bytes = reinterpret_cast<const unsigned char*>(&v);
    for (std::size_t b = 0; b < sizeof(double); ++b) {
      h ^= bytes[b];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace

std::vector<ConsensusRow> consensus_cdf_auc(const Eigen::Ref<const Matrix>& features,
                                            Index k_min, Index k_max, int resamples,
                                            double subsample_frac, Rng& rng) {
  const Index n = features.rows();
  if (k_min < 1 || k_max < k_min) throw ValidationError("consensus: bad K range");
  if (subsample_frac <= 0.0 || subsample_frac > 1.0)
    throw ValidationError("consensus: subsample_frac must be in (0, 1]");
  if (resamples < 1) throw ValidationError("consensus: resamples must be >= 1");
  const Index m = std::max<Index>(1, static_cast<Index>(std::ceil(subsample_frac *
                                                                  static_cast<double>(n))));
  if (k_max > m)
    throw ValidationError("consensus: K range exceeds the subsample size");

  std::vector<std::uint64_t> row_hash(n);
  for (Index i = 0; i < n; ++i) row_hash[i] = hash_row(features, i);
  const std::uint64_t base = rng.next_u64();

  std::vector<ConsensusRow> rows;
  for (Index K = k_min; K <= k_max; ++K) {
    Matrix co = Matrix::Zero(n, n);
    Matrix counted = Matrix::Zero(n, n);
    for (int r = 0; r < resamples; ++r) {
      const std::uint64_t resample_seed =
          mix_seed(base, static_cast<std::uint64_t>(K) * 100003ULL +
                             static_cast<std::uint64_t>(r));
      // Rank points by a per-resample value hash and keep the top m.
      std::vector<std::pair<std::uint64_t, Index>> ranked(n);
      for (Index i = 0; i < n; ++i)
        ranked[i] = {mix_seed(resample_seed, row_hash[i]), i};
      std::sort(ranked.begin(), ranked.end());
      std::vector<Index> sub(m);
      for (Index i = 0; i < m; ++i) sub[i] = ranked[i].second;

      Matrix sub_feats(m, features.cols());
      for (Index i = 0; i < m; ++i) sub_feats.row(i) = features.row(sub[i]);
      Rng km_rng(mix_seed(resample_seed, 0xC1A5ULL));
      // Single k-means run per resample: disagreement between resamples at
      // the wrong K is exactly the signal consensus looks for.
      const KMeansResult km = kmeans(sub_feats, K, km_rng, 100, 1);
      for (Index a = 0; a < m; ++a) {
        for (Index b = a + 1; b < m; ++b) {
          const Index i = std::min(sub[a], sub[b]);
          const Index j = std::max(sub[a], sub[b]);
          counted(i, j) += 1.0;
          if (km.assignments(a) == km.assignments(b)) co(i, j) += 1.0;
        }
      }
    }

    double sum_entry = 0.0, sum_ambiguity = 0.0;
    long entries = 0;
    for (Index i = 0; i < n; ++i) {
      for (Index j = i + 1; j < n; ++j) {
        if (counted(i, j) <= 0.0) continue;
        const double e = co(i, j) / counted(i, j);
        sum_entry += e;
        sum_ambiguity += std::min(e, 1.0 - e);
        ++entries;
      }
    }
    ConsensusRow row;
    row.k = K;
    if (entries > 0) {
      row.auc = 1.0 - sum_entry / static_cast<double>(entries);
      row.delta_auc =
          K == 1 ? 0.0 : 1.0 - 2.0 * (sum_ambiguity / static_cast<double>(entries));
    }
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Report assembly
// ---------------------------------------------------------------------------

EvalReport evaluate(const EncoderParams& params, const CentroidMemory& memory,
                    const std::vector<LabeledSample>& source,
                    const std::vector<LabeledSample>& target, std::uint64_t seed,
                    bool with_consensus) {
  if (target.empty()) throw ValidationError("evaluate: target set is empty");
  Rng scratch(0);

  const SourceTrainView sv = source_view(source);
  const TargetTrainView tv = target_view(target);
  const Matrix fs = source.empty() ? Matrix() : forward(params, sv.x, false, scratch);
  const Matrix ft = forward(params, tv.x, false, scratch);
  IntVector truth(static_cast<Index>(target.size()));
  for (std::size_t i = 0; i < target.size(); ++i)
    truth(static_cast<Index>(i)) = target[i].class_label;

  EvalReport rep;
  const IntVector pred_st =
      classify_test(ft, memory, PrototypeVariant::source_target_mean);
  rep.accuracy_st = accuracy(pred_st, truth);
  rep.accuracy_s = accuracy(classify_test(ft, memory, PrototypeVariant::source_only), truth);
  rep.accuracy_t = accuracy(classify_test(ft, memory, PrototypeVariant::target_only), truth);

  const Index N = memory.source.num_classes();
  rep.per_class_accuracy.assign(N, 0.0);
  std::vector<long> per_class_total(N, 0), per_class_hit(N, 0);
  for (Index i = 0; i < truth.size(); ++i) {
    if (truth(i) < 0 || truth(i) >= N) continue;
    per_class_total[truth(i)] += 1;
    if (pred_st(i) == truth(i)) per_class_hit[truth(i)] += 1;
  }
  for (Index n = 0; n < N; ++n)
    if (per_class_total[n] > 0)
      rep.per_class_accuracy[n] =
          static_cast<double>(per_class_hit[n]) / static_cast<double>(per_class_total[n]);

  if (!source.empty()) {
    Rng probe_rng(mix_seed(seed, 0xADULL));
    rep.proxy_a = proxy_a_distance(fs, ft, 5, probe_rng);
  }

  for (Index n = 0; n < N; ++n) {
    PerClassDiagnostics diag;
    diag.class_id = static_cast<int>(n);
    for (const auto& c : memory.clusters)
      if (c.class_id == static_cast<int>(n)) ++diag.cluster_count;
    if (with_consensus) {
      std::vector<Index> rows;
      for (Index i = 0; i < truth.size() && rows.size() < 600; ++i)
        if (truth(i) == n) rows.push_back(i);
      if (static_cast<Index>(rows.size()) >= 12) {
        Matrix class_feats(static_cast<Index>(rows.size()), ft.cols());
        for (std::size_t i = 0; i < rows.size(); ++i)
          class_feats.row(static_cast<Index>(i)) = ft.row(rows[i]);
        Rng crng(mix_seed(seed, 0xC0C0ULL + static_cast<std::uint64_t>(n)));
        diag.consensus = consensus_cdf_auc(class_feats, 2, 6, 50, 0.8, crng);
      }
    }
    rep.diagnostics.push_back(std::move(diag));
  }
  return rep;
}

std::string eval_report_json(const EvalReport& rep) {
  nlohmann::json j;
  j["accuracy"]["cst"] = rep.accuracy_st;
  j["accuracy"]["cs"] = rep.accuracy_s;
  j["accuracy"]["ct"] = rep.accuracy_t;
  j["proxy_a_distance"] = rep.proxy_a;
  j["per_class_accuracy"] = rep.per_class_accuracy;
  nlohmann::json diags = nlohmann::json::array();
  for (const auto& d : rep.diagnostics) {
    nlohmann::json dj;
    dj["class"] = d.class_id;
    dj["cluster_count"] = d.cluster_count;
    nlohmann::json cons = nlohmann::json::array();
    for (const auto& r : d.consensus)
      cons.push_back({{"K", r.k}, {"auc", r.auc}, {"delta_auc", r.delta_auc}});
    dj["consensus"] = std::move(cons);
    diags.push_back(std::move(dj));
  }
  j["cluster_diagnostics"] = std::move(diags);
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Ablation grid
// ---------------------------------------------------------------------------

std::vector<std::string> ablation_variant_names() {
  return {"full", "no-omega", "pooled-mu", "no-tau", "kn1", "tpn", "source-only"};
}

TrainConfig ablation_variant_config(const std::string& variant, const TrainConfig& base,
                                    const std::vector<Index>& true_k_per_class) {
  TrainConfig c = base;
  if (c.cluster.mode == ClusterMode::kmeans) c.cluster.k_per_class = true_k_per_class;
  if (variant == "full") return c;
  if (variant == "no-omega") {
    c.cluster.use_weights = false;
    return c;
  }
  if (variant == "pooled-mu") {
    c.cluster.pooled_mean_centroid = true;
    return c;
  }
  if (variant == "no-tau") {
    c.cluster.mining_enabled = false;
    return c;
  }
  if (variant == "kn1") {
    c.cluster.mode = ClusterMode::kmeans;
    c.cluster.k_per_class.assign(true_k_per_class.size(), 1);
    return c;
  }
  if (variant == "tpn") {
    c.beta = 0.0;
    return c;
  }
  if (variant == "source-only") {
    c.alpha = 0.0;
    c.beta = 0.0;
    return c;
  }
  throw LookupError("unknown ablation variant: " + variant);
}

std::vector<AblationRow> ablation_suite(const std::string& preset,
                                        const std::vector<std::uint64_t>& seeds,
                                        const TrainConfig& base_config) {
  const DomainShiftSpec spec = scenario_preset(preset);
  std::vector<AblationRow> rows;
  for (const auto& variant : ablation_variant_names()) {
    AblationRow row;
    row.variant = variant;
    for (std::uint64_t seed : seeds) {
      TrainConfig cfg = ablation_variant_config(variant, base_config, spec.subtypes_per_class);
      cfg.seed = seed;
      cfg.num_classes = spec.num_classes;
      auto [train_src, train_tgt] = generate_domain_pair(spec, seed);
      const RunResult res = run(cfg, train_src, train_tgt);

      // Held-out target draw from the same generative spec.
      auto [unused_src, test_tgt] =
          generate_domain_pair(spec, mix_seed(seed, 0x7E57ULL));
      Rng scratch(0);
      const TargetTrainView test_view = target_view(test_tgt);
      const Matrix f = forward(res.state.params, test_view.x, false, scratch);
      IntVector truth(static_cast<Index>(test_tgt.size()));
      for (std::size_t i = 0; i < test_tgt.size(); ++i)
        truth(static_cast<Index>(i)) = test_tgt[i].class_label;
      const IntVector pred = classify_test(f, res.state.memory,
                                           PrototypeVariant::source_target_mean,
                                           /*lenient=*/true);
      row.per_seed_acc.push_back(accuracy(pred, truth));
    }
    const double n = static_cast<double>(row.per_seed_acc.size());
    double mean = 0.0;
    for (double a : row.per_seed_acc) mean += a;
    mean /= n;
    double var = 0.0;
    for (double a : row.per_seed_acc) var += (a - mean) * (a - mean);
    row.mean_acc = mean;
    row.sd_acc = n > 1 ? std::sqrt(var / (n - 1)) : 0.0;
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// CSV / dump writers
// ---------------------------------------------------------------------------

void write_ablation_csv(const std::string& path, const std::string& preset,
                        const std::vector<AblationRow>& rows) {
  auto out = open_out(path);
  out << "preset,variant,seeds,mean_acc,sd_acc,per_seed\n";
  for (const auto& r : rows) {
    out << preset << ',' << r.variant << ',' << r.per_seed_acc.size() << ','
        << fmt_short(r.mean_acc) << ',' << fmt_short(r.sd_acc) << ',';
    for (std::size_t i = 0; i < r.per_seed_acc.size(); ++i) {
      if (i) out << ';';
      out << fmt_short(r.per_seed_acc[i]);
    }
    out << "\n";
  }
}

void write_consensus_csv(const std::string& path, const std::vector<ConsensusRow>& rows) {
  auto out = open_out(path);
  out << "K,auc,delta_auc\n";
  for (const auto& r : rows)
    out << r.k << ',' << fmt_short(r.auc) << ',' << fmt_short(r.delta_auc) << "\n";
}

void write_features_csv(const std::string& path, const EncoderParams& params,
                        const CentroidMemory& memory,
                        const std::vector<LabeledSample>& source,
                        const std::vector<LabeledSample>& target) {
  Rng scratch(0);
  auto out = open_out(path);
  out << "id,domain,class,pseudo";
  for (Index j = 0; j < params.feature_dim(); ++j) out << ",f" << j;
  out << "\n";
  auto emit = [&](const std::vector<LabeledSample>& bucket) {
    if (bucket.empty()) return;
    Matrix x(static_cast<Index>(bucket.size()), bucket[0].x.size());
    for (std::size_t i = 0; i < bucket.size(); ++i)
      x.row(static_cast<Index>(i)) = bucket[i].x;
    const Matrix f = forward(params, x, false, scratch);
    const IntVector pseudo = pseudo_label(f, memory.source);
    for (std::size_t i = 0; i < bucket.size(); ++i) {
      const Index r = static_cast<Index>(i);
      out << bucket[i].id << ',' << domain_name(bucket[i].domain) << ','
          << bucket[i].class_label << ',' << pseudo(r);
      for (Index j = 0; j < f.cols(); ++j) out << ',' << fmt_full(f(r, j));
      out << "\n";
    }
  };
  emit(source);
  emit(target);
}

void write_cluster_dump(const std::string& members_path, const std::string& centroids_path,
                        const CentroidMemory& memory) {
  auto members = open_out(members_path);
  members << "class,subtype,domain,member_id\n";
  int subtype_index = 0;
  int last_class = -1;
  for (const auto& c : memory.clusters) {
    subtype_index = c.class_id == last_class ? subtype_index + 1 : 0;
    last_class = c.class_id;
    for (long id : c.source_member_ids)
      members << c.class_id << ',' << subtype_index << ",source," << id << "\n";
    for (long id : c.target_member_ids)
      members << c.class_id << ',' << subtype_index << ",target," << id << "\n";
  }

  auto cent = open_out(centroids_path);
  const Index dim = memory.clusters.empty() ? 0 : memory.clusters.front().mu_st.size();
  cent << "class,subtype,kind,m_s,m_t,weight";
  for (Index j = 0; j < dim; ++j) cent << ",c" << j;
  cent << "\n";
  subtype_index = 0;
  last_class = -1;
  for (const auto& c : memory.clusters) {
    subtype_index = c.class_id == last_class ? subtype_index + 1 : 0;
    last_class = c.class_id;
    auto emit_row = [&](const char* kind, const RowVector& v) {
      cent << c.class_id << ',' << subtype_index << ',' << kind << ',' << c.m_s() << ','
           << c.m_t() << ',' << fmt_short(c.weight);
      for (Index j = 0; j < v.size(); ++j) cent << ',' << fmt_full(v(j));
      cent << "\n";
    };
    emit_row("mu_s", c.mu_s);
    if (c.m_t() > 0) emit_row("mu_t", c.mu_t);
    emit_row("mu_st", c.mu_st);
  }
}

}  // namespace subuda
