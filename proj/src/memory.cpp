#include "subuda/memory.hpp"

#include <algorithm>

#include "subuda/error.hpp"
#include "subuda/rng.hpp"

namespace subuda {

WindowView gather_window(const FeatureQueue& queue) {
  Index n_src = 0, n_tgt = 0, dim = 0;
  for (Index s = 0; s < queue.size(); ++s) {
    for (const auto& r : queue.slot(s).records) {
      (r.domain == Domain::source ? n_src : n_tgt) += 1;
      dim = r.feature.size();
    }
  }
  WindowView w;
  w.src_features.resize(n_src, dim);
  w.src_labels.resize(n_src);
  w.src_ids.reserve(n_src);
  w.src_live.assign(n_src, 0);
  w.tgt_features.resize(n_tgt, dim);
  w.tgt_pseudo = IntVector::Constant(n_tgt, -1);
  w.tgt_ids.reserve(n_tgt);
  w.tgt_live.assign(n_tgt, 0);

  const long newest = queue.empty() ? -1 : queue.newest_stamp();
  Index is = 0, it = 0;
  for (Index s = 0; s < queue.size(); ++s) {
    for (const auto& r : queue.slot(s).records) {
      const bool live = r.iteration_stamp == newest;
      if (r.domain == Domain::source) {
        w.src_features.row(is) = r.feature;
        w.src_labels(is) = r.class_label;
        w.src_ids.push_back(r.sample_id);
        w.src_live[is] = live;
        ++is;
      } else {
        w.tgt_features.row(it) = r.feature;
        w.tgt_ids.push_back(r.sample_id);
        w.tgt_live[it] = live;
        ++it;
      }
    }
  }
  return w;
}

namespace {

void write_back_pseudo(FeatureQueue& queue, const IntVector& pseudo) {
  Index it = 0;
  for (Index s = 0; s < queue.size(); ++s)
    for (auto& r : queue.slot_mut(s).records)
      if (r.domain == Domain::target) r.pseudo_class = pseudo(it++);
}

std::vector<SubtypeCluster> discover_subtypes(const WindowView& w, Index num_classes,
                                              const ClusterConfig& config, Rng& rng) {
  std::vector<SubtypeCluster> clusters;
  for (Index n = 0; n < num_classes; ++n) {
    std::vector<Index> src_rows;
    for (Index i = 0; i < w.src_labels.size(); ++i)
      if (w.src_labels(i) == n) src_rows.push_back(i);
    if (src_rows.empty()) continue;

    Matrix class_feats(static_cast<Index>(src_rows.size()), w.src_features.cols());
    for (std::size_t i = 0; i < src_rows.size(); ++i)
      class_feats.row(static_cast<Index>(i)) = w.src_features.row(src_rows[i]);

    // Source-side clustering: member lists in window row indices.
    std::vector<std::vector<Index>> member_lists;
    if (config.mode == ClusterMode::kmeans) {
      const Index k = std::min<Index>(config.k_per_class[n], class_feats.rows());
      KMeansResult km =
          kmeans(class_feats, k, rng, config.kmeans_max_iters, config.kmeans_restarts);
      member_lists.assign(k, {});
      for (Index i = 0; i < km.assignments.size(); ++i)
        member_lists[km.assignments(i)].push_back(src_rows[static_cast<std::size_t>(i)]);
      std::erase_if(member_lists, [](const auto& m) { return m.empty(); });
    } else {
      for (const auto& comp : build_subgraphs(class_feats, config.eps, config.min_size)) {
        std::vector<Index> rows;
        rows.reserve(comp.size());
        for (Index local : comp) rows.push_back(src_rows[static_cast<std::size_t>(local)]);
        member_lists.push_back(std::move(rows));
      }
    }
    if (member_lists.empty()) continue;

    std::vector<SubtypeCluster> class_clusters;
    Matrix centroids(static_cast<Index>(member_lists.size()), w.src_features.cols());
    for (std::size_t k = 0; k < member_lists.size(); ++k) {
      SubtypeCluster c;
      c.class_id = static_cast<int>(n);
      c.source_rows = member_lists[k];
      for (Index row : c.source_rows) c.source_member_ids.push_back(w.src_ids[row]);
      RowVector mu = RowVector::Zero(w.src_features.cols());
      for (Index row : c.source_rows) mu += w.src_features.row(row);
      mu /= static_cast<double>(c.source_rows.size());
      centroids.row(static_cast<Index>(k)) = mu;
      c.mu_s = std::move(mu);
      class_clusters.push_back(std::move(c));
    }

    // Assign this class's pseudo-labeled targets to the nearest subtype, then
    // mine them with the semi-hard filter (or accept all when mining is off).
    std::vector<Index> tgt_rows;
    for (Index i = 0; i < w.tgt_pseudo.size(); ++i)
      if (w.tgt_pseudo(i) == n) tgt_rows.push_back(i);
    if (!tgt_rows.empty()) {
      Matrix tgt_feats(static_cast<Index>(tgt_rows.size()), w.tgt_features.cols());
      for (std::size_t i = 0; i < tgt_rows.size(); ++i)
        tgt_feats.row(static_cast<Index>(i)) = w.tgt_features.row(tgt_rows[i]);
      IntVector assigned = assign_target_subtypes(tgt_feats, centroids);
      for (std::size_t k = 0; k < class_clusters.size(); ++k) {
        std::vector<Index> mine;
        for (Index i = 0; i < assigned.size(); ++i)
          if (assigned(i) == static_cast<int>(k)) mine.push_back(i);
        std::vector<Index> kept;
        if (config.mining_enabled) {
          kept = semi_hard_filter(tgt_feats, mine, class_clusters[k].mu_s, config.tau,
                                  config.eps);
        } else {
          kept = std::move(mine);
        }
        for (Index local : kept) {
          const Index row = tgt_rows[static_cast<std::size_t>(local)];
          class_clusters[k].target_rows.push_back(row);
          class_clusters[k].target_member_ids.push_back(w.tgt_ids[row]);
        }
      }
    }
    for (auto& c : class_clusters) clusters.push_back(std::move(c));
  }
  return clusters;
}

}  // namespace

CentroidMemory rebuild_centroids(FeatureQueue& queue, Index num_classes,
                                 const ClusterConfig& config, std::uint64_t seed_base,
                                 bool run_subtype_clustering) {
  WindowView scratch;
  return rebuild_centroids(queue, num_classes, config, seed_base, run_subtype_clustering,
                           scratch);
}

CentroidMemory rebuild_centroids(FeatureQueue& queue, Index num_classes,
                                 const ClusterConfig& config, std::uint64_t seed_base,
                                 bool run_subtype_clustering, WindowView& window_out) {
  if (queue.empty()) throw StateError("rebuild_centroids: empty queue");
  config.validate(num_classes);
  window_out = gather_window(queue);
  if (window_out.src_features.rows() == 0)
    throw StateError("rebuild_centroids: window holds no source records");

  CentroidMemory mem;
  mem.generation = queue.newest_stamp();
  mem.source = class_centroids(window_out.src_features, window_out.src_labels, num_classes);

  if (window_out.tgt_features.rows() > 0) {
    window_out.tgt_pseudo = pseudo_label(window_out.tgt_features, mem.source);
    write_back_pseudo(queue, window_out.tgt_pseudo);
    mem.target = class_centroids(window_out.tgt_features, window_out.tgt_pseudo, num_classes);
  } else {
    mem.target.centroids = Matrix::Zero(num_classes, window_out.src_features.cols());
    mem.target.counts = IntVector::Zero(num_classes);
  }

  if (run_subtype_clustering) {
    // Deterministic per-window stream so rebuilding an unchanged queue gives
    // an identical memory.
    Rng rng(mix_seed(seed_base, static_cast<std::uint64_t>(mem.generation)));
    mem.clusters = discover_subtypes(window_out, num_classes, config, rng);
    finalize_clusters(mem.clusters, window_out.src_features, window_out.tgt_features, config);
  }
  return mem;
}

}  // namespace subuda
