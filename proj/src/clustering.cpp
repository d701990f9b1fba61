#include "subuda/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>

#include "subuda/error.hpp"

namespace subuda {

void ClusterConfig::validate(Index num_classes) const {
  if (eps <= 0.0) throw ValidationError("cluster config: eps must be > 0");
  if (tau <= 0.0) throw ValidationError("cluster config: tau must be > 0");
  if (min_size < 1) throw ValidationError("cluster config: min_size must be >= 1");
  if (kmeans_max_iters < 1 || kmeans_restarts < 1)
    throw ValidationError("cluster config: kmeans iteration controls must be >= 1");
  if (mode == ClusterMode::kmeans) {
    if (static_cast<Index>(k_per_class.size()) != num_classes)
      throw ValidationError("cluster config: k_per_class must have one entry per class");
    for (Index k : k_per_class)
      if (k < 1) throw ValidationError("cluster config: k_per_class entries must be >= 1");
  }
}

// ---------------------------------------------------------------------------
// K-means
// ---------------------------------------------------------------------------

namespace {

IntVector assign_points(const Eigen::Ref<const Matrix>& points, const Matrix& centroids,
                        Vector* dist_out = nullptr) {
  IntVector a(points.rows());
  if (dist_out) dist_out->resize(points.rows());
  for (Index i = 0; i < points.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int best_k = 0;
    for (Index k = 0; k < centroids.rows(); ++k) {
      const double d2 = (points.row(i) - centroids.row(k)).squaredNorm();
      if (d2 < best) {
        best = d2;
        best_k = static_cast<int>(k);
      }
    }
    a(i) = best_k;
    if (dist_out) (*dist_out)(i) = best;
  }
  return a;
}

Matrix kmeanspp_seed(const Eigen::Ref<const Matrix>& points, Index k, Rng& rng) {
  const Index n = points.rows();
  Matrix centroids(k, points.cols());
  centroids.row(0) = points.row(static_cast<Index>(rng.below(static_cast<std::uint64_t>(n))));
  Vector d2 = Vector::Zero(n);
  for (Index i = 0; i < n; ++i)
    d2(i) = (points.row(i) - centroids.row(0)).squaredNorm();
  for (Index c = 1; c < k; ++c) {
    const double total = d2.sum();
    Index chosen;
    if (total <= 0.0) {
      chosen = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
    } else {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      chosen = n - 1;
      for (Index i = 0; i < n; ++i) {
        acc += d2(i);
        if (u < acc) {
          chosen = i;
          break;
        }
      }
    }
    centroids.row(c) = points.row(chosen);
    for (Index i = 0; i < n; ++i)
      d2(i) = std::min(d2(i), (points.row(i) - centroids.row(c)).squaredNorm());
  }
  return centroids;
}

void lloyd_to_fixpoint(const Eigen::Ref<const Matrix>& points, Index k, int max_iters,
                       Matrix& centroids, IntVector& assignments) {
  const Index n = points.rows();
  for (int iter = 0; iter < max_iters; ++iter) {
    // Update means.
    Matrix sums = Matrix::Zero(k, points.cols());
    IntVector counts = IntVector::Zero(k);
    for (Index i = 0; i < n; ++i) {
      sums.row(assignments(i)) += points.row(i);
      counts(assignments(i)) += 1;
    }
    for (Index c = 0; c < k; ++c)
      if (counts(c) > 0) centroids.row(c) = sums.row(c) / static_cast<double>(counts(c));

    // Re-seed empty clusters to the point farthest from its own centroid.
    std::vector<char> taken(n, 0);
    for (Index c = 0; c < k; ++c) {
      if (counts(c) > 0) continue;
      double best = -1.0;
      Index pick = -1;
      for (Index i = 0; i < n; ++i) {
        if (taken[i] || counts(assignments(i)) <= 1) continue;
        const double d2 = (points.row(i) - centroids.row(assignments(i))).squaredNorm();
        if (d2 > best) {
          best = d2;
          pick = i;
        }
      }
      if (pick < 0) continue;  // fewer distinct points than clusters
      taken[pick] = 1;
      counts(assignments(pick)) -= 1;
      centroids.row(c) = points.row(pick);
      assignments(pick) = static_cast<int>(c);
      counts(c) = 1;
    }

    IntVector next = assign_points(points, centroids);
    if ((next.array() == assignments.array()).all()) break;
    assignments = next;
  }
}

// Single-point move polish: relocating x from cluster a (size m_a) to b
// changes the objective by m_b/(m_b+1) d(x,c_b)^2 - m_a/(m_a-1) d(x,c_a)^2,
// which can be negative at a Lloyd fixpoint. One sweep applies every
// first-improvement move; returns whether anything moved.
bool hartigan_sweep(const Eigen::Ref<const Matrix>& points, Index k,
                    IntVector& assignments) {
  const Index n = points.rows();
  Matrix sums = Matrix::Zero(k, points.cols());
  Vector counts = Vector::Zero(k);
  for (Index i = 0; i < n; ++i) {
    sums.row(assignments(i)) += points.row(i);
    counts(assignments(i)) += 1.0;
  }
  bool moved = false;
  for (Index i = 0; i < n; ++i) {
    const Index a = assignments(i);
    if (counts(a) <= 1.0) continue;  // never empty a cluster
    const RowVector ca = sums.row(a) / counts(a);
    const double removal_gain =
        counts(a) / (counts(a) - 1.0) * (points.row(i) - ca).squaredNorm();
    double best_delta = -1e-12;
    Index best_b = -1;
    for (Index b = 0; b < k; ++b) {
      if (b == a) continue;
      const RowVector cb = sums.row(b) / counts(b);
      const double insertion_cost =
          counts(b) / (counts(b) + 1.0) * (points.row(i) - cb).squaredNorm();
      const double delta = insertion_cost - removal_gain;
      if (delta < best_delta) {
        best_delta = delta;
        best_b = b;
      }
    }
    if (best_b >= 0) {
      sums.row(a) -= points.row(i);
      counts(a) -= 1.0;
      sums.row(best_b) += points.row(i);
      counts(best_b) += 1.0;
      assignments(i) = static_cast<int>(best_b);
      moved = true;
    }
  }
  return moved;
}

KMeansResult lloyd_once(const Eigen::Ref<const Matrix>& points, Index k, Rng& rng,
                        int max_iters) {
  Matrix centroids = kmeanspp_seed(points, k, rng);
  IntVector assignments = assign_points(points, centroids);
  // Alternate Lloyd with the single-point polish until neither improves; both
  // phases strictly decrease the objective, so this terminates.
  for (int round = 0; round < max_iters; ++round) {
    lloyd_to_fixpoint(points, k, max_iters, centroids, assignments);
    if (!hartigan_sweep(points, k, assignments)) break;
  }
  Vector dist;
  // Means of the final assignment, then the objective under them.
  Matrix sums = Matrix::Zero(k, points.cols());
  IntVector counts = IntVector::Zero(k);
  for (Index i = 0; i < points.rows(); ++i) {
    sums.row(assignments(i)) += points.row(i);
    counts(assignments(i)) += 1;
  }
  for (Index c = 0; c < k; ++c)
    if (counts(c) > 0) centroids.row(c) = sums.row(c) / static_cast<double>(counts(c));
  assignments = assign_points(points, centroids, &dist);
  return {assignments, centroids, dist.sum()};
}

}  // namespace

KMeansResult kmeans(const Eigen::Ref<const Matrix>& points, Index k, Rng& rng,
                    int max_iters, int restarts) {
  if (k < 1) throw ValidationError("kmeans: k must be >= 1");
  if (k > points.rows())
    throw ValidationError("kmeans: k = " + std::to_string(k) + " exceeds " +
                          std::to_string(points.rows()) + " points");
  KMeansResult best;
  best.objective = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    KMeansResult cur = lloyd_once(points, k, rng, max_iters);
    if (cur.objective < best.objective) best = std::move(cur);
  }
  return best;
}

// ---------------------------------------------------------------------------
// Reliability-path sub-graphs
// ---------------------------------------------------------------------------

namespace {

struct UnionFind {
  std::vector<Index> parent;
  explicit UnionFind(Index n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  Index find(Index x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(Index a, Index b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a > b) std::swap(a, b);
    parent[b] = a;  // smaller index becomes the root
  }
};

}  // namespace

std::vector<std::vector<Index>> connected_components(const Eigen::Ref<const Matrix>& points,
                                                     double eps) {
  const Index n = points.rows();
  UnionFind uf(n);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      if ((points.row(i) - points.row(j)).squaredNorm() <= eps) uf.unite(i, j);

  std::map<Index, std::vector<Index>> by_root;
  for (Index i = 0; i < n; ++i) by_root[uf.find(i)].push_back(i);
  std::vector<std::vector<Index>> components;
  components.reserve(by_root.size());
  for (auto& [root, members] : by_root) components.push_back(std::move(members));
  return components;
}

std::vector<std::vector<Index>> build_subgraphs(const Eigen::Ref<const Matrix>& points,
                                                double eps, int min_size) {
  std::vector<std::vector<Index>> valid;
  for (auto& comp : connected_components(points, eps))
    if (static_cast<int>(comp.size()) > min_size) valid.push_back(std::move(comp));
  return valid;
}

// ---------------------------------------------------------------------------
// Target assignment and mining
// ---------------------------------------------------------------------------

IntVector assign_target_subtypes(const Eigen::Ref<const Matrix>& target_features,
                                 const Eigen::Ref<const Matrix>& subtype_centroids) {
  if (subtype_centroids.rows() == 0)
    throw StateError("assign_target_subtypes: no subtype centroids");
  return assign_points(target_features, subtype_centroids);
}

std::vector<Index> semi_hard_filter(const Eigen::Ref<const Matrix>& target_features,
                                    const std::vector<Index>& assigned,
                                    const Eigen::Ref<const RowVector>& mu_s, double tau,
                                    double eps) {
  std::vector<Index> accepted;
  std::vector<Index> pending;
  for (Index i : assigned) {
    if ((target_features.row(i) - mu_s).squaredNorm() <= tau)
      accepted.push_back(i);
    else
      pending.push_back(i);
  }
  // Reliability-path closure: pull in pending targets within eps of any
  // accepted one, repeating until nothing changes.
  std::vector<Index> frontier = accepted;
  while (!frontier.empty() && !pending.empty()) {
    std::vector<Index> next_frontier;
    std::vector<Index> still_pending;
    for (Index cand : pending) {
      bool linked = false;
      for (Index acc : frontier) {
        if ((target_features.row(cand) - target_features.row(acc)).squaredNorm() <= eps) {
          linked = true;
          break;
        }
      }
      if (linked) {
        accepted.push_back(cand);
        next_frontier.push_back(cand);
      } else {
        still_pending.push_back(cand);
      }
    }
    pending = std::move(still_pending);
    frontier = std::move(next_frontier);
  }
  std::sort(accepted.begin(), accepted.end());
  return accepted;
}

namespace {

RowVector mean_of_rows(const Eigen::Ref<const Matrix>& features,
                       const std::vector<Index>& rows) {
  RowVector m = RowVector::Zero(features.cols());
  for (Index r : rows) m += features.row(r);
  return m / static_cast<double>(rows.size());
}

}  // namespace

void finalize_clusters(std::vector<SubtypeCluster>& clusters,
                       const Eigen::Ref<const Matrix>& source_features,
                       const Eigen::Ref<const Matrix>& target_features,
                       const ClusterConfig& config) {
  for (auto& c : clusters) {
    if (c.source_rows.empty())
      throw UsageError("finalize_clusters: cluster without source members");
    c.mu_s = mean_of_rows(source_features, c.source_rows);
    if (!c.target_rows.empty()) {
      c.mu_t = mean_of_rows(target_features, c.target_rows);
      if (config.pooled_mean_centroid) {
        RowVector sum = c.mu_s * static_cast<double>(c.m_s()) +
                        c.mu_t * static_cast<double>(c.m_t());
        c.mu_st = sum / static_cast<double>(c.m_s() + c.m_t());
      } else {
        c.mu_st = 0.5 * (c.mu_s + c.mu_t);
      }
    } else {
      c.mu_t = RowVector();
      c.mu_st = c.mu_s;
    }
  }

  // Raw weight 1/sqrt(M_s + M_t), then normalized to mean 1 within each class
  // so beta keeps a stable scale regardless of how many clusters appear.
  std::map<int, std::vector<SubtypeCluster*>> by_class;
  for (auto& c : clusters) by_class[c.class_id].push_back(&c);
  for (auto& [class_id, group] : by_class) {
    if (!config.use_weights) {
      for (auto* c : group) c->weight = 1.0;
      continue;
    }
    double sum = 0.0;
    for (auto* c : group) {
      c->weight = 1.0 / std::sqrt(static_cast<double>(c->m_s() + c->m_t()));
      sum += c->weight;
    }
    const double mean = sum / static_cast<double>(group.size());
    for (auto* c : group) c->weight /= mean;
  }
}

SubLossResult subtype_compactness_loss(const std::vector<SubtypeCluster>& clusters,
                                       const Eigen::Ref<const Matrix>& source_features,
                                       const Eigen::Ref<const Matrix>& target_features,
                                       Index num_classes, const ClusterConfig& config) {
  SubLossResult r;
  r.grad_source = Matrix::Zero(source_features.rows(), source_features.cols());
  r.grad_target = Matrix::Zero(target_features.rows(), target_features.cols());
  if (clusters.empty()) return r;

  std::map<int, std::vector<const SubtypeCluster*>> by_class;
  for (const auto& c : clusters) {
    if (c.class_id < 0 || c.class_id >= num_classes)
      throw ValidationError("subtype_compactness_loss: cluster class out of range");
    by_class[c.class_id].push_back(&c);
  }
  r.classes_counted = static_cast<Index>(by_class.size());
  const double inv_classes = 1.0 / static_cast<double>(r.classes_counted);

  for (const auto& [class_id, group] : by_class) {
    const double inv_k = 1.0 / static_cast<double>(group.size());
    for (const auto* c : group) {
      const double ms = static_cast<double>(c->m_s());
      const double mt = static_cast<double>(c->m_t());
      // Recompute the means so gradients flow through mu_st.
      const RowVector mu_s = mean_of_rows(source_features, c->source_rows);
      RowVector mu_st;
      if (c->m_t() > 0) {
        const RowVector mu_t = mean_of_rows(target_features, c->target_rows);
        mu_st = config.pooled_mean_centroid
                    ? RowVector(((mu_s * ms + mu_t * mt) / (ms + mt)))
                    : RowVector(0.5 * (mu_s + mu_t));
      } else {
        mu_st = mu_s;
      }

      const double scale = c->weight * inv_k * inv_classes;
      double cluster_loss = 0.0;
      RowVector grad_mu = RowVector::Zero(source_features.cols());
      for (Index row : c->source_rows) {
        const RowVector diff = source_features.row(row) - mu_st;
        cluster_loss += diff.squaredNorm() / ms;
        r.grad_source.row(row) += scale * (2.0 / ms) * diff;
        grad_mu -= (2.0 / ms) * diff;
      }
      for (Index row : c->target_rows) {
        const RowVector diff = target_features.row(row) - mu_st;
        cluster_loss += diff.squaredNorm() / mt;
        r.grad_target.row(row) += scale * (2.0 / mt) * diff;
        grad_mu -= (2.0 / mt) * diff;
      }

      // Chain mu_st back to member features.
      if (c->m_t() > 0) {
        if (config.pooled_mean_centroid) {
          const RowVector per_member = grad_mu / (ms + mt);
          for (Index row : c->source_rows) r.grad_source.row(row) += scale * per_member;
          for (Index row : c->target_rows) r.grad_target.row(row) += scale * per_member;
        } else {
          for (Index row : c->source_rows)
            r.grad_source.row(row) += scale * 0.5 / ms * grad_mu;
          for (Index row : c->target_rows)
            r.grad_target.row(row) += scale * 0.5 / mt * grad_mu;
        }
      } else {
        for (Index row : c->source_rows) r.grad_source.row(row) += scale * grad_mu / ms;
      }

      r.loss += c->weight * cluster_loss * inv_k * inv_classes;
    }
  }
  return r;
}

}  // namespace subuda
