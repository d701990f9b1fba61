#include <doctest.h>

#include <vector>

#include "subuda/error.hpp"
#include "subuda/memory.hpp"
#include "subuda/queue.hpp"

using namespace subuda;

namespace {

std::vector<FeatureRecord> make_batch(long stamp, Index n_src, Index n_tgt, Index dim,
                                      double value, int src_label = 0) {
  std::vector<FeatureRecord> records;
  for (Index i = 0; i < n_src; ++i)
    records.push_back(FeatureRecord{stamp * 1000 + i, Domain::source,
                                    RowVector::Constant(dim, value), src_label, -1, stamp});
  for (Index i = 0; i < n_tgt; ++i)
    records.push_back(FeatureRecord{stamp * 1000 + 500 + i, Domain::target,
                                    RowVector::Constant(dim, value + 0.5), -1, -1, stamp});
  return records;
}

}  // namespace

TEST_CASE("single enqueue fills one slot and evicts nothing") {
  FeatureQueue q(5);
  const auto evicted = q.enqueue_batch(make_batch(1, 2, 2, 3, 0.0));
  CHECK_FALSE(evicted.has_value());
  CHECK(q.size() == 1);
}

TEST_CASE("seven enqueues with capacity five keep stamps 3..7") {
  FeatureQueue q(5);
  std::vector<long> evicted_stamps;
  for (long s = 1; s <= 7; ++s) {
    const auto ev = q.enqueue_batch(make_batch(s, 1, 1, 2, 0.0));
    if (ev) evicted_stamps.push_back(ev->stamp);
  }
  REQUIRE(q.size() == 5);
  for (Index i = 0; i < 5; ++i) CHECK(q.slot(i).stamp == i + 3);
  CHECK(evicted_stamps == std::vector<long>{1, 2});
}

TEST_CASE("capacity one holds only the latest batch") {
  FeatureQueue q(1);
  for (long s = 1; s <= 4; ++s) q.enqueue_batch(make_batch(s, 1, 0, 2, 0.0));
  CHECK(q.size() == 1);
  CHECK(q.newest_stamp() == 4);
}

TEST_CASE("mixed stamps in one batch are rejected") {
  FeatureQueue q(3);
  auto records = make_batch(1, 2, 0, 2, 0.0);
  records[1].iteration_stamp = 2;
  CHECK_THROWS_AS(q.enqueue_batch(std::move(records)), UsageError);
}

TEST_CASE("fifo order is preserved under long random enqueue sequences") {
  Rng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const Index cap = 1 + static_cast<Index>(rng.below(6));
    FeatureQueue q(cap);
    long expected_evictions = 0;
    const long total = 20 + static_cast<long>(rng.below(30));
    for (long s = 1; s <= total; ++s) {
      const auto ev = q.enqueue_batch(make_batch(s, 2, 1, 2, 0.0));
      if (ev) {
        ++expected_evictions;
        CHECK(ev->stamp == s - cap);  // strictly the oldest
      }
      CHECK(q.size() == std::min<Index>(static_cast<Index>(s), cap));
      for (Index i = 1; i < q.size(); ++i) CHECK(q.slot(i - 1).stamp < q.slot(i).stamp);
    }
    CHECK(expected_evictions == std::max<long>(0, total - cap));
  }
}

TEST_CASE("storage stays within capacity x batch x dim") {
  const Index cap = 5, n_src = 4, n_tgt = 4, dim = 6;
  FeatureQueue q(cap);
  for (long s = 1; s <= 12; ++s) {
    q.enqueue_batch(make_batch(s, n_src, n_tgt, dim, 0.0));
    CHECK(q.stored_feature_scalars() <= cap * (n_src + n_tgt) * dim);
  }
  CHECK(q.stored_feature_scalars() == cap * (n_src + n_tgt) * dim);
}

TEST_CASE("momentum blend") {
  Matrix f_old(1, 2), f_new(1, 2);
  f_old << 2, 0;
  f_new << 4, 2;

  SUBCASE("midpoint at lambda one half") {
    const Matrix out = blend_features(f_old, f_new, 0.5);
    CHECK(out(0, 0) == doctest::Approx(3.0));
    CHECK(out(0, 1) == doctest::Approx(1.0));
  }
  SUBCASE("lambda zero keeps the old features exactly") {
    CHECK((blend_features(f_old, f_new, 0.0) - f_old).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("lambda one replaces them exactly") {
    CHECK((blend_features(f_old, f_new, 1.0) - f_new).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("lambda outside the unit interval is rejected") {
    CHECK_THROWS_AS(blend_features(f_old, f_new, -0.1), ValidationError);
    CHECK_THROWS_AS(blend_features(f_old, f_new, 1.1), ValidationError);
  }
  SUBCASE("shape mismatch is rejected") {
    CHECK_THROWS_AS(blend_features(f_old, Matrix::Zero(2, 2), 0.5), ShapeError);
  }
}

TEST_CASE("momentum refresh touches only the newest slot") {
  FeatureQueue q(3);
  q.enqueue_batch(make_batch(1, 1, 1, 2, 1.0));
  q.enqueue_batch(make_batch(2, 1, 1, 2, 2.0));
  Matrix fresh(2, 2);
  fresh << 10, 10, 20, 20;
  momentum_refresh(q, fresh, 0.5);
  CHECK(q.slot(0).records[0].feature(0) == doctest::Approx(1.0));   // untouched
  CHECK(q.slot(1).records[0].feature(0) == doctest::Approx(6.0));   // (2+10)/2
  CHECK(q.slot(1).records[1].feature(0) == doctest::Approx(11.25));  // (2.5+20)/2
}

TEST_CASE("rebuild_centroids") {
  ClusterConfig cfg;
  cfg.k_per_class = {1, 1};

  SUBCASE("single batch gives that batch's class means") {
    FeatureQueue q(3);
    std::vector<FeatureRecord> records;
    records.push_back({1, Domain::source, (RowVector(2) << 0, 0).finished(), 0, -1, 1});
    records.push_back({2, Domain::source, (RowVector(2) << 2, 0).finished(), 0, -1, 1});
    records.push_back({3, Domain::source, (RowVector(2) << 5, 5).finished(), 1, -1, 1});
    records.push_back({4, Domain::target, (RowVector(2) << 0.4, 0).finished(), -1, -1, 1});
    q.enqueue_batch(std::move(records));
    const CentroidMemory mem = rebuild_centroids(q, 2, cfg, 7);
    CHECK(mem.source.centroids(0, 0) == doctest::Approx(1.0));
    CHECK(mem.source.counts(0) == 2);
    CHECK(mem.source.counts(1) == 1);
    // The lone target sits nearest class 0 and becomes its centroid.
    CHECK(mem.target.counts(0) == 1);
    CHECK(q.slot(0).records[3].pseudo_class == 0);
    CHECK(mem.generation == 1);
  }

  SUBCASE("duplicating a batch leaves centroids unchanged") {
    FeatureQueue q1(4), q2(4);
    auto batch = make_batch(1, 3, 2, 2, 1.5);
    q1.enqueue_batch(batch);
    auto batch2 = batch;
    for (auto& r : batch2) r.iteration_stamp = 2;
    q2.enqueue_batch(batch);
    q2.enqueue_batch(batch2);
    const CentroidMemory m1 = rebuild_centroids(q1, 1, ClusterConfig{.k_per_class = {1}}, 7);
    const CentroidMemory m2 = rebuild_centroids(q2, 1, ClusterConfig{.k_per_class = {1}}, 7);
    CHECK((m1.source.centroids - m2.source.centroids).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("evicting the only batch with a class drops its centroid") {
    FeatureQueue q(1);
    q.enqueue_batch(make_batch(1, 2, 1, 2, 0.0, /*src_label=*/1));
    CentroidMemory mem = rebuild_centroids(q, 2, cfg, 7);
    CHECK(mem.source.present(1));
    q.enqueue_batch(make_batch(2, 2, 1, 2, 0.0, /*src_label=*/0));
    mem = rebuild_centroids(q, 2, cfg, 7);
    CHECK_FALSE(mem.source.present(1));
    CHECK(mem.source.present(0));
  }

  SUBCASE("rebuilding twice without mutation is identical") {
    FeatureQueue q(3);
    Rng rng(11);
    for (long s = 1; s <= 3; ++s) {
      auto batch = make_batch(s, 4, 4, 3, 0.0);
      for (auto& r : batch)
        for (Index j = 0; j < 3; ++j) r.feature(j) = rng.normal();
      for (std::size_t i = 0; i < batch.size(); ++i)
        if (batch[i].domain == Domain::source) batch[i].class_label = static_cast<int>(i % 2);
      q.enqueue_batch(std::move(batch));
    }
    ClusterConfig kcfg;
    kcfg.k_per_class = {2, 2};
    const CentroidMemory a = rebuild_centroids(q, 2, kcfg, 99);
    const CentroidMemory b = rebuild_centroids(q, 2, kcfg, 99);
    CHECK(a.generation == b.generation);
    CHECK((a.source.centroids - b.source.centroids).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.target.centroids - b.target.centroids).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(a.clusters.size() == b.clusters.size());
    for (std::size_t i = 0; i < a.clusters.size(); ++i) {
      CHECK(a.clusters[i].class_id == b.clusters[i].class_id);
      CHECK(a.clusters[i].source_rows == b.clusters[i].source_rows);
      CHECK(a.clusters[i].target_rows == b.clusters[i].target_rows);
      CHECK(a.clusters[i].weight == b.clusters[i].weight);
      CHECK((a.clusters[i].mu_st - b.clusters[i].mu_st).cwiseAbs().maxCoeff() == 0.0);
    }
  }

  SUBCASE("window without source records is a state error") {
    FeatureQueue q(2);
    q.enqueue_batch(make_batch(1, 0, 3, 2, 0.0));
    CHECK_THROWS_AS(rebuild_centroids(q, 2, cfg, 7), StateError);
  }

  SUBCASE("empty queue is a state error") {
    FeatureQueue q(2);
    CHECK_THROWS_AS(rebuild_centroids(q, 2, cfg, 7), StateError);
  }
}
