#include <doctest.h>

#include <cmath>
#include <sstream>

#include "subuda/error.hpp"
#include "subuda/eval.hpp"
#include "subuda/gradcheck.hpp"

using namespace subuda;

namespace {

CentroidMemory toy_memory(const Matrix& cs, const Matrix& ct, const IntVector& counts_s,
                          const IntVector& counts_t) {
  CentroidMemory m;
  m.source.centroids = cs;
  m.source.counts = counts_s;
  m.target.centroids = ct;
  m.target.counts = counts_t;
  return m;
}

Matrix gaussian_blob(Rng& rng, Index n, const RowVector& center, double sd) {
  Matrix out(n, center.size());
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < center.size(); ++j) out(i, j) = center(j) + sd * rng.normal();
  return out;
}

}  // namespace

TEST_CASE("prototype variants agree when both centroid sets coincide") {
  Matrix cent(2, 2);
  cent << 0, 0, 4, 0;
  const CentroidMemory mem =
      toy_memory(cent, cent, IntVector::Ones(2), IntVector::Ones(2));
  Rng rng(1);
  Matrix f = gaussian_blob(rng, 40, (RowVector(2) << 2.0, 0.0).finished(), 2.0);
  const IntVector a = classify_test(f, mem, PrototypeVariant::source_target_mean);
  const IntVector b = classify_test(f, mem, PrototypeVariant::source_only);
  const IntVector c = classify_test(f, mem, PrototypeVariant::target_only);
  CHECK((a.array() == b.array()).all());
  CHECK((a.array() == c.array()).all());
}

TEST_CASE("point at a class's joint centroid is predicted as that class") {
  Matrix cs(2, 2), ct(2, 2);
  cs << 0, 0, 6, 0;
  ct << 2, 0, 8, 0;
  const CentroidMemory mem = toy_memory(cs, ct, IntVector::Ones(2), IntVector::Ones(2));
  Matrix f(1, 2);
  f << 1.0, 0.0;  // c_st of class 0
  CHECK(classify_test(f, mem, PrototypeVariant::source_target_mean)(0) == 0);
}

TEST_CASE("missing centroid raises unless lenient") {
  Matrix cs(2, 2), ct(2, 2);
  cs << 0, 0, 6, 0;
  ct.setZero();
  IntVector ct_counts(2);
  ct_counts << 1, 0;
  const CentroidMemory mem = toy_memory(cs, ct, IntVector::Ones(2), ct_counts);
  Matrix f(1, 2);
  f << 5.0, 0.0;
  CHECK_THROWS_AS(classify_test(f, mem, PrototypeVariant::target_only), StateError);
  CHECK_NOTHROW(classify_test(f, mem, PrototypeVariant::target_only, /*lenient=*/true));
}

TEST_CASE("accuracy basics") {
  IntVector truth(4);
  truth << 0, 1, 2, 1;
  IntVector all = truth;
  CHECK(accuracy(all, truth) == 1.0);
  IntVector none(4);
  none << 1, 2, 0, 0;
  CHECK(accuracy(none, truth) == 0.0);
  IntVector three = truth;
  three(3) = 0;
  CHECK(accuracy(three, truth) == 0.75);
  CHECK_THROWS_AS(accuracy(IntVector(2), truth), ShapeError);
}

TEST_CASE("proxy A-distance is near zero for identical feature sets") {
  Rng rng(2);
  const Matrix fs = gaussian_blob(rng, 500, RowVector::Zero(6), 1.0);
  Rng probe(3);
  const double d = proxy_a_distance(fs, fs, 5, probe);
  CHECK(std::abs(d) < 0.15);
}

TEST_CASE("proxy A-distance saturates for disjoint blobs") {
  Rng rng(4);
  const Matrix fs = gaussian_blob(rng, 500, RowVector::Zero(4), 0.5);
  const Matrix ft = gaussian_blob(rng, 500, RowVector::Constant(4, 20.0), 0.5);
  Rng probe(5);
  CHECK(proxy_a_distance(fs, ft, 5, probe) > 1.8);
}

TEST_CASE("proxy A-distance is symmetric and rigid-motion invariant") {
  Rng rng(6);
  const Matrix fs = gaussian_blob(rng, 240, RowVector::Zero(3), 1.0);
  const Matrix ft = gaussian_blob(rng, 240, RowVector::Constant(3, 1.2), 1.0);
  Rng p1(7), p2(7), p3(7);
  const double ab = proxy_a_distance(fs, ft, 5, p1);
  const double ba = proxy_a_distance(ft, fs, 5, p2);
  CHECK(std::abs(ab - ba) < 0.1);
  const RowVector shift = RowVector::Constant(3, 9.0);
  const double moved =
      proxy_a_distance(fs.rowwise() + shift, ft.rowwise() + shift, 5, p3);
  CHECK(std::abs(ab - moved) < 0.1);
}

TEST_CASE("proxy A-distance needs two samples per domain") {
  Matrix one = Matrix::Zero(1, 2);
  Rng rng(8);
  CHECK_THROWS_AS(proxy_a_distance(one, one, 5, rng), ValidationError);
}

TEST_CASE("consensus on one cluster is the degenerate baseline") {
  Rng rng(9);
  const Matrix f = gaussian_blob(rng, 40, RowVector::Zero(2), 1.0);
  Rng crng(10);
  const auto rows = consensus_cdf_auc(f, 1, 1, 20, 0.8, crng);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].auc == doctest::Approx(0.0));
  CHECK(rows[0].delta_auc == 0.0);
}

TEST_CASE("consensus entries are clean at the true K on separated blobs") {
  Rng rng(11);
  Matrix f(90, 2);
  f.topRows(30) = gaussian_blob(rng, 30, (RowVector(2) << 0, 0).finished(), 0.3);
  f.middleRows(30, 30) = gaussian_blob(rng, 30, (RowVector(2) << 10, 0).finished(), 0.3);
  f.bottomRows(30) = gaussian_blob(rng, 30, (RowVector(2) << 5, 9).finished(), 0.3);
  Rng crng(12);
  const auto rows = consensus_cdf_auc(f, 2, 5, 40, 0.8, crng);
  // The stability score peaks at K0 = 3; the AUC at K0 is near the cross-pair
  // fraction (2/3 for balanced blobs).
  double best = -1.0;
  Index best_k = 0;
  for (const auto& r : rows)
    if (r.delta_auc > best) {
      best = r.delta_auc;
      best_k = r.k;
    }
  CHECK(best_k == 3);
  CHECK(rows[1].auc == doctest::Approx(2.0 / 3.0).epsilon(0.05));
}

TEST_CASE("consensus curve is invariant to shuffling the rows") {
  Rng rng(13);
  Matrix f(60, 2);
  f.topRows(30) = gaussian_blob(rng, 30, (RowVector(2) << 0, 0).finished(), 0.4);
  f.bottomRows(30) = gaussian_blob(rng, 30, (RowVector(2) << 7, 0).finished(), 0.4);
  Matrix shuffled(60, 2);
  // deterministic interleave
  for (Index i = 0; i < 30; ++i) {
    shuffled.row(2 * i) = f.row(i);
    shuffled.row(2 * i + 1) = f.row(30 + i);
  }
  Rng c1(14), c2(14);
  const auto a = consensus_cdf_auc(f, 2, 4, 25, 0.8, c1);
  const auto b = consensus_cdf_auc(shuffled, 2, 4, 25, 0.8, c2);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].auc == doctest::Approx(b[i].auc).epsilon(1e-12));
    CHECK(a[i].delta_auc == doctest::Approx(b[i].delta_auc).epsilon(1e-12));
  }
}

TEST_CASE("ablation grid lists exactly the seven variants") {
  const auto names = ablation_variant_names();
  CHECK(names.size() == 7);
  TrainConfig base;
  base.cluster.k_per_class = {1, 1, 1};
  for (const auto& name : names) {
    const TrainConfig c = ablation_variant_config(name, base, {2, 3, 4});
    if (name == "source-only") {
      CHECK(c.alpha == 0.0);
      CHECK(c.beta == 0.0);
    }
    if (name == "tpn") CHECK(c.beta == 0.0);
    if (name == "kn1")
      for (Index k : c.cluster.k_per_class) CHECK(k == 1);
    if (name == "full")
      CHECK(c.cluster.k_per_class == std::vector<Index>{2, 3, 4});
    if (name == "no-omega") CHECK_FALSE(c.cluster.use_weights);
    if (name == "pooled-mu") CHECK(c.cluster.pooled_mean_centroid);
    if (name == "no-tau") CHECK_FALSE(c.cluster.mining_enabled);
  }
  CHECK_THROWS_AS(ablation_variant_config("bogus", base, {1}), LookupError);
}

TEST_CASE("gradcheck suites pass") {
  std::ostringstream sink;
  CHECK(run_gradcheck_suites(21, sink));
}
