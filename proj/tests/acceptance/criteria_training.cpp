// Criteria 5-8: end-to-end training comparisons on the synthetic benchmarks.

#include <chrono>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "subuda/eval.hpp"
#include "subuda/io_util.hpp"
#include "subuda/synth.hpp"
#include "subuda/trainer.hpp"

namespace acceptance {

using namespace subuda;

namespace {

constexpr long kBenchIterations = 2000;
constexpr int kSubgraphMinSize = 10;  // validated on the benchmark presets
const std::vector<std::uint64_t> kSeeds = {1, 2, 3, 4, 5};

TrainConfig bench_config() {
  TrainConfig c;
  c.alpha = 1.0;
  c.beta = 1.0;
  c.lambda = 0.5;
  c.window = 5;
  c.batch_size = 64;
  c.learning_rate = 1e-3;
  c.total_iterations = kBenchIterations;
  c.eval_every = 0;  // metrics timeline not needed here
  c.num_classes = 3;
  c.encoder.hidden_dims = {64};
  c.encoder.feature_dim = 32;
  c.cluster.mode = ClusterMode::kmeans;
  c.cluster.eps = 1.0;
  c.cluster.tau = 1.0;
  c.cluster.min_size = kSubgraphMinSize;
  c.cluster.kmeans_restarts = 5;
  return c;
}

/// Trains on the preset with the given config/seed and scores held-out target
/// accuracy (same protocol as the ablation suite).
double train_and_score(const DomainShiftSpec& spec, TrainConfig cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.num_classes = spec.num_classes;
  auto [train_src, train_tgt] = generate_domain_pair(spec, seed);
  const RunResult res = run(cfg, train_src, train_tgt);
  auto [unused_src, test_tgt] = generate_domain_pair(spec, mix_seed(seed, 0x7E57ULL));
  Rng scratch(0);
  const TargetTrainView tv = target_view(test_tgt);
  const Matrix f = forward(res.state.params, tv.x, false, scratch);
  IntVector truth(static_cast<Index>(test_tgt.size()));
  for (std::size_t i = 0; i < test_tgt.size(); ++i)
    truth(static_cast<Index>(i)) = test_tgt[i].class_label;
  const IntVector pred = classify_test(f, res.state.memory,
                                       PrototypeVariant::source_target_mean,
                                       /*lenient=*/true);
  return accuracy(pred, truth);
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double mean_score(const DomainShiftSpec& spec, const TrainConfig& cfg) {
  std::vector<double> accs;
  for (std::uint64_t seed : kSeeds) accs.push_back(train_and_score(spec, cfg, seed));
  return mean_of(accs);
}

}  // namespace

// --------------------------------------------------------------------------
// 5. End-to-end direction check
// --------------------------------------------------------------------------

bool criterion_end_to_end_direction(std::string& detail) {
  std::ostringstream d;
  bool ok = true;
  double first_run_secs = -1.0;
  for (const std::string preset : {"subtype-condshift", "subtype-labelshift"}) {
    const DomainShiftSpec spec = scenario_preset(preset);

    TrainConfig km = bench_config();
    km.cluster.k_per_class = spec.subtypes_per_class;  // true K_n

    TrainConfig sg = bench_config();
    sg.cluster.mode = ClusterMode::subgraph;
    sg.cluster.k_per_class.clear();

    TrainConfig tpn = bench_config();
    tpn.beta = 0.0;
    tpn.cluster.k_per_class = spec.subtypes_per_class;

    const auto t0 = std::chrono::steady_clock::now();
    const double km_first = train_and_score(spec, km, kSeeds[0]);
    if (first_run_secs < 0)
      first_run_secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::vector<double> km_accs = {km_first};
    for (std::size_t i = 1; i < kSeeds.size(); ++i)
      km_accs.push_back(train_and_score(spec, km, kSeeds[i]));
    const double km_mean = mean_of(km_accs);
    const double sg_mean = mean_score(spec, sg);
    const double tpn_mean = mean_score(spec, tpn);

    const bool margin_ok = km_mean - tpn_mean >= 0.03;
    const bool parity_ok = std::abs(km_mean - sg_mean) <= 0.01;
    ok = ok && margin_ok && parity_ok;
    d << preset << ": kmeans " << fmt_short(km_mean) << " subgraph " << fmt_short(sg_mean)
      << " tpn " << fmt_short(tpn_mean) << (margin_ok ? "" : " [margin<3pt]")
      << (parity_ok ? "" : " [subgraph gap>1pt]") << "; ";
  }
  const bool time_ok = first_run_secs < 600.0;
  ok = ok && time_ok;
  d << "first run " << fmt_short(first_run_secs) << " s";
  detail = d.str();
  return ok;
}

// --------------------------------------------------------------------------
// 6. Ablation orderings
// --------------------------------------------------------------------------

bool criterion_ablation_orderings(std::string& detail) {
  TrainConfig base = bench_config();
  const auto rows = ablation_suite("subtype-labelshift", kSeeds, base);
  auto find = [&](const std::string& name) -> const AblationRow& {
    for (const auto& r : rows)
      if (r.variant == name) return r;
    throw LookupError("missing variant " + name);
  };
  const double full = find("full").mean_acc;
  std::ostringstream d;
  d << "full " << fmt_short(full);
  bool ok = true;
  for (const std::string v : {"no-omega", "no-tau", "pooled-mu", "kn1"}) {
    const double acc = find(v).mean_acc;
    d << ", " << v << " " << fmt_short(acc);
    if (full < acc - 1e-12) {
      ok = false;
      d << " [above full]";
    }
  }
  if (!(find("pooled-mu").mean_acc < full)) {
    ok = false;
    d << " [pooled-mu not strictly below]";
  }
  detail = d.str();
  return ok;
}

// --------------------------------------------------------------------------
// 7. Missing-subtype robustness
// --------------------------------------------------------------------------

bool criterion_missing_subtype_robustness(std::string& detail) {
  const std::vector<std::string> presets = {"missing-subtypes-0", "missing-subtypes-25",
                                            "missing-subtypes-50", "missing-subtypes-75"};
  std::vector<double> subuda_means, tpn_means;
  for (const auto& name : presets) {
    const DomainShiftSpec spec = scenario_preset(name);
    TrainConfig full = bench_config();
    full.cluster.k_per_class = spec.subtypes_per_class;
    TrainConfig tpn = full;
    tpn.beta = 0.0;
    subuda_means.push_back(mean_score(spec, full));
    tpn_means.push_back(mean_score(spec, tpn));
  }
  const double subuda_drop = subuda_means.front() - subuda_means.back();
  const double tpn_drop = tpn_means.front() - tpn_means.back();
  std::ostringstream d;
  d << "subuda ";
  for (double a : subuda_means) d << fmt_short(a) << " ";
  d << "(drop " << fmt_short(subuda_drop) << "), tpn ";
  for (double a : tpn_means) d << fmt_short(a) << " ";
  d << "(drop " << fmt_short(tpn_drop) << ")";
  detail = d.str();
  return subuda_drop < tpn_drop && subuda_drop >= 0.0 && tpn_drop > 0.0;
}

// --------------------------------------------------------------------------
// 8. Proxy A-distance checks
// --------------------------------------------------------------------------

bool criterion_a_distance(std::string& detail) {
  Rng rng(61);

  // Identical distributions.
  Matrix same(500, 8);
  for (Index i = 0; i < same.size(); ++i) same(i / 8, i % 8) = rng.normal();
  Rng p1(62);
  const double d_same = proxy_a_distance(same, same, 5, p1);

  // Disjoint far blobs.
  Matrix far_a(500, 8), far_b(500, 8);
  for (Index i = 0; i < far_a.size(); ++i) {
    far_a(i / 8, i % 8) = rng.normal();
    far_b(i / 8, i % 8) = 25.0 + rng.normal();
  }
  Rng p2(63);
  const double d_far = proxy_a_distance(far_a, far_b, 5, p2);

  // Training shrinks the discrepancy on the conditional-shift preset.
  const DomainShiftSpec spec = scenario_preset("subtype-condshift");
  TrainConfig cfg = bench_config();
  cfg.cluster.k_per_class = spec.subtypes_per_class;
  cfg.seed = kSeeds[0];
  auto [src, tgt] = generate_domain_pair(spec, cfg.seed);
  const SourceTrainView sv = source_view(src);
  const TargetTrainView tv = target_view(tgt);

  TrainState init_state = init_train_state(cfg, sv.x.cols());
  Rng scratch(0);
  const Matrix fs0 = forward(init_state.params, sv.x, false, scratch);
  const Matrix ft0 = forward(init_state.params, tv.x, false, scratch);
  Rng p3(64);
  const double d_before = proxy_a_distance(fs0, ft0, 5, p3);

  const RunResult res = run(cfg, src, tgt);
  const Matrix fs1 = forward(res.state.params, sv.x, false, scratch);
  const Matrix ft1 = forward(res.state.params, tv.x, false, scratch);
  Rng p4(64);
  const double d_after = proxy_a_distance(fs1, ft1, 5, p4);

  std::ostringstream d;
  d << "identical " << fmt_short(d_same) << ", disjoint " << fmt_short(d_far)
    << ", pre-training " << fmt_short(d_before) << " vs post " << fmt_short(d_after);
  detail = d.str();
  return std::abs(d_same) < 0.15 && d_far > 1.8 && d_after < d_before;
}

}  // namespace acceptance
