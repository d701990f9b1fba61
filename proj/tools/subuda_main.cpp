// Command line front end: dataset generation, training, evaluation, the
// ablation grid, consensus analysis, gradient checking and feature export.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "subuda/checkpoint.hpp"
#include "subuda/eval.hpp"
#include "subuda/gradcheck.hpp"
#include "subuda/io_util.hpp"
#include "subuda/synth.hpp"
#include "subuda/trainer.hpp"

namespace {

using namespace subuda;

DomainShiftSpec resolve_spec(const std::string& preset, const std::string& spec_path) {
  if (!preset.empty() && !spec_path.empty())
    throw ValidationError("pass either --preset or --spec, not both");
  if (!preset.empty()) return scenario_preset(preset);
  if (!spec_path.empty()) return read_spec_json(spec_path);
  throw ValidationError("one of --preset or --spec is required");
}

int cmd_generate(const std::string& preset, const std::string& spec_path,
                 std::uint64_t seed, const std::string& out,
                 const std::string& dump_spec) {
  const DomainShiftSpec spec = resolve_spec(preset, spec_path);
  auto [source, target] = generate_domain_pair(spec, seed);
  write_dataset_csv(out, source, target);
  if (!dump_spec.empty()) write_spec_json(dump_spec, spec);
  std::cout << "wrote " << source.size() << " source + " << target.size()
            << " target samples to " << out << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& preset, bool seed_set, std::uint64_t seed,
              const std::string& out_metrics, const std::string& out_checkpoint,
              const std::string& dump_clusters, const std::string& debug_queue_dump) {
  TrainConfig config = read_config_json(config_path);
  if (seed_set) config.seed = seed;

  std::vector<LabeledSample> source, target;
  if (!data_path.empty()) {
    std::tie(source, target) = read_dataset_csv(data_path);
  } else if (!preset.empty()) {
    std::tie(source, target) = generate_domain_pair(scenario_preset(preset), config.seed);
  } else {
    throw ValidationError("train needs --data or --preset");
  }

  RunResult res = run(config, source, target);
  if (!out_metrics.empty()) write_metrics_csv(out_metrics, res.metrics);
  if (!out_checkpoint.empty())
    save_checkpoint(out_checkpoint, res.state.params, res.state.memory);
  if (!dump_clusters.empty())
    write_cluster_dump(dump_clusters + "_members.csv", dump_clusters + "_centroids.csv",
                       res.state.memory);
  if (!debug_queue_dump.empty())
    write_queue_snapshot_csv(debug_queue_dump, res.state.queue);
  if (!res.metrics.empty()) {
    const auto& last = res.metrics.back();
    std::cout << "final: iteration=" << last.iteration << " loss=" << fmt_short(last.loss_total)
              << " target_acc=" << fmt_short(last.target_acc)
              << " source_acc=" << fmt_short(last.source_acc) << "\n";
  } else {
    std::cout << "trained " << config.total_iterations << " iterations\n";
  }
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_path,
             std::uint64_t seed, const std::string& out, bool no_consensus) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  auto [source, target] = read_dataset_csv(data_path);
  const EvalReport rep =
      evaluate(ck.params, ck.memory, source, target, seed, !no_consensus);
  const std::string text = eval_report_json(rep);
  if (out.empty()) {
    std::cout << text << "\n";
  } else {
    auto f = open_out(out);
    f << text << "\n";
  }
  return 0;
}

int cmd_ablate(const std::string& preset, const std::string& config_path, int seeds,
               std::uint64_t seed, long iterations, const std::string& out) {
  TrainConfig base;
  if (!config_path.empty()) base = read_config_json(config_path);
  if (iterations > 0) base.total_iterations = iterations;
  std::vector<std::uint64_t> seed_list;
  for (int i = 0; i < seeds; ++i) seed_list.push_back(seed + static_cast<std::uint64_t>(i));
  const auto rows = ablation_suite(preset, seed_list, base);
  write_ablation_csv(out, preset, rows);
  for (const auto& r : rows)
    std::cout << r.variant << ": mean=" << fmt_short(r.mean_acc)
              << " sd=" << fmt_short(r.sd_acc) << "\n";
  return 0;
}

int cmd_consensus(const std::string& features_path, Index kmin, Index kmax, int resamples,
                  double frac, std::uint64_t seed, const std::string& out,
                  const std::string& domain_filter) {
  // Accepts either the feature-export schema (f columns) or a dataset CSV
  // (x columns); numeric columns are taken from the first f/x column onward.
  auto in = open_in(features_path);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("consensus: empty input");
  const auto header = split_csv_line(line);
  Index first_col = -1;
  int domain_col = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "f0" || header[i] == "x0") first_col = static_cast<Index>(i);
    if (header[i] == "domain") domain_col = static_cast<int>(i);
  }
  if (first_col < 0) throw ValidationError("consensus: no f0/x0 column found");
  const Index dim = static_cast<Index>(header.size()) - first_col;
  std::vector<RowVector> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (!domain_filter.empty() && domain_col >= 0 && f[domain_col] != domain_filter)
      continue;
    RowVector v(dim);
    for (Index j = 0; j < dim; ++j) v(j) = std::stod(f[first_col + j]);
    rows.push_back(std::move(v));
  }
  if (rows.empty()) throw ValidationError("consensus: no rows after filtering");
  Matrix feats(static_cast<Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) feats.row(static_cast<Index>(i)) = rows[i];

  Rng rng(seed);
  const auto table = consensus_cdf_auc(feats, kmin, kmax, resamples, frac, rng);
  write_consensus_csv(out, table);
  for (const auto& r : table)
    std::cout << "K=" << r.k << " auc=" << fmt_short(r.auc)
              << " delta_auc=" << fmt_short(r.delta_auc) << "\n";
  return 0;
}

int cmd_export_features(const std::string& checkpoint_path, const std::string& data_path,
                        const std::string& out) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  auto [source, target] = read_dataset_csv(data_path);
  write_features_csv(out, ck.params, ck.memory, source, target);
  std::cout << "wrote features for " << source.size() + target.size() << " samples to "
            << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"subtype-aware unsupervised domain adaptation engine"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "draw a source/target dataset CSV");
  std::string gen_preset, gen_spec, gen_out = "dataset.csv", gen_dump_spec;
  std::uint64_t gen_seed = 1;
  gen->add_option("--preset", gen_preset, "scenario preset name");
  gen->add_option("--spec", gen_spec, "domain spec JSON path");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--out", gen_out, "output dataset CSV");
  gen->add_option("--dump-spec", gen_dump_spec, "also write the resolved spec JSON here");

  // train
  auto* tr = app.add_subcommand("train", "run the dynamic training loop");
  std::string tr_config, tr_data, tr_preset, tr_metrics = "metrics.csv",
              tr_ckpt = "checkpoint.json", tr_clusters, tr_queue_dump;
  std::uint64_t tr_seed = 0;
  bool tr_seed_set = false;
  tr->add_option("--config", tr_config, "train config JSON")->required();
  tr->add_option("--data", tr_data, "dataset CSV (from generate)");
  tr->add_option("--preset", tr_preset, "generate data from this preset instead");
  tr->add_option("--seed", tr_seed, "override the config seed")
      ->each([&](const std::string&) { tr_seed_set = true; });
  tr->add_option("--out-metrics", tr_metrics, "metrics CSV path");
  tr->add_option("--out-checkpoint", tr_ckpt, "checkpoint JSON path");
  tr->add_option("--dump-clusters", tr_clusters,
                 "prefix for final cluster member/centroid CSVs");
  tr->add_option("--debug-queue-dump", tr_queue_dump,
                 "write the final queue snapshot CSV here");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  std::string ev_ckpt, ev_data, ev_out;
  std::uint64_t ev_seed = 1;
  bool ev_no_consensus = false;
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--seed", ev_seed, "seed for the probe and consensus analysis");
  ev->add_option("--out", ev_out, "write the report JSON here instead of stdout");
  ev->add_flag("--no-consensus", ev_no_consensus, "skip the consensus diagnostics");

  // ablate
  auto* ab = app.add_subcommand("ablate", "run the seven-variant comparison grid");
  std::string ab_preset, ab_config, ab_out = "ablation.csv";
  int ab_seeds = 5;
  std::uint64_t ab_seed = 1;
  long ab_iters = 0;
  ab->add_option("--preset", ab_preset)->required();
  ab->add_option("--config", ab_config, "base train config JSON (defaults used otherwise)");
  ab->add_option("--seeds", ab_seeds, "number of seeds");
  ab->add_option("--seed", ab_seed, "first seed");
  ab->add_option("--iterations", ab_iters, "override total_iterations");
  ab->add_option("--out", ab_out, "comparison CSV");

  // consensus
  auto* co = app.add_subcommand("consensus", "consensus-clustering stability table");
  std::string co_features, co_out = "consensus.csv", co_domain;
  Index co_kmin = 2, co_kmax = 6;
  int co_resamples = 50;
  double co_frac = 0.8;
  std::uint64_t co_seed = 1;
  co->add_option("--features", co_features, "feature CSV (export-features or dataset)")
      ->required();
  co->add_option("--kmin", co_kmin);
  co->add_option("--kmax", co_kmax);
  co->add_option("--resamples", co_resamples);
  co->add_option("--frac", co_frac, "subsample fraction");
  co->add_option("--seed", co_seed);
  co->add_option("--domain", co_domain, "restrict to one domain column value");
  co->add_option("--out", co_out);

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suites");
  std::uint64_t gc_seed = 1;
  gc->add_option("--seed", gc_seed);

  // export-features
  auto* ex = app.add_subcommand("export-features", "encode a dataset with a checkpoint");
  std::string ex_ckpt, ex_data, ex_out = "features.csv";
  ex->add_option("--checkpoint", ex_ckpt)->required();
  ex->add_option("--data", ex_data)->required();
  ex->add_option("--out", ex_out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_generate(gen_preset, gen_spec, gen_seed, gen_out, gen_dump_spec);
    if (tr->parsed())
      return cmd_train(tr_config, tr_data, tr_preset, tr_seed_set, tr_seed, tr_metrics,
                       tr_ckpt, tr_clusters, tr_queue_dump);
    if (ev->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_seed, ev_out, ev_no_consensus);
    if (ab->parsed())
      return cmd_ablate(ab_preset, ab_config, ab_seeds, ab_seed, ab_iters, ab_out);
    if (co->parsed())
      return cmd_consensus(co_features, co_kmin, co_kmax, co_resamples, co_frac, co_seed,
                           co_out, co_domain);
    if (gc->parsed()) {
      const bool ok = run_gradcheck_suites(gc_seed, std::cout);
      return ok ? 0 : 1;
    }
    if (ex->parsed()) return cmd_export_features(ex_ckpt, ex_data, ex_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
