#pragma once

#include <string>
#include <vector>

#include "subuda/memory.hpp"
#include "subuda/rng.hpp"
#include "subuda/trainer.hpp"
#include "subuda/types.hpp"

namespace subuda {

enum class PrototypeVariant { source_target_mean, source_only, target_only };

const char* variant_name(PrototypeVariant v);

/// Prototype matrix for the requested variant: c^{st} rows are
/// (c^s + c^t) / 2. Throws StateError when a needed centroid is absent
/// unless `lenient` substitutes the present side per class.
Matrix variant_centroids(const CentroidMemory& memory, PrototypeVariant variant,
                         bool lenient = false);

/// Nearest-prototype classification with the chosen test-time variant.
IntVector classify_test(const Eigen::Ref<const Matrix>& features,
                        const CentroidMemory& memory, PrototypeVariant variant,
                        bool lenient = false);

double accuracy(const IntVector& predictions, const IntVector& truth);

/// Cross-domain discrepancy 2 * (1 - 2 * err) from a cross-validated linear
/// logistic domain probe (gradient-trained), clamped to [0, 2]. Stands in for
/// an adversarially trained discriminator.
double proxy_a_distance(const Eigen::Ref<const Matrix>& source_features,
                        const Eigen::Ref<const Matrix>& target_features, int folds,
                        Rng& rng);

struct ConsensusRow {
  Index k = 0;
  double auc = 0.0;        // area under the consensus CDF: 1 - mean entry
  double delta_auc = 0.0;  // stability elbow score, peaks at the true K
};

/// Monti-style consensus clustering: `resamples` k-means runs on random
/// subsamples, pairwise co-clustering frequencies, and per-K summaries of the
/// consensus CDF. `delta_auc` is the binariness of the consensus entries,
/// 1 - 2 * mean(min(c, 1-c)): it is maximal when co-clustering is an all-or-
/// nothing relation, which happens at the true cluster count, and degrades
/// at other K where the subsampled partitions disagree. (The classical
/// relative AUC change is monotone-decreasing on blob-like data, so its
/// argmax cannot mark K0; this score keeps the elbow readable as an argmax.)
std::vector<ConsensusRow> consensus_cdf_auc(const Eigen::Ref<const Matrix>& features,
                                            Index k_min, Index k_max, int resamples,
                                            double subsample_frac, Rng& rng);

struct PerClassDiagnostics {
  int class_id = 0;
  Index cluster_count = 0;
  std::vector<ConsensusRow> consensus;
};

struct EvalReport {
  double accuracy_st = 0.0;  // c^{st} prototypes
  double accuracy_s = 0.0;   // c^s
  double accuracy_t = 0.0;   // c^t
  double proxy_a = 0.0;
  std::vector<double> per_class_accuracy;
  std::vector<PerClassDiagnostics> diagnostics;
};

EvalReport evaluate(const EncoderParams& params, const CentroidMemory& memory,
                    const std::vector<LabeledSample>& source,
                    const std::vector<LabeledSample>& target, std::uint64_t seed,
                    bool with_consensus = true);

std::string eval_report_json(const EvalReport& report);

struct AblationRow {
  std::string variant;
  std::vector<double> per_seed_acc;
  double mean_acc = 0.0;
  double sd_acc = 0.0;
};

/// The seven-variant comparison grid: full, no-omega, pooled-mu-st, no-tau,
/// kn1, tpn (beta = 0), source-only (alpha = beta = 0). Each variant trains
/// on the preset per seed and is scored on a held-out target draw.
std::vector<AblationRow> ablation_suite(const std::string& preset,
                                        const std::vector<std::uint64_t>& seeds,
                                        const TrainConfig& base_config);

std::vector<std::string> ablation_variant_names();

/// Applies one named ablation variant to a config copy.
TrainConfig ablation_variant_config(const std::string& variant, const TrainConfig& base,
                                    const std::vector<Index>& true_k_per_class);

void write_ablation_csv(const std::string& path, const std::string& preset,
                        const std::vector<AblationRow>& rows);

void write_consensus_csv(const std::string& path, const std::vector<ConsensusRow>& rows);

/// Feature export CSV: `id,domain,class,pseudo,f0..f{d-1}` where pseudo is the
/// nearest-source-centroid assignment for both domains.
void write_features_csv(const std::string& path, const EncoderParams& params,
                        const CentroidMemory& memory,
                        const std::vector<LabeledSample>& source,
                        const std::vector<LabeledSample>& target);

/// Cluster diagnostics dump: members CSV `class,subtype,domain,member_id` and
/// a centroid table CSV.
void write_cluster_dump(const std::string& members_path, const std::string& centroids_path,
                        const CentroidMemory& memory);

}  // namespace subuda
