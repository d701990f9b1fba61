#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "subuda/rng.hpp"
#include "subuda/types.hpp"

namespace subuda {

enum class Domain : int { source = 0, target = 1 };

inline const char* domain_name(Domain d) {
  return d == Domain::source ? "source" : "target";
}

// Generative description of a paired two-domain dataset with class- and
// subtype-level structure. Class or subtype conditional shift is present iff
// some subtype mean differs across domains; label shift iff proportions do.
struct DomainShiftSpec {
  Index num_classes = 0;
  std::vector<Index> subtypes_per_class;
  Index input_dim = 0;
  double subtype_cov_scale = 1.0;  // isotropic noise std
  // Indexed [domain][class][subtype].
  std::array<std::vector<std::vector<RowVector>>, 2> subtype_means;
  std::array<Vector, 2> class_proportions;
  std::array<std::vector<Vector>, 2> subtype_proportions;  // per class
  std::array<Index, 2> samples_per_domain = {0, 0};

  void validate() const;  // throws ValidationError
};

struct LabeledSample {
  RowVector x;
  int class_label = -1;
  int true_subtype = -1;  // hidden ground truth, evaluation only
  Domain domain = Domain::source;
  long id = -1;
};

// Firewall views handed to training code: targets carry no class label and
// neither domain exposes the true subtype.
struct SourceTrainView {
  Matrix x;
  IntVector labels;
  std::vector<long> ids;
};

struct TargetTrainView {
  Matrix x;
  std::vector<long> ids;
};

SourceTrainView source_view(const std::vector<LabeledSample>& samples);
TargetTrainView target_view(const std::vector<LabeledSample>& samples);

std::pair<std::vector<LabeledSample>, std::vector<LabeledSample>> generate_domain_pair(
    const DomainShiftSpec& spec, std::uint64_t seed);

/// Names accepted by scenario_preset.
std::vector<std::string> preset_names();

/// Catalog of benchmark scenarios; throws LookupError for unknown names.
DomainShiftSpec scenario_preset(const std::string& name);

// Dataset CSV: header `id,domain,class,true_subtype,x0..x{d-1}`.
void write_dataset_csv(const std::string& path, const std::vector<LabeledSample>& source,
                       const std::vector<LabeledSample>& target);
std::pair<std::vector<LabeledSample>, std::vector<LabeledSample>> read_dataset_csv(
    const std::string& path);

void write_spec_json(const std::string& path, const DomainShiftSpec& spec);
DomainShiftSpec read_spec_json(const std::string& path);

}  // namespace subuda
