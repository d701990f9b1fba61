#include "subuda/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <nlohmann/json.hpp>

#include "subuda/error.hpp"
#include "subuda/io_util.hpp"

namespace subuda {

namespace {

constexpr double kProportionTol = 1e-9;

void check_simplex(const Vector& p, const std::string& what) {
  if (p.size() == 0) throw ValidationError(what + ": empty proportion vector");
  if ((p.array() < 0.0).any()) throw ValidationError(what + ": negative proportion");
  if (std::abs(p.sum() - 1.0) > kProportionTol)
    throw ValidationError(what + ": proportions sum to " + fmt_short(p.sum()) +
                          ", expected 1");
}

int sample_categorical(const Vector& p, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (Index i = 0; i < p.size(); ++i) {
    acc += p(i);
    if (u < acc) return static_cast<int>(i);
  }
  // u landed in the rounding slack past the last positive entry.
  for (Index i = p.size() - 1; i >= 0; --i)
    if (p(i) > 0.0) return static_cast<int>(i);
  return 0;
}

}  // namespace

void DomainShiftSpec::validate() const {
  if (num_classes < 1) throw ValidationError("spec: num_classes must be >= 1");
  if (input_dim < 1) throw ValidationError("spec: input_dim must be >= 1");
  if (subtype_cov_scale < 0.0) throw ValidationError("spec: subtype_cov_scale must be >= 0");
  if (static_cast<Index>(subtypes_per_class.size()) != num_classes)
    throw ValidationError("spec: subtypes_per_class size mismatch");
  for (int d = 0; d < 2; ++d) {
    const char* dn = d == 0 ? "source" : "target";
    if (samples_per_domain[d] < 0)
      throw ValidationError(std::string("spec: negative sample count for ") + dn);
    check_simplex(class_proportions[d], std::string("spec: ") + dn + " class_proportions");
    if (class_proportions[d].size() != num_classes)
      throw ValidationError(std::string("spec: ") + dn + " class_proportions length");
    if (static_cast<Index>(subtype_proportions[d].size()) != num_classes ||
        static_cast<Index>(subtype_means[d].size()) != num_classes)
      throw ValidationError(std::string("spec: ") + dn + " per-class tables length");
    for (Index n = 0; n < num_classes; ++n) {
      const Index k = subtypes_per_class[n];
      if (static_cast<Index>(subtype_means[d][n].size()) != k)
        throw ValidationError("spec: subtype_means count mismatch");
      if (subtype_proportions[d][n].size() != k)
        throw ValidationError("spec: subtype_proportions count mismatch");
      check_simplex(subtype_proportions[d][n],
                    std::string("spec: ") + dn + " subtype_proportions class " +
                        std::to_string(n));
      for (const auto& m : subtype_means[d][n])
        if (m.size() != input_dim) throw ValidationError("spec: subtype mean dim mismatch");
    }
  }
}

std::pair<std::vector<LabeledSample>, std::vector<LabeledSample>> generate_domain_pair(
    const DomainShiftSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  std::pair<std::vector<LabeledSample>, std::vector<LabeledSample>> out;
  long next_id = 0;
  for (int d = 0; d < 2; ++d) {
    auto& bucket = d == 0 ? out.first : out.second;
    bucket.reserve(spec.samples_per_domain[d]);
    for (Index s = 0; s < spec.samples_per_domain[d]; ++s) {
      LabeledSample sample;
      sample.domain = static_cast<Domain>(d);
      sample.id = next_id++;
      sample.class_label = sample_categorical(spec.class_proportions[d], rng);
      sample.true_subtype = sample_categorical(spec.subtype_proportions[d][sample.class_label], rng);
      const RowVector& mu = spec.subtype_means[d][sample.class_label][sample.true_subtype];
      RowVector x(spec.input_dim);
      for (Index j = 0; j < spec.input_dim; ++j)
        x(j) = mu(j) + spec.subtype_cov_scale * rng.normal();
      sample.x = std::move(x);
      bucket.push_back(std::move(sample));
    }
  }
  return out;
}

SourceTrainView source_view(const std::vector<LabeledSample>& samples) {
  SourceTrainView v;
  const Index n = static_cast<Index>(samples.size());
  const Index d = n > 0 ? samples[0].x.size() : 0;
  v.x.resize(n, d);
  v.labels.resize(n);
  v.ids.reserve(samples.size());
  for (Index i = 0; i < n; ++i) {
    v.x.row(i) = samples[i].x;
    v.labels(i) = samples[i].class_label;
    v.ids.push_back(samples[i].id);
  }
  return v;
}

TargetTrainView target_view(const std::vector<LabeledSample>& samples) {
  TargetTrainView v;
  const Index n = static_cast<Index>(samples.size());
  const Index d = n > 0 ? samples[0].x.size() : 0;
  v.x.resize(n, d);
  v.ids.reserve(samples.size());
  for (Index i = 0; i < n; ++i) {
    v.x.row(i) = samples[i].x;
    v.ids.push_back(samples[i].id);
  }
  return v;
}

// ---------------------------------------------------------------------------
// Scenario presets
// ---------------------------------------------------------------------------

namespace {

// Shared geometry for the benchmark scenarios. Class anchors sit on separate
// coordinates; subtype offsets use their own coordinate block with a smaller
// scale so inter-class gaps dominate intra-class subtype gaps. Two subtypes
// are confusable: subtype 1 of class 0 leans toward class 1, and subtype 2 of
// class 1 leans (more mildly) toward class 2 — the pairs that class-level
// alignment tends to drag across the boundary once their target mass moves.
struct GeometryOptions {
  std::vector<Index> subtypes = {2, 3, 4};
  Index input_dim = 64;
  double class_sep = 6.0;
  double subtype_sep = 2.5;
  double noise = 1.0;
  double confuse_lean = 0.45;    // source-side lean toward the neighbor class
  double confuse_lean_mild = 0.35;
  double confuse_shift = 0.17;   // extra target-side lean under conditional shift
  double cond_shift = 2.0;       // generic per-subtype target displacement
  bool conditional_shift = false;
  Index samples = 4000;
};

std::vector<std::vector<RowVector>> build_means(const GeometryOptions& g, bool shifted) {
  const Index n_classes = static_cast<Index>(g.subtypes.size());
  std::vector<std::vector<RowVector>> means(n_classes);
  Index subtype_coord = n_classes;  // first coordinate after the class block
  Index total_subtypes = 0;
  for (Index k : g.subtypes) total_subtypes += k;
  const Index shift_coord0 = n_classes + total_subtypes;

  Index flat = 0;
  for (Index n = 0; n < n_classes; ++n) {
    for (Index k = 0; k < g.subtypes[n]; ++k, ++flat) {
      RowVector m = RowVector::Zero(g.input_dim);
      double lean = 0.0;
      const bool confusable_main = n == 0 && k == 1 && n_classes > 1;
      const bool confusable_mild = n == 1 && k == 2 && g.subtypes[1] > 2 && n_classes > 2;
      if (confusable_main) lean = g.confuse_lean;
      if (confusable_mild) lean = g.confuse_lean_mild;
      if (shifted && g.conditional_shift && (confusable_main || confusable_mild))
        lean += g.confuse_shift;
      m(n) = (1.0 - lean) * g.class_sep;
      if (lean > 0.0) m((n + 1) % n_classes) = lean * g.class_sep;
      m(subtype_coord + flat) = g.subtype_sep * (k % 2 == 0 ? 1.0 : -1.0);
      if (shifted && g.conditional_shift && !(confusable_main || confusable_mild))
        m(shift_coord0 + flat) = g.cond_shift;
      means[n].push_back(std::move(m));
    }
  }
  return means;
}

Vector uniform_props(Index k) { return Vector::Constant(k, 1.0 / static_cast<double>(k)); }

DomainShiftSpec base_spec(const GeometryOptions& g) {
  DomainShiftSpec s;
  s.num_classes = static_cast<Index>(g.subtypes.size());
  s.subtypes_per_class = g.subtypes;
  s.input_dim = g.input_dim;
  s.subtype_cov_scale = g.noise;
  s.samples_per_domain = {g.samples, g.samples};
  s.subtype_means[0] = build_means(g, false);
  s.subtype_means[1] = build_means(g, true);
  for (int d = 0; d < 2; ++d) {
    s.class_proportions[d] = uniform_props(s.num_classes);
    for (Index n = 0; n < s.num_classes; ++n)
      s.subtype_proportions[d].push_back(uniform_props(g.subtypes[n]));
  }
  return s;
}

Vector ramp_props(Index k, bool descending) {
  // e.g. k=4 descending: (8,4,2,1)/15 — strong skew so the shift bites
  Vector p(k);
  for (Index i = 0; i < k; ++i)
    p(i) = std::pow(2.0, static_cast<double>(descending ? k - 1 - i : i));
  p /= p.sum();
  return p;
}

DomainShiftSpec missing_subtypes_spec(double fraction) {
  GeometryOptions g;
  g.subtypes = {4, 4, 4};  // uniform K so the removal fraction is exact
  g.conditional_shift = true;
  g.cond_shift = 1.5;
  DomainShiftSpec s = base_spec(g);
  const Index removed = static_cast<Index>(std::lround(fraction * 4.0));
  for (Index n = 0; n < s.num_classes; ++n) {
    Vector p = Vector::Zero(4);
    const Index kept = 4 - removed;
    for (Index k = 0; k < kept; ++k) p(k) = 1.0 / static_cast<double>(kept);
    s.subtype_proportions[1][n] = p;
  }
  return s;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"baseline-noshift", "class-labelshift",  "subtype-labelshift",
          "subtype-condshift", "missing-subtypes-0", "missing-subtypes-25",
          "missing-subtypes-50", "missing-subtypes-75"};
}

DomainShiftSpec scenario_preset(const std::string& name) {
  if (name == "baseline-noshift") {
    GeometryOptions g;
    return base_spec(g);
  }
  if (name == "class-labelshift") {
    GeometryOptions g;
    DomainShiftSpec s = base_spec(g);
    s.class_proportions[0] = (Vector(3) << 0.5, 0.3, 0.2).finished();
    s.class_proportions[1] = (Vector(3) << 0.2, 0.3, 0.5).finished();
    return s;
  }
  if (name == "subtype-labelshift") {
    GeometryOptions g;
    DomainShiftSpec s = base_spec(g);
    for (Index n = 0; n < s.num_classes; ++n) {
      const Index k = s.subtypes_per_class[n];
      s.subtype_proportions[0][n] = ramp_props(k, true);
      s.subtype_proportions[1][n] = ramp_props(k, false);
    }
    // The confusable subtype of class 0 flips from rare to dominant.
    s.subtype_proportions[0][0] = (Vector(2) << 0.8, 0.2).finished();
    s.subtype_proportions[1][0] = (Vector(2) << 0.2, 0.8).finished();
    return s;
  }
  if (name == "subtype-condshift") {
    GeometryOptions g;
    g.conditional_shift = true;
    return base_spec(g);
  }
  if (name == "missing-subtypes-0") return missing_subtypes_spec(0.0);
  if (name == "missing-subtypes-25") return missing_subtypes_spec(0.25);
  if (name == "missing-subtypes-50") return missing_subtypes_spec(0.50);
  if (name == "missing-subtypes-75") return missing_subtypes_spec(0.75);
  throw LookupError("unknown preset: " + name);
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

void write_dataset_csv(const std::string& path, const std::vector<LabeledSample>& source,
                       const std::vector<LabeledSample>& target) {
  auto out = open_out(path);
  Index d = 0;
  if (!source.empty())
    d = source[0].x.size();
  else if (!target.empty())
    d = target[0].x.size();
  out << "id,domain,class,true_subtype";
  for (Index j = 0; j < d; ++j) out << ",x" << j;
  out << "\n";
  auto emit = [&](const std::vector<LabeledSample>& bucket) {
    for (const auto& s : bucket) {
      out << s.id << ',' << domain_name(s.domain) << ',' << s.class_label << ','
          << s.true_subtype;
      for (Index j = 0; j < s.x.size(); ++j) out << ',' << fmt_full(s.x(j));
      out << "\n";
    }
  };
  emit(source);
  emit(target);
}

std::pair<std::vector<LabeledSample>, std::vector<LabeledSample>> read_dataset_csv(
    const std::string& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("dataset csv: empty file " + path);
  const auto header = split_csv_line(line);
  if (header.size() < 5 || header[0] != "id" || header[1] != "domain")
    throw ValidationError("dataset csv: unexpected header in " + path);
  const Index d = static_cast<Index>(header.size()) - 4;

  std::pair<std::vector<LabeledSample>, std::vector<LabeledSample>> out;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (static_cast<Index>(f.size()) != d + 4)
      throw ValidationError("dataset csv: bad field count at line " + std::to_string(line_no));
    LabeledSample s;
    s.id = std::stol(f[0]);
    if (f[1] == "source")
      s.domain = Domain::source;
    else if (f[1] == "target")
      s.domain = Domain::target;
    else
      throw ValidationError("dataset csv: bad domain at line " + std::to_string(line_no));
    s.class_label = std::stoi(f[2]);
    s.true_subtype = std::stoi(f[3]);
    s.x.resize(d);
    for (Index j = 0; j < d; ++j) s.x(j) = std::stod(f[4 + j]);
    (s.domain == Domain::source ? out.first : out.second).push_back(std::move(s));
  }
  return out;
}

namespace {

nlohmann::json vector_to_json(const Vector& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

nlohmann::json rowvec_to_json(const RowVector& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Vector json_to_vector(const nlohmann::json& a) {
  Vector v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Index>(i)) = a[i].get<double>();
  return v;
}

RowVector json_to_rowvec(const nlohmann::json& a) {
  RowVector v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Index>(i)) = a[i].get<double>();
  return v;
}

}  // namespace

void write_spec_json(const std::string& path, const DomainShiftSpec& spec) {
  spec.validate();
  nlohmann::json j;
  j["format"] = "subuda-domain-spec";
  j["version"] = 1;
  j["num_classes"] = spec.num_classes;
  j["subtypes_per_class"] = spec.subtypes_per_class;
  j["input_dim"] = spec.input_dim;
  j["subtype_cov_scale"] = spec.subtype_cov_scale;
  for (int d = 0; d < 2; ++d) {
    const char* dn = d == 0 ? "source" : "target";
    j["samples_per_domain"][dn] = spec.samples_per_domain[d];
    j["class_proportions"][dn] = vector_to_json(spec.class_proportions[d]);
    nlohmann::json props = nlohmann::json::array();
    nlohmann::json means = nlohmann::json::array();
    for (Index n = 0; n < spec.num_classes; ++n) {
      props.push_back(vector_to_json(spec.subtype_proportions[d][n]));
      nlohmann::json per_class = nlohmann::json::array();
      for (const auto& m : spec.subtype_means[d][n]) per_class.push_back(rowvec_to_json(m));
      means.push_back(per_class);
    }
    j["subtype_proportions"][dn] = props;
    j["subtype_means"][dn] = means;
  }
  auto out = open_out(path);
  out << j.dump(2) << "\n";
}

DomainShiftSpec read_spec_json(const std::string& path) {
  auto in = open_in(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("spec json: parse failure in " + path + ": " + e.what());
  }
  DomainShiftSpec spec;
  try {
    spec.num_classes = j.at("num_classes").get<Index>();
    spec.subtypes_per_class = j.at("subtypes_per_class").get<std::vector<Index>>();
    spec.input_dim = j.at("input_dim").get<Index>();
    spec.subtype_cov_scale = j.at("subtype_cov_scale").get<double>();
    for (int d = 0; d < 2; ++d) {
      const char* dn = d == 0 ? "source" : "target";
      spec.samples_per_domain[d] = j.at("samples_per_domain").at(dn).get<Index>();
      spec.class_proportions[d] = json_to_vector(j.at("class_proportions").at(dn));
      for (const auto& p : j.at("subtype_proportions").at(dn))
        spec.subtype_proportions[d].push_back(json_to_vector(p));
      for (const auto& per_class : j.at("subtype_means").at(dn)) {
        std::vector<RowVector> ms;
        for (const auto& m : per_class) ms.push_back(json_to_rowvec(m));
        spec.subtype_means[d].push_back(std::move(ms));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("spec json: missing or malformed field in " + path + ": " + e.what());
  }
  spec.validate();
  return spec;
}

}  // namespace subuda
