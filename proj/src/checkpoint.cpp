#include "subuda/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include "subuda/error.hpp"
#include "subuda/io_util.hpp"

namespace subuda {

namespace {

nlohmann::json matrix_to_json(const Eigen::Ref<const Matrix>& m) {
  nlohmann::json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  nlohmann::json data = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i)
    for (Index c = 0; c < m.cols(); ++c) data.push_back(m(i, c));
  j["data"] = std::move(data);
  return j;
}

Matrix json_to_matrix(const nlohmann::json& j) {
  const Index rows = j.at("rows").get<Index>();
  const Index cols = j.at("cols").get<Index>();
  const auto& data = j.at("data");
  if (static_cast<Index>(data.size()) != rows * cols)
    throw ValidationError("checkpoint: matrix payload size mismatch");
  Matrix m(rows, cols);
  Index idx = 0;
  for (Index i = 0; i < rows; ++i)
    for (Index c = 0; c < cols; ++c) m(i, c) = data[idx++].get<double>();
  return m;
}

nlohmann::json rowvec_to_json(const RowVector& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

RowVector json_to_rowvec(const nlohmann::json& a) {
  RowVector v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Index>(i)) = a[i].get<double>();
  return v;
}

nlohmann::json centroids_to_json(const ClassCentroids& c) {
  nlohmann::json j;
  j["counts"] = std::vector<int>(c.counts.data(), c.counts.data() + c.counts.size());
  j["centroids"] = matrix_to_json(c.centroids);
  return j;
}

ClassCentroids json_to_centroids(const nlohmann::json& j) {
  ClassCentroids c;
  const auto counts = j.at("counts").get<std::vector<int>>();
  c.counts.resize(static_cast<Index>(counts.size()));
  for (std::size_t i = 0; i < counts.size(); ++i) c.counts(static_cast<Index>(i)) = counts[i];
  c.centroids = json_to_matrix(j.at("centroids"));
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const EncoderParams& params,
                     const CentroidMemory& memory) {
  nlohmann::json j;
  j["format"] = "subuda-checkpoint";
  j["version"] = 1;

  nlohmann::json enc;
  enc["layer_dims"] = params.layer_dims;
  enc["has_head"] = params.has_head;
  enc["dropout_rate"] = params.dropout_rate;
  enc["relu_on_output"] = params.relu_on_output;
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    nlohmann::json layer;
    layer["weight"] = matrix_to_json(params.weights[l]);
    layer["bias"] = rowvec_to_json(params.biases[l]);
    layers.push_back(std::move(layer));
  }
  enc["layers"] = std::move(layers);
  if (!params.head_norm.identity()) {
    enc["head_norm"]["mean"] = rowvec_to_json(params.head_norm.mean);
    enc["head_norm"]["stddev"] = rowvec_to_json(params.head_norm.stddev);
  }
  j["encoder"] = std::move(enc);

  nlohmann::json mem;
  mem["generation"] = memory.generation;
  mem["source"] = centroids_to_json(memory.source);
  mem["target"] = centroids_to_json(memory.target);
  nlohmann::json clusters = nlohmann::json::array();
  for (const auto& c : memory.clusters) {
    nlohmann::json cj;
    cj["class_id"] = c.class_id;
    cj["m_s"] = c.m_s();
    cj["m_t"] = c.m_t();
    cj["weight"] = c.weight;
    cj["mu_s"] = rowvec_to_json(c.mu_s);
    if (c.m_t() > 0) cj["mu_t"] = rowvec_to_json(c.mu_t);
    cj["mu_st"] = rowvec_to_json(c.mu_st);
    clusters.push_back(std::move(cj));
  }
  mem["clusters"] = std::move(clusters);
  j["memory"] = std::move(mem);

  auto out = open_out(path);
  out << j.dump(1) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  auto in = open_in(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint: parse failure in " + path + ": " + e.what());
  }
  if (j.value("format", "") != "subuda-checkpoint")
    throw ValidationError("checkpoint: unrecognized format in " + path);
  if (j.value("version", 0) != 1)
    throw ValidationError("checkpoint: unsupported version in " + path);

  Checkpoint ck;
  try {
    const auto& enc = j.at("encoder");
    ck.params.layer_dims = enc.at("layer_dims").get<std::vector<Index>>();
    ck.params.has_head = enc.at("has_head").get<bool>();
    ck.params.dropout_rate = enc.at("dropout_rate").get<double>();
    ck.params.relu_on_output = enc.at("relu_on_output").get<bool>();
    for (const auto& layer : enc.at("layers")) {
      ck.params.weights.push_back(json_to_matrix(layer.at("weight")));
      ck.params.biases.push_back(json_to_rowvec(layer.at("bias")));
    }
    if (enc.contains("head_norm")) {
      ck.params.head_norm.mean = json_to_rowvec(enc.at("head_norm").at("mean"));
      ck.params.head_norm.stddev = json_to_rowvec(enc.at("head_norm").at("stddev"));
    }

    const auto& mem = j.at("memory");
    ck.memory.generation = mem.at("generation").get<long>();
    ck.memory.source = json_to_centroids(mem.at("source"));
    ck.memory.target = json_to_centroids(mem.at("target"));
    for (const auto& cj : mem.at("clusters")) {
      SubtypeCluster c;
      c.class_id = cj.at("class_id").get<int>();
      c.weight = cj.at("weight").get<double>();
      c.mu_s = json_to_rowvec(cj.at("mu_s"));
      if (cj.contains("mu_t")) c.mu_t = json_to_rowvec(cj.at("mu_t"));
      c.mu_st = json_to_rowvec(cj.at("mu_st"));
      // Member rows are not persisted; only the sizes survive. -1 entries make
      // accidental indexing loud.
      c.source_rows.assign(cj.at("m_s").get<std::size_t>(), Index{-1});
      c.target_rows.assign(cj.at("m_t").get<std::size_t>(), Index{-1});
      ck.memory.clusters.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint: missing or malformed field in " + path + ": " +
                          e.what());
  }
  return ck;
}

}  // namespace subuda
