#include "subuda/encoder.hpp"

#include <cmath>
#include <string>

#include "subuda/error.hpp"

namespace subuda {

namespace {

void init_layers(EncoderParams& p, Rng& rng) {
  const auto& dims = p.layer_dims;
  p.weights.resize(dims.size() - 1);
  p.biases.resize(dims.size() - 1);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    // He-uniform: variance 2/fan_in keeps signal geometry through the relus.
    const double scale = std::sqrt(6.0 / static_cast<double>(dims[l]));
    Matrix w(dims[l], dims[l + 1]);
    for (Index i = 0; i < w.rows(); ++i)
      for (Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-scale, scale);
    p.weights[l] = std::move(w);
    p.biases[l] = RowVector::Zero(dims[l + 1]);
  }
}

}  // namespace

EncoderParams make_encoder(Index input_dim, const std::vector<Index>& hidden_dims,
                           Index feature_dim, Rng& rng) {
  EncoderParams p;
  p.layer_dims.push_back(input_dim);
  p.layer_dims.insert(p.layer_dims.end(), hidden_dims.begin(), hidden_dims.end());
  p.layer_dims.push_back(feature_dim);
  p.has_head = false;
  init_layers(p, rng);
  return p;
}

EncoderParams make_encoder_with_head(Index input_dim, const std::vector<Index>& hidden_dims,
                                     Index head_hidden, Index feature_dim,
                                     double dropout_rate, Rng& rng) {
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw ValidationError("dropout_rate must be in [0, 1)");
  EncoderParams p;
  p.layer_dims.push_back(input_dim);
  p.layer_dims.insert(p.layer_dims.end(), hidden_dims.begin(), hidden_dims.end());
  p.layer_dims.push_back(head_hidden);
  p.layer_dims.push_back(feature_dim);
  p.has_head = true;
  p.dropout_rate = dropout_rate;
  init_layers(p, rng);
  return p;
}

Matrix forward(const EncoderParams& params, const Eigen::Ref<const Matrix>& inputs,
               bool train_mode, Rng& rng, ForwardCache* cache) {
  if (inputs.cols() != params.input_dim())
    throw ShapeError("forward: input has " + std::to_string(inputs.cols()) +
                     " columns, encoder expects " + std::to_string(params.input_dim()));
  if (!all_finite(inputs)) throw ValidationError("forward: non-finite input");

  const Index num_layers = params.num_layers();
  if (cache) {
    cache->input = inputs;
    cache->pre_act.assign(num_layers, Matrix());
    cache->post_act.assign(num_layers, Matrix());
    cache->dropout_mask.assign(num_layers, Matrix());
    cache->train_mode = train_mode;
  }

  Matrix a = inputs;
  for (Index l = 0; l < num_layers; ++l) {
    Matrix z = a * params.weights[l];
    z.rowwise() += params.biases[l];

    const bool head_layer = params.has_head && l == params.head_layer();
    if (head_layer && !params.head_norm.identity()) {
      if (params.head_norm.mean.size() != z.cols())
        throw ShapeError("forward: head_norm width mismatch");
      z.rowwise() -= params.head_norm.mean;
      z.array().rowwise() /= params.head_norm.stddev.array();
    }
    if (cache) cache->pre_act[l] = z;

    const bool last = l == num_layers - 1;
    Matrix h = (last && !params.relu_on_output) ? z : z.cwiseMax(0.0);

    if (head_layer && train_mode && params.dropout_rate > 0.0) {
      const double keep = 1.0 - params.dropout_rate;
      Matrix mask(h.rows(), h.cols());
      for (Index i = 0; i < mask.rows(); ++i)
        for (Index j = 0; j < mask.cols(); ++j)
          mask(i, j) = rng.uniform() < keep ? 1.0 / keep : 0.0;
      h.array() *= mask.array();
      if (cache) cache->dropout_mask[l] = std::move(mask);
    }

    if (cache) cache->post_act[l] = h;
    a = std::move(h);
  }
  if (!all_finite(a)) throw ValidationError("forward: non-finite output");
  return a;
}

EncoderGrad backward(const EncoderParams& params, const ForwardCache& cache,
                     const Eigen::Ref<const Matrix>& grad_features) {
  const Index num_layers = params.num_layers();
  if (static_cast<Index>(cache.post_act.size()) != num_layers ||
      cache.input.cols() != params.input_dim())
    throw UsageError("backward: cache does not match encoder parameters");
  if (grad_features.rows() != cache.input.rows() ||
      grad_features.cols() != params.feature_dim())
    throw UsageError("backward: feature gradient shape does not match cache");

  EncoderGrad g;
  g.weights.resize(num_layers);
  g.biases.resize(num_layers);

  Matrix delta = grad_features;
  for (Index l = num_layers - 1; l >= 0; --l) {
    if (cache.dropout_mask[l].size() > 0) delta.array() *= cache.dropout_mask[l].array();

    const bool last = l == num_layers - 1;
    if (!(last && !params.relu_on_output))
      delta.array() *= (cache.pre_act[l].array() > 0.0).cast<Scalar>();

    if (params.has_head && l == params.head_layer() && !params.head_norm.identity())
      delta.array().rowwise() /= params.head_norm.stddev.array();

    const Matrix& layer_input = l == 0 ? cache.input : cache.post_act[l - 1];
    g.weights[l] = layer_input.transpose() * delta;
    g.biases[l] = delta.colwise().sum();
    delta = delta * params.weights[l].transpose();
  }
  g.inputs = std::move(delta);
  return g;
}

EncoderGrad zero_grad(const EncoderParams& params) {
  EncoderGrad g;
  g.weights.reserve(params.weights.size());
  g.biases.reserve(params.biases.size());
  for (const auto& w : params.weights) g.weights.push_back(Matrix::Zero(w.rows(), w.cols()));
  for (const auto& b : params.biases) g.biases.push_back(RowVector::Zero(b.size()));
  return g;
}

Index param_count(const EncoderParams& params) {
  Index n = 0;
  for (const auto& w : params.weights) n += w.size();
  for (const auto& b : params.biases) n += b.size();
  return n;
}

}  // namespace subuda
