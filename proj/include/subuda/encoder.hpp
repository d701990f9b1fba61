#pragma once

#include <vector>

#include "subuda/rng.hpp"
#include "subuda/types.hpp"

namespace subuda {

// Per-feature standardization used inside the reduction head in place of
// batch norm. The statistics are treated as constants by the backward pass;
// the trainer refreshes them from queue-window activations between
// iterations and they stay frozen at evaluation.
struct HeadNorm {
  RowVector mean;  // empty means identity
  RowVector stddev;
  bool identity() const { return mean.size() == 0; }
};

// Fully connected encoder: every layer is fc -> relu. When `has_head` is set
// the last two layers form the dimension-reduction head
// fc -> standardize -> relu -> dropout -> fc -> relu, with inverted dropout
// (train-mode activations are scaled by 1/(1-rate) so eval needs no rescale).
struct EncoderParams {
  std::vector<Index> layer_dims;      // input, hidden..., feature
  std::vector<Matrix> weights;        // weights[l]: layer_dims[l] x layer_dims[l+1]
  std::vector<RowVector> biases;      // biases[l]: 1 x layer_dims[l+1]
  bool has_head = false;
  double dropout_rate = 0.5;
  bool relu_on_output = true;
  HeadNorm head_norm;

  Index num_layers() const { return static_cast<Index>(weights.size()); }
  Index input_dim() const { return layer_dims.front(); }
  Index feature_dim() const { return layer_dims.back(); }
  // Layer whose output is standardized and dropped out (the head's first fc).
  Index head_layer() const { return num_layers() - 2; }
};

struct ForwardCache {
  Matrix input;
  std::vector<Matrix> pre_act;   // post-standardize, pre-relu
  std::vector<Matrix> post_act;  // layer outputs (after relu and dropout)
  std::vector<Matrix> dropout_mask;  // empty when unused; holds 0 or 1/(1-p)
  bool train_mode = false;
};

struct EncoderGrad {
  std::vector<Matrix> weights;
  std::vector<RowVector> biases;
  Matrix inputs;
};

/// Plain MLP with uniform fan-in scaled init and zero biases.
EncoderParams make_encoder(Index input_dim, const std::vector<Index>& hidden_dims,
                           Index feature_dim, Rng& rng);

/// MLP trunk plus the two-layer reduction head.
EncoderParams make_encoder_with_head(Index input_dim, const std::vector<Index>& hidden_dims,
                                     Index head_hidden, Index feature_dim,
                                     double dropout_rate, Rng& rng);

Matrix forward(const EncoderParams& params, const Eigen::Ref<const Matrix>& inputs,
               bool train_mode, Rng& rng, ForwardCache* cache = nullptr);

EncoderGrad backward(const EncoderParams& params, const ForwardCache& cache,
                     const Eigen::Ref<const Matrix>& grad_features);

EncoderGrad zero_grad(const EncoderParams& params);

/// Flattened parameter count (weights + biases).
Index param_count(const EncoderParams& params);

}  // namespace subuda
