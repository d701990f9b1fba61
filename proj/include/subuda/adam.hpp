#pragma once

#include <vector>

#include "subuda/encoder.hpp"
#include "subuda/types.hpp"

namespace subuda {

// Adaptive-moment estimation with bias correction. Moment arrays mirror the
// encoder parameter layout.
struct OptimizerState {
  std::vector<Matrix> m_w, v_w;
  std::vector<RowVector> m_b, v_b;
  long step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_num = 1e-8;
};

OptimizerState make_optimizer(const EncoderParams& params, double learning_rate);

/// One update step: params move opposite the gradient with bias-corrected
/// first/second moments. Throws ShapeError on mismatched gradients.
void opt_step(OptimizerState& state, EncoderParams& params, const EncoderGrad& grads);

}  // namespace subuda
