#include "subuda/adam.hpp"

#include <cmath>

#include "subuda/error.hpp"

namespace subuda {

OptimizerState make_optimizer(const EncoderParams& params, double learning_rate) {
  OptimizerState s;
  s.learning_rate = learning_rate;
  for (const auto& w : params.weights) {
    s.m_w.push_back(Matrix::Zero(w.rows(), w.cols()));
    s.v_w.push_back(Matrix::Zero(w.rows(), w.cols()));
  }
  for (const auto& b : params.biases) {
    s.m_b.push_back(RowVector::Zero(b.size()));
    s.v_b.push_back(RowVector::Zero(b.size()));
  }
  return s;
}

namespace {

template <typename Arr>
void update_one(Arr& param, Arr& m, Arr& v, const Arr& g, const OptimizerState& s,
                double bc1, double bc2) {
  if (param.rows() != g.rows() || param.cols() != g.cols())
    throw ShapeError("opt_step: gradient shape does not match parameters");
  m = s.beta1 * m + (1.0 - s.beta1) * g;
  v = (s.beta2 * v.array() + (1.0 - s.beta2) * g.array().square()).matrix();
  param.array() -=
      s.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + s.eps_num);
}

}  // namespace

void opt_step(OptimizerState& state, EncoderParams& params, const EncoderGrad& grads) {
  if (grads.weights.size() != params.weights.size() ||
      grads.biases.size() != params.biases.size())
    throw ShapeError("opt_step: gradient layer count does not match parameters");
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  for (std::size_t l = 0; l < params.weights.size(); ++l)
    update_one(params.weights[l], state.m_w[l], state.v_w[l], grads.weights[l], state, bc1, bc2);
  for (std::size_t l = 0; l < params.biases.size(); ++l)
    update_one(params.biases[l], state.m_b[l], state.v_b[l], grads.biases[l], state, bc1, bc2);
}

}  // namespace subuda
