#include <doctest.h>

#include "subuda/adam.hpp"
#include "subuda/error.hpp"

using namespace subuda;

namespace {

EncoderParams tiny_params(double w0) {
  Rng rng(1);
  EncoderParams p = make_encoder(1, {}, 2, rng);
  p.weights[0](0, 0) = w0;
  p.weights[0](0, 1) = -w0;
  return p;
}

}  // namespace

TEST_CASE("zero gradients leave parameters and moments untouched") {
  EncoderParams p = tiny_params(0.5);
  const Matrix before = p.weights[0];
  OptimizerState s = make_optimizer(p, 0.1);
  EncoderGrad g = zero_grad(p);
  opt_step(s, p, g);
  CHECK((p.weights[0] - before).cwiseAbs().maxCoeff() == 0.0);
  CHECK(s.m_w[0].cwiseAbs().maxCoeff() == 0.0);
  CHECK(s.v_w[0].cwiseAbs().maxCoeff() == 0.0);
  CHECK(s.step_count == 1);
}

TEST_CASE("first step moves by about the learning rate against the gradient") {
  EncoderParams p = tiny_params(1.0);
  OptimizerState s = make_optimizer(p, 0.1);
  EncoderGrad g = zero_grad(p);
  g.weights[0](0, 0) = 0.3;  // any positive gradient: bias correction makes the
                             // first step ~unit magnitude
  opt_step(s, p, g);
  CHECK(p.weights[0](0, 0) == doctest::Approx(1.0 - 0.1).epsilon(1e-6));
}

TEST_CASE("opposite gradients give symmetric opposite updates") {
  EncoderParams p = tiny_params(0.0);
  OptimizerState s = make_optimizer(p, 0.05);
  EncoderGrad g = zero_grad(p);
  g.weights[0](0, 0) = 0.7;
  g.weights[0](0, 1) = -0.7;
  opt_step(s, p, g);
  CHECK(p.weights[0](0, 0) == doctest::Approx(-p.weights[0](0, 1)).epsilon(1e-12));
  CHECK(p.weights[0](0, 0) < 0.0);
}

TEST_CASE("step count increases by one per step") {
  EncoderParams p = tiny_params(0.0);
  OptimizerState s = make_optimizer(p, 0.05);
  EncoderGrad g = zero_grad(p);
  for (long i = 1; i <= 5; ++i) {
    opt_step(s, p, g);
    CHECK(s.step_count == i);
  }
}

TEST_CASE("shape mismatch is rejected") {
  EncoderParams p = tiny_params(0.0);
  OptimizerState s = make_optimizer(p, 0.05);
  Rng rng(2);
  EncoderParams other = make_encoder(3, {}, 2, rng);
  EncoderGrad g = zero_grad(other);
  CHECK_THROWS_AS(opt_step(s, p, g), ShapeError);
}

TEST_CASE("moment arrays mirror the parameter shapes") {
  Rng rng(3);
  EncoderParams p = make_encoder(4, {7, 5}, 3, rng);
  OptimizerState s = make_optimizer(p, 0.01);
  REQUIRE(s.m_w.size() == p.weights.size());
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    CHECK(s.m_w[l].rows() == p.weights[l].rows());
    CHECK(s.m_w[l].cols() == p.weights[l].cols());
    CHECK(s.m_b[l].size() == p.biases[l].size());
  }
}
