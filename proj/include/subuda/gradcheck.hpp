#pragma once

#include <functional>
#include <ostream>
#include <string>

#include "subuda/encoder.hpp"

namespace subuda {

/// Central finite differences over every encoder parameter. `loss_fn` must
/// re-evaluate the loss from the current parameter values with any discrete
/// structure (labels, memberships, weights) held fixed. The returned score is
/// max over parameters of |analytic - fd| / max(|analytic|, |fd|, 1e-4); the
/// denominator floor turns vanishing components into an absolute check.
double finite_diff_max_rel_err(EncoderParams& params, const EncoderGrad& analytic,
                               const std::function<double()>& loss_fn, double h = 1e-5);

/// Elementwise sum of two gradients (same layout).
EncoderGrad add_grads(const EncoderGrad& a, const EncoderGrad& b);

/// The finite-difference suites behind the `gradcheck` CLI subcommand: the
/// class CE, class matching, weighted subtype compactness, and composed
/// total losses through a 2-hidden-layer encoder, plus the reduction-head
/// path. Prints one line per suite; returns true when all pass (< 1e-4).
bool run_gradcheck_suites(std::uint64_t seed, std::ostream& out);

}  // namespace subuda
