#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "owc/nn/network.hpp"
#include "owc/random.hpp"

namespace owc::nn {

struct GradCheckReport {
  double max_relative_error = 0.0;
  Index checked = 0;
  Index skipped_nonsmooth = 0;  // coordinates whose stencil crossed a ReLU/maxpool kink
  std::string worst;            // "<probe>[<index>] analytic=<a> numeric=<n>"

  bool passed(double tolerance = 1e-4) const { return checked > 0 && max_relative_error < tolerance; }
};

/// A coordinate block to probe: the live values (perturbed in place and
/// restored) and the analytic gradient computed at the unperturbed point.
struct GradientProbe {
  std::string name;
  VectorX<double>* values = nullptr;
  VectorX<double> analytic;
};

/// Loss at the current parameter values plus the piecewise-linear pattern
/// signature of that evaluation.
struct Evaluation {
  double loss = 0.0;
  std::uint64_t signature = 0;
};

using Objective = std::function<Evaluation()>;

/// Central differences (f(x+h) - f(x-h)) / 2h on up to `samples_per_probe`
/// randomly chosen coordinates of each probe. Relative error uses the
/// denominator max(|a|, |n|, 1e-8). Coordinates whose +h or -h evaluation
/// changes the pattern signature are skipped, since the difference quotient
/// straddles a kink there.
GradCheckReport finite_difference_check(const Objective& objective, std::span<GradientProbe> probes, double step,
                                        Index samples_per_probe, Rng& rng);

/// Checks a single network on input `x`. Networks ending in softmax use the
/// mean cross-entropy against `labels` (random when empty); others use a
/// fixed random linear functional of the output. Probes every parameter
/// tensor and the input.
GradCheckReport grad_check(Network<double>& net, const Tensor<double>& x, double step, Index samples_per_probe,
                           Rng& rng, std::vector<int> labels = {});

}  // namespace owc::nn
