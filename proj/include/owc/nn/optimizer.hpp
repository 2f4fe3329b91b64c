#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "owc/errors.hpp"
#include "owc/nn/network.hpp"

namespace owc::nn {

enum class Algorithm { sgd, adam };

template <typename Scalar>
struct OptimizerState {
  Algorithm algorithm = Algorithm::adam;
  std::int64_t step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<VectorX<Scalar>> first_moment;
  std::vector<VectorX<Scalar>> second_moment;
};

/// One update of every trainable tensor. A non-finite gradient rejects the
/// whole step before anything is modified.
template <typename Scalar>
void optimizer_step(NetworkParams<Scalar>& params, const Gradients<Scalar>& grads, OptimizerState<Scalar>& state) {
  if (grads.size() != params.tensors.size()) throw DimensionError("optimizer: gradient count mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!params.tensors[i].trainable) continue;
    if (grads[i].size() != params.tensors[i].value.size()) {
      throw DimensionError("optimizer: gradient shape mismatch for " + params.tensors[i].name);
    }
    if (!grads[i].allFinite()) throw NumericError("optimizer: non-finite gradient for " + params.tensors[i].name);
  }
  if (state.algorithm == Algorithm::adam && state.first_moment.size() != grads.size()) {
    state.first_moment.clear();
    state.second_moment.clear();
    for (const auto& p : params.tensors) {
      state.first_moment.push_back(VectorX<Scalar>::Zero(p.value.size()));
      state.second_moment.push_back(VectorX<Scalar>::Zero(p.value.size()));
    }
  }
  ++state.step;
  const Scalar lr = static_cast<Scalar>(state.learning_rate);
  if (state.algorithm == Algorithm::sgd) {
    for (std::size_t i = 0; i < grads.size(); ++i) {
      if (params.tensors[i].trainable) params.tensors[i].value -= lr * grads[i];
    }
    return;
  }
  const Scalar b1 = static_cast<Scalar>(state.beta1);
  const Scalar b2 = static_cast<Scalar>(state.beta2);
  const Scalar correction1 = Scalar(1) - static_cast<Scalar>(std::pow(state.beta1, static_cast<double>(state.step)));
  const Scalar correction2 = Scalar(1) - static_cast<Scalar>(std::pow(state.beta2, static_cast<double>(state.step)));
  const Scalar eps = static_cast<Scalar>(state.epsilon);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!params.tensors[i].trainable) continue;
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    m = b1 * m + (Scalar(1) - b1) * grads[i];
    v = b2 * v + (Scalar(1) - b2) * grads[i].cwiseAbs2();
    params.tensors[i].value.array() -=
        lr * (m.array() / correction1) / ((v.array() / correction2).sqrt() + eps);
  }
}

}  // namespace owc::nn
