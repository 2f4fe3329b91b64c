#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "owc/errors.hpp"
#include "owc/tensor.hpp"

namespace owc::nn {

inline constexpr double kLogFloor = 1e-12;

/// -ln(posterior[label]), with the probability floored at 1e-12.
template <typename Derived>
double cross_entropy_loss(const Eigen::MatrixBase<Derived>& posterior, Index label) {
  if (label < 0 || label >= posterior.size()) {
    throw ArgumentError("cross_entropy_loss: label " + std::to_string(label) + " outside [0, " +
                        std::to_string(posterior.size()) + ")");
  }
  const double total = static_cast<double>(posterior.sum());
  if (std::abs(total - 1.0) > 1e-6 || posterior.minCoeff() < 0 || posterior.maxCoeff() > 1) {
    throw ArgumentError("cross_entropy_loss: posterior is not a probability vector");
  }
  return -std::log(std::max(static_cast<double>(posterior(label)), kLogFloor));
}

template <typename Scalar>
struct LossWithGradient {
  double value = 0.0;
  MatrixX<Scalar> grad;  // same shape as the loss input
};

/// Mean cross-entropy over the columns of `posterior` (one per sample) and
/// its gradient with respect to the posterior.
template <typename Scalar>
LossWithGradient<Scalar> cross_entropy_batch(const MatrixX<Scalar>& posterior, std::span<const int> labels) {
  if (static_cast<Index>(labels.size()) != posterior.cols()) throw DimensionError("cross_entropy: label count");
  LossWithGradient<Scalar> out{0.0, MatrixX<Scalar>::Zero(posterior.rows(), posterior.cols())};
  const double scale = 1.0 / static_cast<double>(posterior.cols());
  for (Index b = 0; b < posterior.cols(); ++b) {
    out.value += cross_entropy_loss(posterior.col(b), labels[static_cast<std::size_t>(b)]) * scale;
    const double p = std::max(static_cast<double>(posterior(labels[static_cast<std::size_t>(b)], b)), kLogFloor);
    out.grad(labels[static_cast<std::size_t>(b)], b) = static_cast<Scalar>(-scale / p);
  }
  return out;
}

/// Image-sensor dimming regularizer lambda * ||mean_b S_b - D||^2 over a
/// codebook given as (entries x M) columns. The gradient reaches every
/// codeword through the mean.
template <typename Scalar>
LossWithGradient<Scalar> dimming_penalty(const MatrixX<Scalar>& codewords, const VectorX<Scalar>& target,
                                         double lambda) {
  if (lambda < 0) throw ArgumentError("dimming_penalty: lambda must be non-negative");
  if (target.size() != codewords.rows()) throw DimensionError("dimming_penalty: target shape mismatch");
  const VectorX<Scalar> diff = codewords.rowwise().mean() - target;
  LossWithGradient<Scalar> out;
  out.value = lambda * static_cast<double>(diff.squaredNorm());
  const Scalar g = static_cast<Scalar>(2.0 * lambda / static_cast<double>(codewords.cols()));
  out.grad = (g * diff).replicate(1, codewords.cols());
  return out;
}

/// Single-LED weight regularizer lambda * (sum_j s_bj - d)^2, averaged over
/// the codewords (columns).
template <typename Scalar>
LossWithGradient<Scalar> weight_penalty(const MatrixX<Scalar>& codewords, double target_weight, double lambda) {
  if (lambda < 0) throw ArgumentError("weight_penalty: lambda must be non-negative");
  const auto excess = (codewords.colwise().sum().array() - static_cast<Scalar>(target_weight)).eval();
  LossWithGradient<Scalar> out;
  out.value = lambda * static_cast<double>(excess.square().mean());
  const Scalar g = static_cast<Scalar>(2.0 * lambda / static_cast<double>(codewords.cols()));
  out.grad = (g * excess).matrix().replicate(codewords.rows(), 1);
  return out;
}

}  // namespace owc::nn
