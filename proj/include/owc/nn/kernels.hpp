#pragma once

// Forward and backward kernels for the five layer kinds. Batches are passed
// as (features x batch) matrices, one column per sample; spatial samples are
// laid out channel-major (c * H * W + y * W + x).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "owc/errors.hpp"
#include "owc/nn/layer_spec.hpp"
#include "owc/tensor.hpp"

namespace owc::nn {

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

// ---------------------------------------------------------------- dense

/// y = W x + b for every column of x.
template <typename DerivedX, typename DerivedW, typename DerivedB>
MatrixX<typename DerivedX::Scalar> dense_forward(const Eigen::MatrixBase<DerivedX>& x,
                                                 const Eigen::MatrixBase<DerivedW>& weights,
                                                 const Eigen::MatrixBase<DerivedB>& bias) {
  if (weights.cols() != x.rows() || bias.size() != weights.rows()) {
    throw DimensionError("dense: W is " + std::to_string(weights.rows()) + "x" + std::to_string(weights.cols()) +
                         ", x has " + std::to_string(x.rows()) + " rows, b has " + std::to_string(bias.size()));
  }
  if (!x.allFinite()) throw NumericError("dense: non-finite input");
  MatrixX<typename DerivedX::Scalar> y = weights * x;
  y.colwise() += bias;
  return y;
}

// ---------------------------------------------------------------- conv2d

/// Gathers the k x k neighbourhoods of one channel-major sample into a
/// (H*W) x (C*k*k) matrix; out-of-image taps are zero.
template <typename Scalar>
void im2col(const Scalar* sample, const Conv2dSpec& s, MatrixX<Scalar>& cols) {
  const Index hw = s.height * s.width;
  const Index k = s.kernel;
  const Index r = k / 2;
  cols.resize(hw, s.in_channels * k * k);
  for (Index c = 0; c < s.in_channels; ++c) {
    const Scalar* plane = sample + c * hw;
    for (Index dy = 0; dy < k; ++dy) {
      for (Index dx = 0; dx < k; ++dx) {
        Scalar* col = cols.col((c * k + dy) * k + dx).data();
        const Index x0 = std::max<Index>(0, r - dx);
        const Index x1 = std::min<Index>(s.width, s.width + r - dx);
        for (Index y = 0; y < s.height; ++y) {
          Scalar* row = col + y * s.width;
          const Index sy = y + dy - r;
          if (sy < 0 || sy >= s.height || x0 >= x1) {
            std::fill(row, row + s.width, Scalar(0));
            continue;
          }
          std::fill(row, row + x0, Scalar(0));
          std::copy(plane + sy * s.width + x0 + dx - r, plane + sy * s.width + x1 + dx - r, row + x0);
          std::fill(row + x1, row + s.width, Scalar(0));
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters column gradients back onto the sample.
template <typename Scalar>
void col2im_add(const MatrixX<Scalar>& cols, const Conv2dSpec& s, Scalar* sample) {
  const Index hw = s.height * s.width;
  const Index k = s.kernel;
  const Index r = k / 2;
  for (Index c = 0; c < s.in_channels; ++c) {
    Scalar* plane = sample + c * hw;
    for (Index dy = 0; dy < k; ++dy) {
      for (Index dx = 0; dx < k; ++dx) {
        const Scalar* col = cols.col((c * k + dy) * k + dx).data();
        const Index x0 = std::max<Index>(0, r - dx);
        const Index x1 = std::min<Index>(s.width, s.width + r - dx);
        for (Index y = 0; y < s.height; ++y) {
          const Index sy = y + dy - r;
          if (sy < 0 || sy >= s.height) continue;
          Scalar* dst = plane + sy * s.width + dx - r;
          const Scalar* src = col + y * s.width;
          for (Index x = x0; x < x1; ++x) dst[x] += src[x];
        }
      }
    }
  }
}

/// Same-padded cross-correlation plus per-channel bias. `filters` is the
/// flat [C_out, C_in, k, k] tensor viewed as a (C_in*k*k) x C_out matrix.
template <typename DerivedX, typename DerivedF, typename DerivedB>
MatrixX<typename DerivedX::Scalar> conv2d_forward(const Eigen::MatrixBase<DerivedX>& x,
                                                  const Eigen::MatrixBase<DerivedF>& filters,
                                                  const Eigen::MatrixBase<DerivedB>& bias, const Conv2dSpec& s) {
  using Scalar = typename DerivedX::Scalar;
  const Index hw = s.height * s.width;
  if (x.rows() != s.in_channels * hw) {
    throw DimensionError("conv2d: input has " + std::to_string(x.rows()) + " elements per sample, expected " +
                         std::to_string(s.in_channels) + " channels of " + std::to_string(hw));
  }
  if (filters.rows() != s.in_channels * s.kernel * s.kernel || filters.cols() != s.out_channels ||
      bias.size() != s.out_channels) {
    throw DimensionError("conv2d: filter bank does not match channel counts");
  }
  const Eigen::Ref<const MatrixX<Scalar>> xs(x);
  const Eigen::Ref<const MatrixX<Scalar>> w(filters);
  MatrixX<Scalar> y(s.out_channels * hw, xs.cols());
  MatrixX<Scalar> cols;
  for (Index b = 0; b < xs.cols(); ++b) {
    im2col(xs.col(b).data(), s, cols);
    Eigen::Map<MatrixX<Scalar>> out(y.col(b).data(), hw, s.out_channels);
    out.noalias() = cols * w;
    out.rowwise() += bias.transpose().template cast<Scalar>();
  }
  return y;
}

/// Accumulates filter and bias gradients and returns the input gradient.
template <typename Scalar>
MatrixX<Scalar> conv2d_backward(const MatrixX<Scalar>& x, const Eigen::Ref<const MatrixX<Scalar>>& filters,
                                const MatrixX<Scalar>& grad_out, const Conv2dSpec& s,
                                Eigen::Ref<MatrixX<Scalar>> grad_filters, Eigen::Ref<VectorX<Scalar>> grad_bias) {
  const Index hw = s.height * s.width;
  MatrixX<Scalar> grad_in = MatrixX<Scalar>::Zero(x.rows(), x.cols());
  MatrixX<Scalar> cols;
  MatrixX<Scalar> grad_cols;
  for (Index b = 0; b < x.cols(); ++b) {
    Eigen::Map<const MatrixX<Scalar>> g(grad_out.col(b).data(), hw, s.out_channels);
    im2col(x.col(b).data(), s, cols);
    grad_filters.noalias() += cols.transpose() * g;
    grad_bias += g.colwise().sum().transpose();
    grad_cols.noalias() = g * filters.transpose();
    col2im_add(grad_cols, s, grad_in.col(b).data());
  }
  return grad_in;
}

// ---------------------------------------------------------------- maxpool

/// Block maximum over non-overlapping pool x pool windows. `argmax` receives,
/// per output element and sample, the in-sample index of the winning input;
/// ties go to the first element in row-major order.
template <typename DerivedX>
MatrixX<typename DerivedX::Scalar> maxpool2d_forward(const Eigen::MatrixBase<DerivedX>& x, const MaxPool2dSpec& s,
                                                     std::vector<std::int32_t>* argmax = nullptr) {
  using Scalar = typename DerivedX::Scalar;
  if (s.height % s.pool != 0 || s.width % s.pool != 0) {
    throw DimensionError("maxpool2d: pool " + std::to_string(s.pool) + " does not divide " +
                         std::to_string(s.height) + "x" + std::to_string(s.width));
  }
  if (x.rows() != s.channels * s.height * s.width) throw DimensionError("maxpool2d: input size mismatch");
  const Index oh = s.height / s.pool;
  const Index ow = s.width / s.pool;
  const Index out_rows = s.channels * oh * ow;
  MatrixX<Scalar> y(out_rows, x.cols());
  if (argmax) argmax->assign(static_cast<std::size_t>(out_rows * x.cols()), 0);
  for (Index b = 0; b < x.cols(); ++b) {
    for (Index c = 0; c < s.channels; ++c) {
      const Index plane = c * s.height * s.width;
      for (Index oy = 0; oy < oh; ++oy) {
        for (Index ox = 0; ox < ow; ++ox) {
          Index best = plane + (oy * s.pool) * s.width + ox * s.pool;
          Scalar best_value = x(best, b);
          for (Index py = 0; py < s.pool; ++py) {
            for (Index px = 0; px < s.pool; ++px) {
              const Index idx = plane + (oy * s.pool + py) * s.width + ox * s.pool + px;
              if (x(idx, b) > best_value) {
                best_value = x(idx, b);
                best = idx;
              }
            }
          }
          const Index o = (c * oh + oy) * ow + ox;
          y(o, b) = best_value;
          if (argmax) (*argmax)[static_cast<std::size_t>(b * out_rows + o)] = static_cast<std::int32_t>(best);
        }
      }
    }
  }
  return y;
}

template <typename Scalar>
MatrixX<Scalar> maxpool2d_backward(const MatrixX<Scalar>& grad_out, const std::vector<std::int32_t>& argmax,
                                   Index input_rows) {
  MatrixX<Scalar> grad_in = MatrixX<Scalar>::Zero(input_rows, grad_out.cols());
  for (Index b = 0; b < grad_out.cols(); ++b) {
    for (Index o = 0; o < grad_out.rows(); ++o) {
      grad_in(argmax[static_cast<std::size_t>(b * grad_out.rows() + o)], b) += grad_out(o, b);
    }
  }
  return grad_in;
}

// ---------------------------------------------------------------- batchnorm

template <typename Scalar>
struct BatchNormCache {
  MatrixX<Scalar> normalized;  // x-hat
  VectorX<Scalar> inv_std;     // per channel
};

/// Train mode normalizes with batch statistics (biased variance) and folds
/// them into the running estimates; infer mode uses the running estimates.
template <typename Scalar>
MatrixX<Scalar> batchnorm_apply(const MatrixX<Scalar>& x, const BatchNormSpec& s, const VectorX<Scalar>& gamma,
                                const VectorX<Scalar>& beta, VectorX<Scalar>& running_mean,
                                VectorX<Scalar>& running_var, Mode mode, BatchNormCache<Scalar>* cache = nullptr,
                                double momentum = kBatchNormMomentum) {
  if (x.rows() != s.channels * s.spatial) throw DimensionError("batchnorm: input size mismatch");
  if (mode == Mode::train && x.cols() < 2) {
    throw ConfigError("batchnorm: train mode needs a batch of at least 2, got " + std::to_string(x.cols()));
  }
  const Scalar eps = static_cast<Scalar>(kBatchNormEpsilon);
  MatrixX<Scalar> y(x.rows(), x.cols());
  if (cache) {
    cache->normalized.resize(x.rows(), x.cols());
    cache->inv_std.resize(s.channels);
  }
  const Scalar count = static_cast<Scalar>(s.spatial * x.cols());
  for (Index c = 0; c < s.channels; ++c) {
    auto block = x.middleRows(c * s.spatial, s.spatial);
    Scalar mean;
    Scalar var;
    if (mode == Mode::train) {
      mean = block.sum() / count;
      var = (block.array() - mean).square().sum() / count;
      const Scalar m = static_cast<Scalar>(momentum);
      running_mean[c] = m * running_mean[c] + (Scalar(1) - m) * mean;
      running_var[c] = m * running_var[c] + (Scalar(1) - m) * var;
    } else {
      mean = running_mean[c];
      var = running_var[c];
    }
    const Scalar inv_std = Scalar(1) / std::sqrt(var + eps);
    auto out = y.middleRows(c * s.spatial, s.spatial);
    out = ((block.array() - mean) * inv_std).matrix();
    if (cache) {
      cache->normalized.middleRows(c * s.spatial, s.spatial) = out;
      cache->inv_std[c] = inv_std;
    }
    out = (out.array() * gamma[c] + beta[c]).matrix();
  }
  return y;
}

template <typename Scalar>
MatrixX<Scalar> batchnorm_infer(const MatrixX<Scalar>& x, const BatchNormSpec& s, const VectorX<Scalar>& gamma,
                                const VectorX<Scalar>& beta, const VectorX<Scalar>& running_mean,
                                const VectorX<Scalar>& running_var) {
  if (x.rows() != s.channels * s.spatial) throw DimensionError("batchnorm: input size mismatch");
  MatrixX<Scalar> y(x.rows(), x.cols());
  for (Index c = 0; c < s.channels; ++c) {
    const Scalar scale = gamma[c] / std::sqrt(running_var[c] + static_cast<Scalar>(kBatchNormEpsilon));
    y.middleRows(c * s.spatial, s.spatial) =
        ((x.middleRows(c * s.spatial, s.spatial).array() - running_mean[c]) * scale + beta[c]).matrix();
  }
  return y;
}

/// Backward pass through train-mode batch statistics.
template <typename Scalar>
MatrixX<Scalar> batchnorm_backward(const MatrixX<Scalar>& grad_out, const BatchNormSpec& s,
                                   const VectorX<Scalar>& gamma, const BatchNormCache<Scalar>& cache,
                                   Eigen::Ref<VectorX<Scalar>> grad_gamma, Eigen::Ref<VectorX<Scalar>> grad_beta) {
  MatrixX<Scalar> grad_in(grad_out.rows(), grad_out.cols());
  const Scalar count = static_cast<Scalar>(s.spatial * grad_out.cols());
  for (Index c = 0; c < s.channels; ++c) {
    auto g = grad_out.middleRows(c * s.spatial, s.spatial).array();
    auto xhat = cache.normalized.middleRows(c * s.spatial, s.spatial).array();
    const Scalar sum_g = g.sum();
    const Scalar sum_gx = (g * xhat).sum();
    grad_gamma[c] += sum_gx;
    grad_beta[c] += sum_g;
    grad_in.middleRows(c * s.spatial, s.spatial) =
        ((gamma[c] * cache.inv_std[c] / count) * (count * g - sum_g - xhat * sum_gx)).matrix();
  }
  return grad_in;
}

// ---------------------------------------------------------------- activations

template <typename Scalar>
Scalar param_sigmoid(Scalar z, Scalar delta) {
  const Scalar t = delta * z;
  if (t >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-t));
  const Scalar e = std::exp(t);
  return e / (Scalar(1) + e);
}

/// Elementwise activation, or column-wise softmax (max-subtracted).
template <typename Derived>
MatrixX<typename Derived::Scalar> activation_apply(const Eigen::MatrixBase<Derived>& z, const ActivationSpec& a) {
  using Scalar = typename Derived::Scalar;
  if (a.kind == Activation::param_sigmoid && !(a.delta > 0.0)) {
    throw ConfigError("param_sigmoid requires delta > 0");
  }
  MatrixX<Scalar> y(z.rows(), z.cols());
  switch (a.kind) {
    case Activation::relu:
      y = z.cwiseMax(Scalar(0));
      break;
    case Activation::sigmoid:
      y = z.unaryExpr([](Scalar v) { return param_sigmoid(v, Scalar(1)); });
      break;
    case Activation::param_sigmoid: {
      const Scalar d = static_cast<Scalar>(a.delta);
      y = z.unaryExpr([d](Scalar v) { return param_sigmoid(v, d); });
      break;
    }
    case Activation::step:
      y = z.unaryExpr([](Scalar v) { return v >= Scalar(0) ? Scalar(1) : Scalar(0); });
      break;
    case Activation::softmax:
      for (Index b = 0; b < z.cols(); ++b) {
        auto col = y.col(b);
        col = (z.col(b).array() - z.col(b).maxCoeff()).exp().matrix();
        col /= col.sum();
      }
      break;
  }
  return y;
}

/// Gradient through an activation given its input z and output y.
template <typename Scalar>
MatrixX<Scalar> activation_backward(const MatrixX<Scalar>& grad_out, const MatrixX<Scalar>& z,
                                    const MatrixX<Scalar>& y, const ActivationSpec& a) {
  switch (a.kind) {
    case Activation::relu:
      return (z.array() > Scalar(0)).select(grad_out, Scalar(0));
    case Activation::sigmoid:
      return (grad_out.array() * y.array() * (Scalar(1) - y.array())).matrix();
    case Activation::param_sigmoid:
      return (static_cast<Scalar>(a.delta) * grad_out.array() * y.array() * (Scalar(1) - y.array())).matrix();
    case Activation::step:
      return MatrixX<Scalar>::Zero(grad_out.rows(), grad_out.cols());
    case Activation::softmax: {
      MatrixX<Scalar> g(grad_out.rows(), grad_out.cols());
      for (Index b = 0; b < g.cols(); ++b) {
        const Scalar dot = grad_out.col(b).dot(y.col(b));
        g.col(b) = (y.col(b).array() * (grad_out.col(b).array() - dot)).matrix();
      }
      return g;
    }
  }
  return grad_out;
}

}  // namespace owc::nn
