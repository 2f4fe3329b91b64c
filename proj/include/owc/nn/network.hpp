#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "owc/nn/kernels.hpp"
#include "owc/nn/layer_spec.hpp"
#include "owc/random.hpp"
#include "owc/tensor.hpp"

namespace owc::nn {

template <typename Scalar>
struct Param {
  std::string name;
  Shape shape;
  VectorX<Scalar> value;
  bool trainable = true;
};

/// Ordered parameter tensors of a layer stack: dense/conv contribute
/// (weight, bias); batchnorm contributes (gamma, beta, running_mean,
/// running_var), the last two non-trainable.
template <typename Scalar>
struct NetworkParams {
  std::vector<Param<Scalar>> tensors;

  Index trainable_count() const {
    Index n = 0;
    for (const auto& p : tensors) n += p.trainable ? p.value.size() : 0;
    return n;
  }
};

template <typename Scalar>
using Gradients = std::vector<VectorX<Scalar>>;

/// A feed-forward stack of layers with reverse-mode differentiation.
/// forward(Mode::train) records per-layer caches for backward(); infer() is
/// const and leaves no trace, so one network can serve many threads.
template <typename Scalar_>
class Network {
 public:
  using Scalar = Scalar_;

  Network() = default;

  Network(std::vector<LayerSpec> layers, Index input_size) : layers_(std::move(layers)), input_size_(input_size) {
    output_shape_ = validate_stack(layers_, input_size_);
    first_param_.reserve(layers_.size());
    for (const auto& layer : layers_) {
      first_param_.push_back(params_.tensors.size());
      allocate(layer);
    }
    grads_.resize(params_.tensors.size());
    zero_gradients();
  }

  const std::vector<LayerSpec>& layers() const { return layers_; }
  Index input_size() const { return input_size_; }
  const Shape& output_shape() const { return output_shape_; }
  Index output_size() const { return shape_size(output_shape_); }

  NetworkParams<Scalar>& params() { return params_; }
  const NetworkParams<Scalar>& params() const { return params_; }
  const Gradients<Scalar>& gradients() const { return grads_; }
  Gradients<Scalar>& gradients() { return grads_; }

  /// He-uniform weights (limit sqrt(6 / fan_in)), zero biases, unit gamma,
  /// zero beta, running statistics (0, 1).
  void initialize(Rng& rng) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const std::size_t p = first_param_[i];
      if (const auto* d = std::get_if<DenseSpec>(&layers_[i])) {
        fill_uniform(params_.tensors[p].value, std::sqrt(6.0 / static_cast<double>(d->in)), rng);
        params_.tensors[p + 1].value.setZero();
      } else if (const auto* c = std::get_if<Conv2dSpec>(&layers_[i])) {
        const double fan_in = static_cast<double>(c->in_channels * c->kernel * c->kernel);
        fill_uniform(params_.tensors[p].value, std::sqrt(6.0 / fan_in), rng);
        params_.tensors[p + 1].value.setZero();
      } else if (std::holds_alternative<BatchNormSpec>(layers_[i])) {
        params_.tensors[p].value.setOnes();
        params_.tensors[p + 1].value.setZero();
        params_.tensors[p + 2].value.setZero();
        params_.tensors[p + 3].value.setOnes();
      }
    }
  }

  /// Sets the slope of every param_sigmoid activation.
  void set_delta(double delta) {
    if (!(delta > 0.0)) throw ConfigError("param_sigmoid requires delta > 0");
    for (auto& layer : layers_) {
      if (auto* a = std::get_if<ActivationSpec>(&layer); a && a->kind == Activation::param_sigmoid) a->delta = delta;
    }
  }

  std::optional<double> delta() const {
    for (const auto& layer : layers_) {
      if (const auto* a = std::get_if<ActivationSpec>(&layer); a && a->kind == Activation::param_sigmoid) {
        return a->delta;
      }
    }
    return std::nullopt;
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode mode) {
    if (mode == Mode::infer) return infer(x);
    return train_forward(x, kBatchNormMomentum);
  }

  /// Train-mode pass that overwrites the batchnorm running statistics with
  /// the statistics of `x`, so that infer() on the same batch reproduces the
  /// train-mode output.
  Tensor<Scalar> calibrate_batchnorm(const Tensor<Scalar>& x) { return train_forward(x, 0.0); }

  Tensor<Scalar> infer(const Tensor<Scalar>& x) const {
    check_input(x);
    MatrixX<Scalar> h = x.samples();
    for (std::size_t i = 0; i < layers_.size(); ++i) h = apply(i, h, nullptr);
    return Tensor<Scalar>::from_samples(h, output_shape_);
  }

  /// Reverse pass for the last train-mode forward. Parameter gradients are
  /// overwritten; the returned tensor is the gradient with respect to the
  /// network input.
  Tensor<Scalar> backward(const Tensor<Scalar>& grad_output) {
    if (!has_cache_) throw StateError("backward() requires a preceding train-mode forward()");
    const Index batch = acts_.front().cols();
    if (grad_output.size() != output_size() * batch) throw DimensionError("backward: gradient shape mismatch");
    zero_gradients();
    MatrixX<Scalar> g = grad_output.samples();
    for (std::size_t i = layers_.size(); i-- > 0;) g = reverse(i, g);
    return Tensor<Scalar>::from_samples(g);
  }

  void zero_gradients() {
    for (std::size_t i = 0; i < grads_.size(); ++i) grads_[i] = VectorX<Scalar>::Zero(params_.tensors[i].value.size());
  }

  /// Hash of the piecewise-linear decisions (ReLU signs, maxpool winners) of
  /// the last train-mode forward. Equal signatures at two nearby points mean
  /// no kink was crossed between them.
  std::uint64_t pattern_signature() const {
    std::uint64_t h = 0x84222325cbf29ce4ULL;
    auto mix = [&h](std::uint64_t v) { h = splitmix64(h ^ v); };
    for (std::size_t i = 0; i < caches_.size(); ++i) {
      if (const auto* a = std::get_if<ActivationSpec>(&layers_[i]); a && a->kind == Activation::relu) {
        const auto& z = acts_[i];
        for (Index j = 0; j < z.size(); ++j) mix(z.data()[j] > Scalar(0) ? 2 * j + 1 : 2 * j);
      } else if (std::holds_alternative<MaxPool2dSpec>(layers_[i])) {
        for (auto v : caches_[i].argmax) mix(static_cast<std::uint64_t>(v));
      }
    }
    return h;
  }

  Index trainable_count() const { return params_.trainable_count(); }

  template <typename To>
  Network<To> cast() const {
    Network<To> out(layers_, input_size_);
    for (std::size_t i = 0; i < params_.tensors.size(); ++i) {
      out.params().tensors[i].value = params_.tensors[i].value.template cast<To>();
    }
    return out;
  }

  /// Range [begin, end) of parameter tensors owned by layer `i`.
  std::pair<std::size_t, std::size_t> layer_params(std::size_t i) const {
    const std::size_t end = i + 1 < first_param_.size() ? first_param_[i + 1] : params_.tensors.size();
    return {first_param_[i], end};
  }

 private:
  Tensor<Scalar> train_forward(const Tensor<Scalar>& x, double momentum) {
    check_input(x);
    caches_.assign(layers_.size(), {});
    acts_.resize(layers_.size() + 1);
    acts_[0] = x.samples();
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const MatrixX<Scalar>& h = acts_[i];
      if (const auto* b = std::get_if<BatchNormSpec>(&layers_[i])) {
        const std::size_t p = first_param_[i];
        auto& t = params_.tensors;
        acts_[i + 1] = batchnorm_apply(h, *b, t[p].value, t[p + 1].value, t[p + 2].value, t[p + 3].value, Mode::train,
                                       &caches_[i].bn, momentum);
      } else {
        acts_[i + 1] = apply(i, h, &caches_[i]);
      }
      if (!acts_[i + 1].allFinite()) throw NumericError("non-finite activation after layer " + std::to_string(i));
    }
    has_cache_ = true;
    return Tensor<Scalar>::from_samples(acts_.back(), output_shape_);
  }

  // Layer inputs and outputs live in acts_; this holds the extra state.
  struct Cache {
    BatchNormCache<Scalar> bn;
    std::vector<std::int32_t> argmax;
  };

  void allocate(const LayerSpec& layer) {
    auto add = [this](std::string name, Shape shape, bool trainable) {
      Param<Scalar> p{std::move(name), shape, VectorX<Scalar>::Zero(shape_size(shape)), trainable};
      params_.tensors.push_back(std::move(p));
    };
    const std::string tag = std::to_string(first_param_.size() - 1);
    if (const auto* d = std::get_if<DenseSpec>(&layer)) {
      add("dense" + tag + ".weight", {d->out, d->in}, true);
      add("dense" + tag + ".bias", {d->out}, d->bias);
    } else if (const auto* c = std::get_if<Conv2dSpec>(&layer)) {
      add("conv" + tag + ".filters", {c->out_channels, c->in_channels, c->kernel, c->kernel}, true);
      add("conv" + tag + ".bias", {c->out_channels}, c->bias);
    } else if (const auto* b = std::get_if<BatchNormSpec>(&layer)) {
      add("bn" + tag + ".gamma", {b->channels}, true);
      add("bn" + tag + ".beta", {b->channels}, true);
      add("bn" + tag + ".running_mean", {b->channels}, false);
      add("bn" + tag + ".running_var", {b->channels}, false);
      params_.tensors.back().value.setOnes();
      params_.tensors[params_.tensors.size() - 4].value.setOnes();
    }
  }

  static void fill_uniform(VectorX<Scalar>& v, double limit, Rng& rng) {
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<Scalar>(dist(rng));
  }

  void check_input(const Tensor<Scalar>& x) const {
    if (x.sample_size() != input_size_) {
      throw DimensionError("network expects " + std::to_string(input_size_) + " inputs per sample, got tensor " +
                           shape_string(x.shape()));
    }
    if (!x.all_finite()) throw NumericError("network input contains non-finite values");
  }

  auto weight_matrix(std::size_t p, Index rows, Index cols) const {
    return Eigen::Map<const MatrixX<Scalar>>(params_.tensors[p].value.data(), rows, cols);
  }

  // Everything except train-mode batchnorm, which updates running statistics.
  MatrixX<Scalar> apply(std::size_t i, const MatrixX<Scalar>& h, Cache* cache) const {
    const std::size_t p = first_param_[i];
    const LayerSpec& layer = layers_[i];
    if (const auto* d = std::get_if<DenseSpec>(&layer)) {
      // Stored row-major [out, in]: the column-major map is W^T.
      auto wt = weight_matrix(p, d->in, d->out);
      return dense_forward(h, wt.transpose(), params_.tensors[p + 1].value);
    }
    if (const auto* c = std::get_if<Conv2dSpec>(&layer)) {
      return conv2d_forward(h, weight_matrix(p, c->in_channels * c->kernel * c->kernel, c->out_channels),
                            params_.tensors[p + 1].value, *c);
    }
    if (const auto* m = std::get_if<MaxPool2dSpec>(&layer)) {
      return maxpool2d_forward(h, *m, cache ? &cache->argmax : nullptr);
    }
    if (const auto* b = std::get_if<BatchNormSpec>(&layer)) {
      return batchnorm_infer(h, *b, params_.tensors[p].value, params_.tensors[p + 1].value,
                             params_.tensors[p + 2].value, params_.tensors[p + 3].value);
    }
    return activation_apply(h, std::get<ActivationSpec>(layer));
  }

  MatrixX<Scalar> reverse(std::size_t i, const MatrixX<Scalar>& g) {
    const std::size_t p = first_param_[i];
    const LayerSpec& layer = layers_[i];
    Cache& cache = caches_[i];
    const MatrixX<Scalar>& input = acts_[i];
    if (const auto* d = std::get_if<DenseSpec>(&layer)) {
      auto wt = weight_matrix(p, d->in, d->out);
      Eigen::Map<MatrixX<Scalar>> grad_wt(grads_[p].data(), d->in, d->out);
      grad_wt.noalias() = input * g.transpose();
      grads_[p + 1] = g.rowwise().sum();
      return wt * g;
    }
    if (const auto* c = std::get_if<Conv2dSpec>(&layer)) {
      const Index rows = c->in_channels * c->kernel * c->kernel;
      Eigen::Map<MatrixX<Scalar>> grad_f(grads_[p].data(), rows, c->out_channels);
      return conv2d_backward<Scalar>(input, weight_matrix(p, rows, c->out_channels), g, *c, grad_f, grads_[p + 1]);
    }
    if (std::holds_alternative<MaxPool2dSpec>(layer)) {
      return maxpool2d_backward<Scalar>(g, cache.argmax, input.rows());
    }
    if (const auto* b = std::get_if<BatchNormSpec>(&layer)) {
      return batchnorm_backward<Scalar>(g, *b, params_.tensors[p].value, cache.bn, grads_[p], grads_[p + 1]);
    }
    return activation_backward<Scalar>(g, input, acts_[i + 1], std::get<ActivationSpec>(layer));
  }

  std::vector<LayerSpec> layers_;
  Index input_size_ = 0;
  Shape output_shape_;
  NetworkParams<Scalar> params_;
  Gradients<Scalar> grads_;
  std::vector<std::size_t> first_param_;
  std::vector<Cache> caches_;
  std::vector<MatrixX<Scalar>> acts_;  // acts_[i] feeds layer i; acts_.back() is the output
  bool has_cache_ = false;
};

using NetworkD = Network<double>;
using NetworkF = Network<float>;

/// Counts the layers that appear as rows of an architecture table
/// (dense, conv2d, maxpool2d); batchnorm and activations ride along.
inline Index primary_layer_count(const std::vector<LayerSpec>& layers) {
  Index n = 0;
  for (const auto& l : layers) {
    n += std::holds_alternative<DenseSpec>(l) || std::holds_alternative<Conv2dSpec>(l) ||
         std::holds_alternative<MaxPool2dSpec>(l);
  }
  return n;
}

}  // namespace owc::nn
