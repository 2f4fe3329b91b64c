#pragma once

#include <string>
#include <variant>
#include <vector>

#include "owc/tensor.hpp"

namespace owc::nn {

// bias = false keeps a frozen zero bias (used ahead of batchnorm, which
// cancels any bias exactly).
struct DenseSpec {
  Index in = 0;
  Index out = 0;
  bool bias = true;
  friend bool operator==(const DenseSpec&, const DenseSpec&) = default;
};

// Zero "same" padding; the output keeps the input's spatial extent.
struct Conv2dSpec {
  Index in_channels = 0;
  Index out_channels = 0;
  Index kernel = 3;
  Index height = 0;
  Index width = 0;
  bool bias = true;
  friend bool operator==(const Conv2dSpec&, const Conv2dSpec&) = default;
};

struct MaxPool2dSpec {
  Index channels = 0;
  Index height = 0;
  Index width = 0;
  Index pool = 2;
  friend bool operator==(const MaxPool2dSpec&, const MaxPool2dSpec&) = default;
};

// Normalizes per channel over the batch and the `spatial` positions of that
// channel. A batchnorm after a dense layer has spatial == 1.
struct BatchNormSpec {
  Index channels = 0;
  Index spatial = 1;
  friend bool operator==(const BatchNormSpec&, const BatchNormSpec&) = default;
};

enum class Activation { relu, sigmoid, softmax, param_sigmoid, step };

struct ActivationSpec {
  Activation kind = Activation::relu;
  double delta = 1.0;  // slope of param_sigmoid, ignored otherwise
  friend bool operator==(const ActivationSpec&, const ActivationSpec&) = default;
};

using LayerSpec = std::variant<DenseSpec, Conv2dSpec, MaxPool2dSpec, BatchNormSpec, ActivationSpec>;

enum class Mode { train, infer };

std::string activation_name(Activation a);
Activation parse_activation(const std::string& name);

/// Throws ConfigError when a layer violates its own invariants.
void validate_layer(const LayerSpec& layer);

/// Flat element count a layer consumes (0 for shape-preserving activations).
Index layer_input_size(const LayerSpec& layer);
Index layer_output_size(const LayerSpec& layer);

/// Per-sample output shape after `layer`, given the incoming per-sample shape.
Shape layer_output_shape(const LayerSpec& layer, const Shape& input);

/// Checks that consecutive layers agree on element counts and returns the
/// per-sample output shape of the whole stack.
Shape validate_stack(const std::vector<LayerSpec>& layers, Index input_size);

/// One-line `key=value` description, e.g. "conv2d in=1 out=64 k=3 h=20 w=20".
std::string describe_layer(const LayerSpec& layer);
LayerSpec parse_layer(const std::string& line);

/// True for layers that own trainable parameters (dense, conv2d, batchnorm).
bool has_parameters(const LayerSpec& layer);

}  // namespace owc::nn
