#include "owc/models/transceiver.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace owc::models {

using namespace owc::nn;

namespace {

void hidden_dense(std::vector<LayerSpec>& layers, Index in, Index out) {
  layers.emplace_back(DenseSpec{in, out, false});
  layers.emplace_back(BatchNormSpec{out, 1});
  layers.emplace_back(ActivationSpec{Activation::relu});
}

void hidden_conv(std::vector<LayerSpec>& layers, Index in, Index out, Index k, Index side) {
  layers.emplace_back(Conv2dSpec{in, out, k, side, side, false});
  layers.emplace_back(BatchNormSpec{out, side * side});
  layers.emplace_back(ActivationSpec{Activation::relu});
}

void check_isc_dims(Index messages, Index L, Index T) {
  if (messages < 1) throw ConfigError("message count must be >= 1");
  if (L < 2) throw ConfigError("LED array must be at least 2x2");
  if (T <= 0 || T % 4 != 0) throw ConfigError("sensor side must be divisible by 4, got " + std::to_string(T));
}

}  // namespace

std::string kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::cae: return "cae";
    case ModelKind::fae: return "fae";
    case ModelKind::ook: return "ook";
  }
  return "unknown";
}

ModelKind parse_kind(const std::string& name) {
  if (name == "cae") return ModelKind::cae;
  if (name == "fae") return ModelKind::fae;
  if (name == "ook") return ModelKind::ook;
  throw ConfigError("unknown model kind '" + name + "' (expected cae, fae or ook)");
}

Transceiver build_cae(Index messages, Index L, Index T, Index filters) {
  check_isc_dims(messages, L, T);
  const Index F = filters > 0 ? filters : messages;
  std::vector<LayerSpec> enc;
  hidden_dense(enc, messages, messages);
  hidden_dense(enc, messages, 16 * L * L);
  hidden_conv(enc, 1, F, 3, 4 * L);
  enc.emplace_back(MaxPool2dSpec{F, 4 * L, 4 * L, 2});
  hidden_conv(enc, F, 2 * F, 3, 2 * L);
  enc.emplace_back(MaxPool2dSpec{2 * F, 2 * L, 2 * L, 2});
  enc.emplace_back(Conv2dSpec{2 * F, 1, 3, L, L, true});
  enc.emplace_back(ActivationSpec{Activation::param_sigmoid, 1.0});

  std::vector<LayerSpec> dec;
  hidden_conv(dec, 1, 2 * F, 5, T);
  dec.emplace_back(MaxPool2dSpec{2 * F, T, T, 2});
  hidden_conv(dec, 2 * F, F, 3, T / 2);
  dec.emplace_back(MaxPool2dSpec{F, T / 2, T / 2, 2});
  hidden_dense(dec, F * (T / 4) * (T / 4), messages);
  dec.emplace_back(DenseSpec{messages, messages, true});
  dec.emplace_back(ActivationSpec{Activation::softmax});

  Transceiver t;
  t.kind = ModelKind::cae;
  t.messages = messages;
  t.codeword_rows = L;
  t.codeword_cols = L;
  t.sensor_pixels = T;
  t.filters = F;
  t.encoder = NetworkD(std::move(enc), messages);
  t.decoder = NetworkD(std::move(dec), T * T);
  return t;
}

Transceiver build_fae(Index messages, Index L, Index T) {
  check_isc_dims(messages, L, T);
  const Index big = 16 * L * L;
  const Index mid = 4 * L * L;
  const Index small = L * L;
  std::vector<LayerSpec> enc;
  hidden_dense(enc, messages, messages);
  hidden_dense(enc, messages, big);
  hidden_dense(enc, big, big);               // conv 4L x 4L
  enc.emplace_back(DenseSpec{big, mid, false});  // pool -> 2L x 2L; bias cancelled by the next batchnorm
  hidden_dense(enc, mid, mid);               // conv 2L x 2L
  enc.emplace_back(DenseSpec{mid, small, true});  // pool -> L x L
  enc.emplace_back(DenseSpec{small, small, true});
  enc.emplace_back(ActivationSpec{Activation::param_sigmoid, 1.0});

  const Index p0 = T * T;
  const Index p1 = p0 / 4;
  const Index p2 = p0 / 16;
  std::vector<LayerSpec> dec;
  hidden_dense(dec, p0, p0);
  dec.emplace_back(DenseSpec{p0, p1, false});
  hidden_dense(dec, p1, p1);
  dec.emplace_back(DenseSpec{p1, p2, false});
  hidden_dense(dec, p2, messages);
  dec.emplace_back(DenseSpec{messages, messages, true});
  dec.emplace_back(ActivationSpec{Activation::softmax});

  Transceiver t;
  t.kind = ModelKind::fae;
  t.messages = messages;
  t.codeword_rows = L;
  t.codeword_cols = L;
  t.sensor_pixels = T;
  t.encoder = NetworkD(std::move(enc), messages);
  t.decoder = NetworkD(std::move(dec), p0);
  return t;
}

void OokAeSpec::validate() const {
  if (length < 1 || length > 62) throw ConfigError("OOK codeword length must lie in [1, 62]");
  if (messages < 1) throw ConfigError("OOK message count must be >= 1");
  if (static_cast<double>(messages) > std::ldexp(1.0, static_cast<int>(length))) {
    throw ConfigError("OOK: M = " + std::to_string(messages) + " exceeds 2^N");
  }
  if (!(weight >= 0 && weight <= static_cast<double>(length))) throw ConfigError("OOK: d must lie in [0, N]");
  for (Index h : encoder_hidden) {
    if (h < 1) throw ConfigError("OOK: hidden widths must be positive");
  }
  for (Index h : decoder_hidden) {
    if (h < 1) throw ConfigError("OOK: hidden widths must be positive");
  }
}

Transceiver build_ook_ae(const OokAeSpec& spec) {
  spec.validate();
  std::vector<LayerSpec> enc;
  Index width = spec.messages;
  for (Index h : spec.encoder_hidden) {
    enc.emplace_back(DenseSpec{width, h, true});
    enc.emplace_back(ActivationSpec{Activation::relu});
    width = h;
  }
  enc.emplace_back(DenseSpec{width, spec.length, true});
  enc.emplace_back(ActivationSpec{Activation::param_sigmoid, 1.0});

  std::vector<LayerSpec> dec;
  width = spec.length;
  for (Index h : spec.decoder_hidden) {
    dec.emplace_back(DenseSpec{width, h, true});
    dec.emplace_back(ActivationSpec{Activation::relu});
    width = h;
  }
  dec.emplace_back(DenseSpec{width, spec.messages, true});
  dec.emplace_back(ActivationSpec{Activation::softmax});

  Transceiver t;
  t.kind = ModelKind::ook;
  t.messages = spec.messages;
  t.codeword_rows = 1;
  t.codeword_cols = spec.length;
  t.encoder = NetworkD(std::move(enc), spec.messages);
  t.decoder = NetworkD(std::move(dec), spec.length);
  return t;
}

VectorX<double> project_dimming(const VectorX<double>& v, double peak, double mean_target) {
  if (!(peak >= 0) || !(mean_target >= 0) || !(mean_target <= peak)) {
    throw ArgumentError("project_dimming: target mean " + std::to_string(mean_target) + " infeasible for peak " +
                        std::to_string(peak));
  }
  if (v.size() == 0) throw ArgumentError("project_dimming: empty vector");
  if (!v.allFinite()) throw NumericError("project_dimming: non-finite input");
  const auto clipped_mean = [&](double mu) { return (v.array() + mu).cwiseMax(0.0).cwiseMin(peak).mean(); };
  double lo = -v.maxCoeff();
  double hi = peak - v.minCoeff();
  double mu = 0.5 * (lo + hi);
  for (int it = 0; it < 200 && hi - lo > 1e-10; ++it) {
    mu = 0.5 * (lo + hi);
    const double m = clipped_mean(mu);
    if (std::abs(m - mean_target) <= 1e-10) break;
    (m < mean_target ? lo : hi) = mu;
  }
  // Exact shift for the active set the bisection settled on.
  const Index n = v.size();
  double free_sum = 0.0;
  Index free_count = 0;
  Index at_peak = 0;
  for (Index i = 0; i < n; ++i) {
    const double s = v[i] + mu;
    if (s >= peak) {
      ++at_peak;
    } else if (s > 0.0) {
      free_sum += v[i];
      ++free_count;
    }
  }
  if (free_count > 0) {
    const double exact = (static_cast<double>(n) * mean_target - peak * static_cast<double>(at_peak) - free_sum) /
                         static_cast<double>(free_count);
    if (std::abs(clipped_mean(exact) - mean_target) <= std::abs(clipped_mean(mu) - mean_target)) mu = exact;
  }
  return (v.array() + mu).cwiseMax(0.0).cwiseMin(peak).matrix();
}

MatrixX<double> encode_all(const Transceiver& model) {
  const MatrixX<double> onehot = MatrixX<double>::Identity(model.messages, model.messages);
  return model.encoder.infer(Tensor<double>::from_samples(onehot)).samples();
}

VectorX<double> encode_message(const Transceiver& model, Index message) {
  if (message < 0 || message >= model.messages) {
    throw ArgumentError("message " + std::to_string(message) + " outside [0, " + std::to_string(model.messages) + ")");
  }
  VectorX<double> onehot = VectorX<double>::Zero(model.messages);
  onehot[message] = 1.0;
  return model.encoder.infer(Tensor<double>::from_samples(onehot)).data();
}

double hardness_gap(const MatrixX<double>& words) {
  if (words.size() == 0) return 0.0;
  return words.unaryExpr([](double v) { return std::min(std::abs(v), std::abs(1.0 - v)); }).maxCoeff();
}

Codebook make_codebook(MatrixX<double> words, Index rows, Index cols) {
  if (words.rows() != rows * cols) throw DimensionError("codebook: word size does not match rows x cols");
  Codebook cb;
  cb.rows = rows;
  cb.cols = cols;
  cb.hardness_gap = hardness_gap(words);
  cb.binary = (words.array() == 0.0 || words.array() == 1.0).all();
  cb.words = std::move(words);
  return cb;
}

void require_distinct(const Codebook& codebook) {
  std::map<std::vector<double>, Index> seen;
  for (Index b = 0; b < codebook.size(); ++b) {
    std::vector<double> key(codebook.words.col(b).data(), codebook.words.col(b).data() + codebook.word_size());
    auto [it, inserted] = seen.try_emplace(std::move(key), b);
    if (!inserted) {
      throw DegenerateCodebookError("codewords " + std::to_string(it->second) + " and " + std::to_string(b) +
                                    " are identical");
    }
  }
}

Codebook export_codebook(const Transceiver& model, double threshold, double tolerance) {
  MatrixX<double> words = encode_all(model);
  const double gap = hardness_gap(words);
  Codebook cb;
  cb.rows = model.codeword_rows;
  cb.cols = model.codeword_cols;
  cb.delta = model.delta();
  cb.hardness_gap = gap;
  if (gap <= tolerance) {
    cb.words = (words.array() >= threshold).cast<double>().matrix();
    cb.binary = true;
    if (cb.size() > 1) require_distinct(cb);
  } else {
    cb.words = std::move(words);
    cb.binary = false;
  }
  return cb;
}

}  // namespace owc::models
