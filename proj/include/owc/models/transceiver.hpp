#pragma once

#include <string>
#include <vector>

#include "owc/nn/network.hpp"
#include "owc/random.hpp"
#include "owc/tensor.hpp"

namespace owc::models {

enum class ModelKind { cae, fae, ook };

std::string kind_name(ModelKind kind);
ModelKind parse_kind(const std::string& name);

/// Encoder (transmitter) and decoder (receiver) networks of one autoencoder
/// link. Messages are zero-based indices in [0, messages). Codewords are
/// stored row-major: an L x L LED matrix for the image-sensor variants, a
/// length-N pulse train (1 x N) for the single-LED OOK variant.
struct Transceiver {
  ModelKind kind = ModelKind::cae;
  Index messages = 0;
  Index codeword_rows = 0;
  Index codeword_cols = 0;
  Index sensor_pixels = 0;  // T; 0 for OOK
  Index filters = 0;        // conv width behind "M filters"; 0 for fully-connected variants

  nn::NetworkD encoder;
  nn::NetworkD decoder;

  double trained_snr_db = 0.0;
  bool rotation_trained = false;

  Index codeword_size() const { return codeword_rows * codeword_cols; }
  Index receive_size() const { return kind == ModelKind::ook ? codeword_cols : sensor_pixels * sensor_pixels; }
  void set_delta(double delta) { encoder.set_delta(delta); }
  double delta() const { return encoder.delta().value_or(0.0); }
  void initialize(Rng& rng) {
    encoder.initialize(rng);
    decoder.initialize(rng);
  }
};

/// Convolutional autoencoder of the architecture table: FC(M), FC(16L^2),
/// conv(F, 3x3) on 4L x 4L, pool, conv(2F, 3x3), pool, conv(1, 3x3) with
/// param_sigmoid; decoder conv(2F, 5x5) on T x T, pool, conv(F, 3x3), pool,
/// FC(M), FC(M) softmax. F defaults to M. Batchnorm precedes every hidden
/// activation.
Transceiver build_cae(Index messages, Index leds_per_side, Index sensor_pixels, Index filters = 0);

/// Fully-connected counterpart: every conv/pool row becomes a dense layer
/// whose width is that row's spatial output size (4L x 4L -> 16L^2, ...).
Transceiver build_fae(Index messages, Index leds_per_side, Index sensor_pixels);

struct OokAeSpec {
  Index length = 8;     // N, symbol duration
  Index messages = 16;  // M
  double weight = 4.0;  // d, target number of ones per codeword
  std::vector<Index> encoder_hidden{64};
  std::vector<Index> decoder_hidden{64, 64};

  void validate() const;
};

Transceiver build_ook_ae(const OokAeSpec& spec);

/// Euclidean projection of v onto {s : 0 <= s_i <= peak, mean(s) = target}:
/// s_i = clip(v_i + mu, 0, peak) with mu located by bisection and then
/// solved exactly on the resulting active set.
VectorX<double> project_dimming(const VectorX<double>& v, double peak, double mean_target);

/// Infer-mode encoder output for every message as (codeword_size x M).
MatrixX<double> encode_all(const Transceiver& model);

/// Infer-mode encoder output for one message.
VectorX<double> encode_message(const Transceiver& model, Index message);

/// Largest distance from any entry to the nearest of {0, 1}.
double hardness_gap(const MatrixX<double>& words);

struct Codebook {
  Index rows = 1;
  Index cols = 1;
  MatrixX<double> words;  // (rows*cols) x M, one codeword per column
  bool binary = false;
  double delta = 0.0;
  double hardness_gap = 0.0;

  Index size() const { return words.cols(); }
  Index word_size() const { return words.rows(); }
  VectorX<double> word(Index message) const { return words.col(message); }
};

/// Codebook built from raw codeword columns; marked binary when every entry
/// is exactly 0 or 1.
Codebook make_codebook(MatrixX<double> words, Index rows, Index cols);

/// Runs encode_message for every message. When the hardness gap is within
/// `tolerance` the entries are rounded at `threshold` and the codebook is
/// binary; binary codebooks with repeated codewords raise
/// DegenerateCodebookError.
Codebook export_codebook(const Transceiver& model, double threshold = 0.5, double tolerance = 0.01);

/// Throws DegenerateCodebookError naming the first repeated pair.
void require_distinct(const Codebook& codebook);

/// Lowest index among the maxima.
template <typename Derived>
Index argmax_lowest(const Eigen::MatrixBase<Derived>& v) {
  Index best = 0;
  for (Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return best;
}

template <typename Scalar>
struct Decision {
  VectorX<Scalar> posterior;
  Index message = 0;
};

/// Posterior and decision for one received sample; no channel state needed.
template <typename Scalar>
Decision<Scalar> decode_image(const nn::Network<Scalar>& decoder, const VectorX<Scalar>& received) {
  if (received.size() != decoder.input_size()) {
    throw DimensionError("decode_image: decoder expects " + std::to_string(decoder.input_size()) +
                         " samples, got " + std::to_string(received.size()));
  }
  const Tensor<Scalar> out = decoder.infer(Tensor<Scalar>::from_samples(received));
  Decision<Scalar> d;
  d.posterior = out.data();
  d.message = argmax_lowest(d.posterior);
  return d;
}

/// Decisions for a batch given as (receive_size x B).
template <typename Scalar>
std::vector<Index> decode_batch(const nn::Network<Scalar>& decoder, const MatrixX<Scalar>& received) {
  const Tensor<Scalar> out = decoder.infer(Tensor<Scalar>::from_samples(received));
  std::vector<Index> decisions(static_cast<std::size_t>(received.cols()));
  const auto posterior = out.samples();
  for (Index b = 0; b < received.cols(); ++b) decisions[static_cast<std::size_t>(b)] = argmax_lowest(posterior.col(b));
  return decisions;
}

}  // namespace owc::models
