#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "owc/channel/optical.hpp"
#include "owc/imaging/isc.hpp"
#include "owc/models/transceiver.hpp"
#include "owc/nn/network.hpp"

namespace owc::eval {

using models::Codebook;

struct SerEstimate {
  std::int64_t errors = 0;
  std::int64_t trials = 0;
  double ser = 0.0;
  double ci95 = 0.0;  // normal-approximation half-width; 3.69/n when no errors were seen

  static SerEstimate from_counts(std::int64_t errors, std::int64_t trials);
  double lower() const { return ser - ci95; }
  double upper() const { return ser + ci95; }
};

/// True when the 95% intervals of a and b do not overlap and a is lower.
inline bool clearly_below(const SerEstimate& a, const SerEstimate& b) { return a.upper() < b.lower(); }

enum class BaselineKind { random_ook, greedy_cwc };

/// Per-LED duty baseline: entry j is on in exactly round(M * duty_j) of the
/// M codewords, placed uniformly at random and redrawn (up to 100 times)
/// until all codewords differ.
Codebook random_ook_codebook(Index messages, Index rows, Index cols, const VectorX<double>& duty, Rng& rng);

/// Greedy constant-weight code (lexicode): for a trial distance, scans the
/// weight-d words of length N in ascending order (position 0 is the most
/// significant bit) and keeps every word at least that far from all kept
/// words. Returns the first M words of the largest distance that yields M.
Codebook greedy_cwc(Index messages, Index length, Index weight);

Codebook baseline_codebook(BaselineKind kind, Index messages, Index rows, Index cols, const VectorX<double>& target,
                           Rng& rng);

/// Smallest pairwise Hamming distance; max() stands for "infinite" when M = 1.
Index min_hamming_distance(const Codebook& codebook);

enum class LinkKind { image_sensor, single_led };

/// How codewords reach the receiver: rendered through the (rotating) camera
/// channel, or sent directly as single-LED pulse trains.
struct Link {
  LinkKind kind = LinkKind::image_sensor;
  std::shared_ptr<const imaging::ChannelCache> cache;
  double rotation_lo = -30.0;
  double rotation_hi = 30.0;
  double psi2 = 5.0;

  static Link image_sensor(std::shared_ptr<const imaging::ChannelCache> cache, double lo, double hi, double psi2);
  static Link single_led(double psi2);
  Index receive_size(const Codebook& codebook) const;
};

/// Channel state handed to the ML baseline.
struct Csi {
  double theta_deg = 0.0;
  channel::ChannelParams channel;
};

/// theta_est = theta + Normal(0, error_level^2) degrees; the noise
/// parameters are passed through unchanged.
Csi perturb_csi(double true_theta_deg, const channel::ChannelParams& ch, double error_level_deg, Rng& rng);

/// Gaussian log-likelihood detector over explicit candidate clean signals
/// (receive_size x M): minimizes sum_p (y_p - x_bp)^2 / (2 v_bp) + ln(v_bp) / 2
/// with v = sigma2 + psi2 sigma2 x. With sigma2 = 0 it is the nearest
/// candidate in Euclidean distance. Lowest index wins ties.
Index ml_decode(const VectorX<double>& received, const MatrixX<double>& candidates, const channel::ChannelParams& ch);

/// ML decoding of a codebook over `link`; image-sensor links need CSI.
Index ml_decode(const VectorX<double>& received, const Codebook& codebook, const Link& link,
                const std::optional<Csi>& csi);

struct AeReceiver {
  std::shared_ptr<const nn::NetworkF> decoder;
};
struct MlReceiver {
  double csi_error_deg = 0.0;
};
struct GuessReceiver {};

using Receiver = std::variant<AeReceiver, MlReceiver, GuessReceiver>;

AeReceiver make_ae_receiver(const models::Transceiver& model);

/// The look-up table a trained model transmits from: encoder outputs,
/// rounded at 0.5 when every entry is within 0.01 of {0, 1}. Unlike
/// export_codebook it does not insist on distinct codewords.
Codebook transmit_codebook(const models::Transceiver& model);

/// Monte-Carlo SER: uniform messages, fresh rotation and noise per trial.
/// Trial t draws everything from its own stream derived from (seed, t), and
/// trials are decoded in fixed 256-trial chunks, so the result does not
/// depend on `threads`.
SerEstimate estimate_ser(const Codebook& transmit, const Receiver& receive, const Link& link, double snr_db,
                         std::int64_t trials, std::uint64_t seed, int threads = 1);

/// A system evaluated in a sweep. Routes are tried in order and the first
/// one whose max_snr_db is >= the test SNR is used (two-model protocol).
struct Route {
  double max_snr_db = std::numeric_limits<double>::infinity();
  Codebook transmit;
  Receiver receive;
};

struct SweepSystem {
  std::string name;
  std::vector<Route> routes;
};

struct SweepRow {
  std::string system;
  double snr_db = 0.0;
  SerEstimate estimate;
};

std::vector<SweepRow> sweep_snr(const std::vector<double>& snr_list, const std::vector<SweepSystem>& systems,
                                const Link& link, std::int64_t trials, std::uint64_t seed, int threads = 1);

/// `system,snr_db,trials,errors,ser,ci95`, one row per estimate.
void write_results_csv(std::ostream& os, const std::vector<SweepRow>& rows);

struct DimmingDeviation {
  double max = 0.0;
  double mean = 0.0;
};

/// Entrywise deviation of the codebook mean from the target D.
DimmingDeviation dimming_report(const Codebook& codebook, const VectorX<double>& target);

}  // namespace owc::eval
