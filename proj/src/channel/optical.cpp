#include "owc/channel/optical.hpp"

#include <atomic>
#include <iostream>

namespace owc::channel {

ChannelParams ChannelParams::from_snr(double snr_db, double psi2) {
  ChannelParams ch{sigma_from_snr(snr_db), psi2, snr_db};
  ch.validate();
  return ch;
}

void ChannelParams::validate() const {
  if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) throw ArgumentError("channel: sigma2 must be >= 0");
  if (!(psi2 >= 0.0) || !std::isfinite(psi2)) throw ArgumentError("channel: psi2 must be >= 0");
}

double sigma_from_snr(double snr_db) { return std::pow(10.0, -snr_db / 10.0); }

VectorX<double> apply_optical_noise(const VectorX<double>& s, const ChannelParams& ch, Rng& rng) {
  ch.validate();
  static std::atomic<bool> warned{false};
  if (s.size() > 0 && s.minCoeff() < -1e-9 && !warned.exchange(true)) {
    std::cerr << "warning: negative intensity " << s.minCoeff() << " clamped to 0 in the shot-noise variance\n";
  }
  return add_noise(s, standard_normal<double>(s.size(), 1, rng), ch);
}

}  // namespace owc::channel
