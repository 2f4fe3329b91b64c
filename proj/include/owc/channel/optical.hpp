#pragma once

#include <cmath>
#include <optional>

#include "owc/errors.hpp"
#include "owc/random.hpp"
#include "owc/tensor.hpp"

namespace owc::channel {

/// Signal-dependent Gaussian channel: r = s + n with
/// Var(n) = sigma2 + psi2 * sigma2 * s (ambient plus shot noise).
struct ChannelParams {
  double sigma2 = 0.1;
  double psi2 = 5.0;
  std::optional<double> snr_db;  // set when sigma2 was derived from an SNR

  static ChannelParams from_snr(double snr_db, double psi2);
  void validate() const;
  double variance(double s) const { return sigma2 + psi2 * sigma2 * (s > 0.0 ? s : 0.0); }
};

/// sigma2 = 10^(-snr_db / 10), i.e. SNR measured against a unit peak intensity.
double sigma_from_snr(double snr_db);

/// r = s + sqrt(sigma2 + psi2 sigma2 s) * eps for a given standard-normal
/// draw eps. Slightly negative s (relaxation round-off) is clamped to zero in
/// the variance term.
template <typename DerivedS, typename DerivedE>
MatrixX<typename DerivedS::Scalar> add_noise(const Eigen::MatrixBase<DerivedS>& s,
                                             const Eigen::MatrixBase<DerivedE>& eps, const ChannelParams& ch) {
  using Scalar = typename DerivedS::Scalar;
  const Scalar a = static_cast<Scalar>(ch.sigma2);
  const Scalar b = static_cast<Scalar>(ch.psi2 * ch.sigma2);
  return (s.array() + (a + b * s.array().cwiseMax(Scalar(0))).sqrt() * eps.array()).matrix();
}

/// Elementwise dr/ds of add_noise (the reparameterized pathway).
template <typename DerivedS, typename DerivedE>
MatrixX<typename DerivedS::Scalar> noise_jacobian(const Eigen::MatrixBase<DerivedS>& s,
                                                  const Eigen::MatrixBase<DerivedE>& eps, const ChannelParams& ch) {
  using Scalar = typename DerivedS::Scalar;
  const Scalar a = static_cast<Scalar>(ch.sigma2);
  const Scalar b = static_cast<Scalar>(ch.psi2 * ch.sigma2);
  MatrixX<Scalar> j(s.rows(), s.cols());
  for (Index c = 0; c < s.cols(); ++c) {
    for (Index r = 0; r < s.rows(); ++r) {
      const Scalar v = s(r, c);
      const Scalar sd = std::sqrt(a + b * std::max(v, Scalar(0)));
      j(r, c) = (v > Scalar(0) && sd > Scalar(0)) ? Scalar(1) + b * eps(r, c) / (Scalar(2) * sd) : Scalar(1);
    }
  }
  return j;
}

/// Standard-normal matrix drawn in column-major order.
template <typename Scalar>
MatrixX<Scalar> standard_normal(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> normal;
  MatrixX<Scalar> e(rows, cols);
  for (Index i = 0; i < e.size(); ++i) e.data()[i] = static_cast<Scalar>(normal(rng));
  return e;
}

/// One independent noise draw per element of `s`.
VectorX<double> apply_optical_noise(const VectorX<double>& s, const ChannelParams& ch, Rng& rng);

}  // namespace owc::channel
