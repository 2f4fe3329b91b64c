#pragma once

#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>

#include "owc/channel/optical.hpp"
#include "owc/random.hpp"
#include "owc/tensor.hpp"

namespace owc::imaging {

struct CameraModel {
  Index pixels_per_side = 28;  // T
  double pixel_m = 5.6e-6;
  double focal_m = 3.5e-3;
  double fnumber = 1.4;  // informational; does not enter the PSF
  double psf_sigma_px = 1.0;

  void validate() const;
};

struct ArrayGeometry {
  Index leds_per_side = 5;  // L
  double pitch_m = 0.015;
  double distance_m = 5.0;

  void validate(const CameraModel& cam) const;
};

/// Linear map from the L*L LED intensities (row-major) to the T*T clean
/// pixel intensities (row-major), built for one rotation angle.
struct ChannelMatrix {
  MatrixX<double> H;
  double theta_deg = 0.0;
};

/// Thin-lens magnification f / (d - f).
double magnification(const ArrayGeometry& geom, const CameraModel& cam);

/// Distance between neighbouring LED images on the sensor, in pixels.
double projected_pitch_px(const ArrayGeometry& geom, const CameraModel& cam);

/// Rotates the LED grid by theta about its centre, projects it through the
/// thin lens onto the centred sensor and integrates an isotropic Gaussian
/// spot per LED over every pixel. Columns carry equal energy and the matrix
/// is scaled so the all-on array peaks at exactly 1 for theta = 0.
ChannelMatrix build_channel_matrix(const ArrayGeometry& geom, const CameraModel& cam, double theta_deg);

/// Clean image vec(T x T) = H vec(S). Accepts S as an L x L matrix or an
/// L*L vector (row-major LED order in both cases).
VectorX<double> render_image(const VectorX<double>& leds, const ChannelMatrix& channel);
VectorX<double> render_image(const MatrixX<double>& leds, const ChannelMatrix& channel);

struct RenderedGeometry {
  double pitch_px = 0.0;  // mean centroid distance between neighbouring LEDs of the middle row
  double span_px = 0.0;   // centroid distance between the first and last LED of that row
};

/// Measures the LED layout from rendered single-LED images (intensity
/// centroids at theta = 0) rather than from the projection formula.
RenderedGeometry measure_rendered_geometry(const ArrayGeometry& geom, const CameraModel& cam);

/// Uniform rotation in [lo, hi] degrees.
double sample_rotation(Rng& rng, double lo = -30.0, double hi = 30.0);

/// Channel matrices on a fixed angular grid, built on first use and shared
/// read-only afterwards. Safe for concurrent use.
class ChannelCache {
 public:
  ChannelCache(ArrayGeometry geom, CameraModel cam, double step_deg = 0.5);

  double snap(double theta_deg) const;
  long grid_index(double theta_deg) const;
  std::shared_ptr<const ChannelMatrix> get(double theta_deg) const;

  const ArrayGeometry& geometry() const { return geom_; }
  const CameraModel& camera() const { return cam_; }
  double step_deg() const { return step_deg_; }

 private:
  ArrayGeometry geom_;
  CameraModel cam_;
  double step_deg_;
  mutable std::shared_mutex mutex_;
  mutable std::map<long, std::shared_ptr<const ChannelMatrix>> entries_;
};

struct IscSample {
  VectorX<double> image;  // T*T, row-major
  double theta_deg = 0.0;
};

/// Renders S under a rotation (sampled in [-30, 30] when absent) and adds
/// signal-dependent noise. theta_deg is returned for CSI-aware baselines only.
IscSample isc_channel(const VectorX<double>& leds, const ArrayGeometry& geom, const CameraModel& cam,
                      const channel::ChannelParams& ch, Rng& rng, std::optional<double> theta_deg = std::nullopt);

}  // namespace owc::imaging
