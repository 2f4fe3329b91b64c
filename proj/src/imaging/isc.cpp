#include "owc/imaging/isc.hpp"

#include <cmath>
#include <mutex>
#include <numbers>

namespace owc::imaging {

namespace {

// Fraction of a unit Gaussian centred at `mu` (std `sigma`) falling into
// each of the `n` unit-width cells spanning [-n/2, n/2].
VectorX<double> cell_integrals(double mu, double sigma, Index n) {
  VectorX<double> out(n);
  const double scale = 1.0 / (sigma * std::numbers::sqrt2);
  const double half = static_cast<double>(n) / 2.0;
  double lower = std::erf((-half - mu) * scale);
  for (Index i = 0; i < n; ++i) {
    const double upper = std::erf((static_cast<double>(i + 1) - half - mu) * scale);
    out[i] = 0.5 * (upper - lower);
    lower = upper;
  }
  return out;
}

// Equal-energy columns, before the global peak normalization.
MatrixX<double> raw_channel(const ArrayGeometry& geom, const CameraModel& cam, double theta_deg) {
  const Index L = geom.leds_per_side;
  const Index T = cam.pixels_per_side;
  const double px_per_m = magnification(geom, cam) / cam.pixel_m;
  const double theta = theta_deg * std::numbers::pi / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double centre = static_cast<double>(L - 1) / 2.0;
  const double half = static_cast<double>(T) / 2.0;
  MatrixX<double> H(T * T, L * L);
  for (Index r = 0; r < L; ++r) {
    for (Index q = 0; q < L; ++q) {
      const double x = (static_cast<double>(q) - centre) * geom.pitch_m;
      const double y = (static_cast<double>(r) - centre) * geom.pitch_m;
      const double u = (c * x - s * y) * px_per_m;
      const double v = (s * x + c * y) * px_per_m;
      if (std::abs(u) > half || std::abs(v) > half) {
        throw GeometryError("LED (" + std::to_string(r) + "," + std::to_string(q) +
                            ") projects outside the sensor at theta=" + std::to_string(theta_deg));
      }
      const VectorX<double> ix = cell_integrals(u, cam.psf_sigma_px, T);
      const VectorX<double> iy = cell_integrals(v, cam.psf_sigma_px, T);
      auto col = H.col(r * L + q);
      for (Index py = 0; py < T; ++py) col.segment(py * T, T) = iy[py] * ix;
      col /= col.sum();
    }
  }
  return H;
}

}  // namespace

void CameraModel::validate() const {
  if (pixels_per_side <= 0 || pixels_per_side % 4 != 0) {
    throw ConfigError("camera: pixels per side must be a positive multiple of 4");
  }
  if (!(pixel_m > 0 && focal_m > 0 && fnumber > 0 && psf_sigma_px > 0)) {
    throw ConfigError("camera: pixel pitch, focal length, f-number and PSF width must be positive");
  }
}

void ArrayGeometry::validate(const CameraModel& cam) const {
  if (leds_per_side < 1) throw ConfigError("geometry: LEDs per side must be >= 1");
  if (!(pitch_m > 0)) throw ConfigError("geometry: LED pitch must be positive");
  if (!(distance_m > cam.focal_m)) throw ConfigError("geometry: link distance must exceed the focal length");
}

double magnification(const ArrayGeometry& geom, const CameraModel& cam) {
  return cam.focal_m / (geom.distance_m - cam.focal_m);
}

double projected_pitch_px(const ArrayGeometry& geom, const CameraModel& cam) {
  return geom.pitch_m * magnification(geom, cam) / cam.pixel_m;
}

ChannelMatrix build_channel_matrix(const ArrayGeometry& geom, const CameraModel& cam, double theta_deg) {
  cam.validate();
  geom.validate(cam);
  if (!(std::abs(theta_deg) <= 90.0)) throw ArgumentError("rotation must lie in [-90, 90] degrees");
  const MatrixX<double> upright = raw_channel(geom, cam, 0.0);
  const double peak = (upright * VectorX<double>::Ones(upright.cols())).maxCoeff();
  ChannelMatrix out;
  out.theta_deg = theta_deg;
  out.H = (theta_deg == 0.0 ? upright : raw_channel(geom, cam, theta_deg)) / peak;
  return out;
}

VectorX<double> render_image(const VectorX<double>& leds, const ChannelMatrix& channel) {
  if (leds.size() != channel.H.cols()) {
    throw DimensionError("render_image: expected " + std::to_string(channel.H.cols()) + " LED intensities, got " +
                         std::to_string(leds.size()));
  }
  return channel.H * leds;
}

VectorX<double> render_image(const MatrixX<double>& leds, const ChannelMatrix& channel) {
  // Row-major LED order: the transpose's column-major storage.
  const MatrixX<double> t = leds.transpose();
  return render_image(VectorX<double>(Eigen::Map<const VectorX<double>>(t.data(), t.size())), channel);
}

double sample_rotation(Rng& rng, double lo, double hi) {
  if (lo > hi) throw ArgumentError("sample_rotation: empty range");
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

ChannelCache::ChannelCache(ArrayGeometry geom, CameraModel cam, double step_deg)
    : geom_(geom), cam_(cam), step_deg_(step_deg) {
  if (!(step_deg > 0)) throw ConfigError("channel cache: grid step must be positive");
  cam_.validate();
  geom_.validate(cam_);
}

long ChannelCache::grid_index(double theta_deg) const { return std::lround(theta_deg / step_deg_); }

double ChannelCache::snap(double theta_deg) const { return static_cast<double>(grid_index(theta_deg)) * step_deg_; }

std::shared_ptr<const ChannelMatrix> ChannelCache::get(double theta_deg) const {
  const long key = grid_index(theta_deg);
  {
    std::shared_lock lock(mutex_);
    if (auto it = entries_.find(key); it != entries_.end()) return it->second;
  }
  auto built = std::make_shared<const ChannelMatrix>(
      build_channel_matrix(geom_, cam_, static_cast<double>(key) * step_deg_));
  std::unique_lock lock(mutex_);
  return entries_.try_emplace(key, std::move(built)).first->second;
}

IscSample isc_channel(const VectorX<double>& leds, const ArrayGeometry& geom, const CameraModel& cam,
                      const channel::ChannelParams& ch, Rng& rng, std::optional<double> theta_deg) {
  IscSample out;
  out.theta_deg = theta_deg ? *theta_deg : sample_rotation(rng);
  const ChannelMatrix channel = build_channel_matrix(geom, cam, out.theta_deg);
  out.image = channel::apply_optical_noise(render_image(leds, channel), ch, rng);
  return out;
}

RenderedGeometry measure_rendered_geometry(const ArrayGeometry& geom, const CameraModel& cam) {
  const ChannelMatrix channel = build_channel_matrix(geom, cam, 0.0);
  const Index L = geom.leds_per_side;
  const Index T = cam.pixels_per_side;
  if (L < 2) throw GeometryError("measure_rendered_geometry: need at least two LEDs per side");
  auto centroid = [&](Index led) {
    const auto image = channel.H.col(led);
    double x = 0.0;
    double y = 0.0;
    for (Index p = 0; p < image.size(); ++p) {
      x += image[p] * static_cast<double>(p % T);
      y += image[p] * static_cast<double>(p / T);
    }
    const double total = image.sum();
    return Eigen::Vector2d(x / total, y / total);
  };
  const Index row = L / 2;
  RenderedGeometry g;
  for (Index c = 0; c + 1 < L; ++c) g.pitch_px += (centroid(row * L + c + 1) - centroid(row * L + c)).norm();
  g.pitch_px /= static_cast<double>(L - 1);
  g.span_px = (centroid(row * L + L - 1) - centroid(row * L)).norm();
  return g;
}

}  // namespace owc::imaging
