#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "owc/imaging/isc.hpp"
#include "owc/models/transceiver.hpp"
#include "owc/training/train.hpp"

namespace owc::io {

/// Everything one experiment needs. Loaded from a line-oriented
/// `key = value` file with `#` comments and dotted sections, e.g.
///
///     camera.pixel_um = 5.6
///     train.snr_db = 10, 14
struct ExperimentConfig {
  models::ModelKind model = models::ModelKind::cae;
  Index messages = 64;
  Index filters = 0;  // 0: one filter per message

  imaging::ArrayGeometry geometry;
  imaging::CameraModel camera;
  double rotation_step_deg = 0.5;
  double psi2 = 5.0;

  training::TrainConfig train;
  training::AnnealSchedule schedule;
  std::vector<double> lambda_candidates;  // non-empty: choose lambda before the final runs

  models::OokAeSpec ook;  // ook.messages mirrors `messages`

  std::vector<double> eval_snr_db{8, 10, 12, 14, 16};
  std::int64_t eval_trials = 100000;
  double eval_rotation_lo = -30.0;
  double eval_rotation_hi = 30.0;
  std::vector<double> csi_error_deg{5.0};  // one imperfect-CSI baseline per level

  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 1;
  int threads = 1;

  /// Runs every module's own invariant checks; throws ConfigError.
  void validate() const;
};

/// Parses config text. Every malformed or unknown line raises ConfigError
/// with `source:line:` in front of the message.
ExperimentConfig parse_config(std::istream& in, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// The keys parse_config accepts, in documentation order.
std::vector<std::string> config_keys();

}  // namespace owc::io
