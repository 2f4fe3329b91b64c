#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "owc/eval/ser.hpp"
#include "owc/io/config.hpp"
#include "owc/training/train.hpp"

namespace owc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command (`args` excludes the program name):
///
///   train            multistage training per training SNR; model, report and codebook files
///   eval             SER of trained models over an SNR list
///   sweep            eval plus the classical baselines
///   gradcheck        finite-difference check of the configured model
///   export-codebook  codebook CSV of a trained model
///   channel-stats    noise and imaging self-tests
///
/// Returns 0 on success, 1 on runtime failure, 2 on config or flag errors.
/// Diagnostics go to `err`, results and progress to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Image-sensor cache, channel and rotation range for training at `snr_db`.
training::LinkSetup training_link(const io::ExperimentConfig& cfg, double snr_db);

/// Untrained model of the configured kind.
models::Transceiver build_model(const io::ExperimentConfig& cfg);

/// Evaluation link of the configured kind with the eval rotation range.
eval::Link evaluation_link(const io::ExperimentConfig& cfg, models::ModelKind kind);

/// Groups models into sweep systems named after their kind ("_norot" when
/// trained without rotation). Models of one system are routed by trained
/// SNR: each serves test SNRs up to the midpoint to the next model.
std::vector<eval::SweepSystem> model_systems(const std::vector<models::Transceiver>& models);

/// Classical baselines for the link: random OOK with ML decoding under
/// perfect and perturbed CSI (image sensor), greedy CWC with ML (OOK).
std::vector<eval::SweepSystem> baseline_systems(const io::ExperimentConfig& cfg, models::ModelKind kind);

/// "10", "12.5", ... for file names.
std::string snr_tag(double snr_db);

}  // namespace owc::cli
