#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "owc/channel/optical.hpp"
#include "owc/eval/ser.hpp"
#include "owc/imaging/isc.hpp"
#include "owc/models/transceiver.hpp"
#include "owc/nn/gradcheck.hpp"

namespace owc::training {

/// One slope per stage; stages run in order with parameters carried over.
struct AnnealSchedule {
  std::vector<double> deltas{1, 2, 4, 8, 16, 32, 64};

  /// Strictly increasing, non-empty, final slope >= 12 so that sig(+-0.5)
  /// lands within 0.01 of {1, 0}.
  void validate() const;
};

struct TrainConfig {
  double lambda = 1.0;
  double learning_rate = 1e-3;
  Index batch_size = 256;
  Index steps_per_stage = 2000;
  std::int64_t train_samples = 100000;  // total budget shared by all stages
  std::int64_t valid_samples = 100000;  // trials of the final validation SER
  Index check_samples = 2048;           // fixed validation set used for early stopping
  Index check_every = 25;               // steps between validation checks
  Index plateau_checks = 5;
  double plateau_tolerance = 1e-4;
  std::vector<double> snr_db{10.0, 14.0};
  double dimming_target = 20.0 / 64.0;  // per-LED mean for ISC links, codeword weight d for OOK
  double rotation_lo = -30.0;
  double rotation_hi = 30.0;
  std::uint64_t seed = 1;
  int threads = 1;  // final validation only; the optimization itself is single-threaded

  void validate() const;
};

/// Everything a training step needs to know about the link it trains over.
struct LinkSetup {
  channel::ChannelParams channel;
  std::shared_ptr<const imaging::ChannelCache> cache;  // null for the single-LED OOK link
  double rotation_lo = 0.0;
  double rotation_hi = 0.0;
};

/// A minibatch of (message, snapped rotation, noise) triples.
struct Batch {
  std::vector<int> messages;
  std::vector<double> theta_deg;
  MatrixX<double> eps;  // receive_size x B
};

Batch sample_batch(const models::Transceiver& model, const LinkSetup& link, Index size, Rng& rng);

/// Training objective: mean cross-entropy plus the dimming penalty
/// (lambda ||mean_b S_b - D||^2 on image-sensor links, the mean of
/// lambda (sum_j s_bj - d)^2 on the OOK link).
struct Objective {
  double lambda = 0.0;
  double dimming_target = 0.0;
};

struct StepResult {
  double loss = 0.0;
  double cross_entropy = 0.0;
  double penalty = 0.0;
  std::uint64_t signature = 0;
};

/// Train-mode forward through encoder, channel (noise frozen in `batch`)
/// and decoder. With `backward` set, leaves parameter gradients in both
/// networks. The pattern signature is only computed on request.
StepResult forward_backward(models::Transceiver& model, const Batch& batch, const LinkSetup& link,
                            const Objective& objective, bool backward, bool signature = false);

/// Dimming deviation of the current (infer-mode) codebook: max entrywise
/// |mean - D| for image-sensor links, max |weight - d| for OOK.
double dimming_deviation(const models::Transceiver& model, double target);

/// Finite-difference check of the whole link (encoder parameters and decoder
/// parameters, gradients flowing through the channel) with the batch noise
/// frozen.
nn::GradCheckReport pipeline_grad_check(models::Transceiver& model, const LinkSetup& link, const Objective& objective,
                                        Index batch_size, double step, Index samples_per_probe, Rng& rng);

struct TrainRecord {
  Index stage = 0;
  Index step = 0;  // steps completed within the stage
  double loss = 0.0;
  double val_ser = 0.0;
  double dim_dev = 0.0;
};

struct StageSummary {
  double delta = 0.0;
  Index steps = 0;
  bool early_stopped = false;
  double val_loss = 0.0;
  double val_ser = 0.0;
  double dim_dev = 0.0;
};

struct TrainReport {
  std::vector<TrainRecord> records;
  std::vector<StageSummary> stages;
  double final_hardness_gap = 0.0;
  double validation_ser = 0.0;
  double wall_seconds = 0.0;  // not written to CSV, which must be reproducible
};

/// `stage,step,loss,val_ser,dim_dev` rows.
void write_report_csv(std::ostream& os, const TrainReport& report);

/// Called after every stage with the stage index and the model as it leaves
/// that stage.
using StageCallback = std::function<void(Index, const models::Transceiver&)>;
using RecordCallback = std::function<void(const TrainRecord&)>;

/// Annealed training: stage k sets the encoder slope to deltas[k] and runs
/// Adam on freshly sampled batches until the stage's step budget is spent
/// or the validation loss stops improving. Stages warm-start from the
/// previous one; the optimizer state carries over as well.
TrainReport multistage_train(models::Transceiver& model, const AnnealSchedule& schedule, const TrainConfig& cfg,
                             const LinkSetup& link, const StageCallback& on_stage = {},
                             const RecordCallback& on_record = {});

/// Validation SER of the model as it stands: exported codebook (binary when
/// hard enough) sent over the link and decoded by the model's own decoder.
eval::SerEstimate validation_ser(const models::Transceiver& model, const LinkSetup& link, std::int64_t trials,
                                 std::uint64_t seed, int threads);

struct LambdaTrial {
  double lambda = 0.0;
  double val_ser = 0.0;
  double dim_dev = 0.0;
  bool feasible = false;
};

struct LambdaSelection {
  double lambda = 0.0;
  bool feasible = false;  // false when no candidate met the deviation limit
  std::vector<LambdaTrial> table;
};

/// Picks the lowest-SER candidate among those whose dimming deviation is
/// within `max_deviation` (ties: smaller deviation, then smaller lambda).
/// With no feasible candidate the smallest deviation wins and the result is
/// flagged infeasible.
LambdaSelection choose_lambda(std::vector<LambdaTrial> table, double max_deviation = 0.02);

/// Trains a fresh copy of `prototype` per candidate (same seed) and applies
/// choose_lambda to the resulting validation table.
LambdaSelection select_lambda(const std::vector<double>& candidates, const models::Transceiver& prototype,
                              const AnnealSchedule& schedule, const TrainConfig& cfg, const LinkSetup& link,
                              double max_deviation = 0.02);

/// export_codebook with the hardness guard enforced: throws
/// AnnealingIncompleteError naming the worst entry when the gap exceeds
/// `tolerance`.
models::Codebook finalize_binary(const models::Transceiver& model, double threshold = 0.5, double tolerance = 0.01);

}  // namespace owc::training
