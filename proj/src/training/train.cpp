#include "owc/training/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "owc/nn/loss.hpp"
#include "owc/nn/optimizer.hpp"

namespace owc::training {

namespace {

using models::Transceiver;

Tensor<double> one_hots(Index messages) {
  return Tensor<double>::from_samples(MatrixX<double>::Identity(messages, messages));
}

bool image_link(const LinkSetup& link) { return static_cast<bool>(link.cache); }

nn::LossWithGradient<double> penalty_of(const MatrixX<double>& codewords, const LinkSetup& link,
                                        const Objective& objective) {
  if (image_link(link)) {
    return nn::dimming_penalty<double>(codewords, VectorX<double>::Constant(codewords.rows(), objective.dimming_target),
                                       objective.lambda);
  }
  return nn::weight_penalty<double>(codewords, objective.dimming_target, objective.lambda);
}

// Clean received signal of every batch sample given the codewords.
MatrixX<double> render_batch(const MatrixX<double>& codewords, const Batch& batch, const LinkSetup& link,
                             Index receive_size) {
  const Index n = static_cast<Index>(batch.messages.size());
  MatrixX<double> x(receive_size, n);
  for (Index i = 0; i < n; ++i) {
    const auto m = batch.messages[static_cast<std::size_t>(i)];
    if (image_link(link)) {
      x.col(i).noalias() = link.cache->get(batch.theta_deg[static_cast<std::size_t>(i)])->H * codewords.col(m);
    } else {
      x.col(i) = codewords.col(m);
    }
  }
  return x;
}

std::uint64_t combine(std::uint64_t a, std::uint64_t b) { return splitmix64(a ^ splitmix64(b)); }

struct CheckResult {
  double loss = 0.0;
  double ser = 0.0;
};

// Infer-mode loss and SER on the fixed validation set.
CheckResult evaluate_check(const Transceiver& model, const Batch& set, const LinkSetup& link,
                           const Objective& objective) {
  const MatrixX<double> codewords = models::encode_all(model);
  const MatrixX<double> clean = render_batch(codewords, set, link, model.receive_size());
  const MatrixX<double> received = channel::add_noise(clean, set.eps, link.channel);
  const nn::NetworkF decoder = model.decoder.cast<float>();
  const Index n = received.cols();
  double ce = 0.0;
  Index errors = 0;
  for (Index begin = 0; begin < n; begin += 256) {
    const Index count = std::min<Index>(256, n - begin);
    const MatrixX<float> chunk = received.middleCols(begin, count).cast<float>();
    const Tensor<float> out = decoder.infer(Tensor<float>::from_samples(chunk));
    const auto posterior = out.samples();
    for (Index i = 0; i < count; ++i) {
      const int label = set.messages[static_cast<std::size_t>(begin + i)];
      ce -= std::log(std::max(static_cast<double>(posterior(label, i)), nn::kLogFloor));
      errors += models::argmax_lowest(posterior.col(i)) != label;
    }
  }
  CheckResult r;
  r.loss = ce / static_cast<double>(n) + penalty_of(codewords, link, objective).value;
  r.ser = static_cast<double>(errors) / static_cast<double>(n);
  return r;
}

eval::Link eval_link(const LinkSetup& link) {
  if (image_link(link)) {
    return eval::Link::image_sensor(link.cache, link.rotation_lo, link.rotation_hi, link.channel.psi2);
  }
  return eval::Link::single_led(link.channel.psi2);
}

double snr_of(const channel::ChannelParams& ch) {
  if (ch.snr_db) return *ch.snr_db;
  return -10.0 * std::log10(ch.sigma2);
}

}  // namespace

void AnnealSchedule::validate() const {
  if (deltas.empty()) throw ConfigError("anneal schedule needs at least one stage");
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    if (!(deltas[k] > 0.0) || !std::isfinite(deltas[k])) throw ConfigError("anneal schedule slopes must be positive");
    if (k > 0 && !(deltas[k] > deltas[k - 1])) throw ConfigError("anneal schedule must be strictly increasing");
  }
  if (deltas.back() < 12.0) {
    throw ConfigError("final anneal slope " + std::to_string(deltas.back()) + " is below 12; outputs would stay soft");
  }
}

void TrainConfig::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2 (batchnorm needs batch statistics)");
  if (steps_per_stage < 1 || train_samples < 1 || valid_samples < 1 || check_samples < 1 || check_every < 1 ||
      plateau_checks < 1) {
    throw ConfigError("training counts must be positive");
  }
  if (!(plateau_tolerance >= 0.0)) throw ConfigError("plateau_tolerance must be >= 0");
  if (snr_db.empty()) throw ConfigError("at least one training SNR is required");
  if (!(rotation_lo <= rotation_hi)) throw ConfigError("rotation range is empty");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

Batch sample_batch(const Transceiver& model, const LinkSetup& link, Index size, Rng& rng) {
  Batch batch;
  batch.messages.resize(static_cast<std::size_t>(size));
  batch.theta_deg.assign(static_cast<std::size_t>(size), 0.0);
  batch.eps.resize(model.receive_size(), size);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(model.messages) - 1);
  for (Index i = 0; i < size; ++i) {
    batch.messages[static_cast<std::size_t>(i)] = pick(rng);
    if (image_link(link)) {
      batch.theta_deg[static_cast<std::size_t>(i)] =
          link.cache->snap(imaging::sample_rotation(rng, link.rotation_lo, link.rotation_hi));
    }
    batch.eps.col(i) = channel::standard_normal<double>(model.receive_size(), 1, rng);
  }
  return batch;
}

StepResult forward_backward(Transceiver& model, const Batch& batch, const LinkSetup& link, const Objective& objective,
                            bool backward, bool signature) {
  const Tensor<double> codeword_tensor = model.encoder.forward(one_hots(model.messages), nn::Mode::train);
  const MatrixX<double> codewords = codeword_tensor.samples();
  const MatrixX<double> clean = render_batch(codewords, batch, link, model.receive_size());
  const MatrixX<double> received = channel::add_noise(clean, batch.eps, link.channel);
  const Tensor<double> posterior = model.decoder.forward(Tensor<double>::from_samples(received), nn::Mode::train);

  const auto ce = nn::cross_entropy_batch<double>(posterior.samples(), batch.messages);
  const auto penalty = penalty_of(codewords, link, objective);
  StepResult r;
  r.cross_entropy = ce.value;
  r.penalty = penalty.value;
  r.loss = ce.value + penalty.value;
  if (signature) r.signature = combine(model.encoder.pattern_signature(), model.decoder.pattern_signature());
  if (!backward) return r;

  const Tensor<double> grad_received =
      model.decoder.backward(Tensor<double>::from_samples(ce.grad, model.decoder.output_shape()));
  const MatrixX<double> grad_clean =
      (grad_received.samples().array() * channel::noise_jacobian(clean, batch.eps, link.channel).array()).matrix();
  MatrixX<double> grad_codewords = penalty.grad;
  for (Index i = 0; i < grad_clean.cols(); ++i) {
    const auto m = batch.messages[static_cast<std::size_t>(i)];
    if (image_link(link)) {
      grad_codewords.col(m).noalias() +=
          link.cache->get(batch.theta_deg[static_cast<std::size_t>(i)])->H.transpose() * grad_clean.col(i);
    } else {
      grad_codewords.col(m) += grad_clean.col(i);
    }
  }
  model.encoder.backward(Tensor<double>::from_samples(grad_codewords, model.encoder.output_shape()));
  return r;
}

double dimming_deviation(const Transceiver& model, double target) {
  const MatrixX<double> words = models::encode_all(model);
  if (model.kind == models::ModelKind::ook) return (words.colwise().sum().array() - target).abs().maxCoeff();
  return (words.rowwise().mean().array() - target).abs().maxCoeff();
}

nn::GradCheckReport pipeline_grad_check(Transceiver& model, const LinkSetup& link, const Objective& objective,
                                        Index batch_size, double step, Index samples_per_probe, Rng& rng) {
  const Batch batch = sample_batch(model, link, batch_size, rng);
  auto evaluate = [&]() -> nn::Evaluation {
    const StepResult r = forward_backward(model, batch, link, objective, false, true);
    return {r.loss, r.signature};
  };
  forward_backward(model, batch, link, objective, true);
  std::vector<nn::GradientProbe> probes;
  for (auto* net : {&model.encoder, &model.decoder}) {
    const std::string prefix = net == &model.encoder ? "encoder." : "decoder.";
    auto& tensors = net->params().tensors;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      if (tensors[i].trainable) probes.push_back({prefix + tensors[i].name, &tensors[i].value, net->gradients()[i]});
    }
  }
  return nn::finite_difference_check(evaluate, probes, step, samples_per_probe, rng);
}

void write_report_csv(std::ostream& os, const TrainReport& report) {
  os << "stage,step,loss,val_ser,dim_dev\n";
  os.precision(10);
  for (const auto& r : report.records) {
    os << r.stage << ',' << r.step << ',' << r.loss << ',' << r.val_ser << ',' << r.dim_dev << '\n';
  }
}

TrainReport multistage_train(Transceiver& model, const AnnealSchedule& schedule, const TrainConfig& cfg,
                             const LinkSetup& link, const StageCallback& on_stage, const RecordCallback& on_record) {
  schedule.validate();
  cfg.validate();
  link.channel.validate();
  const auto started = std::chrono::steady_clock::now();

  const Objective objective{cfg.lambda, cfg.dimming_target};
  nn::OptimizerState<double> encoder_opt;
  nn::OptimizerState<double> decoder_opt;
  encoder_opt.learning_rate = decoder_opt.learning_rate = cfg.learning_rate;

  const Index stages = static_cast<Index>(schedule.deltas.size());
  const std::int64_t total_steps = (cfg.train_samples + cfg.batch_size - 1) / cfg.batch_size;
  const Index steps_per_stage =
      std::max<Index>(1, std::min<Index>(cfg.steps_per_stage, static_cast<Index>((total_steps + stages - 1) / stages)));

  Rng check_rng = make_stream(cfg.seed, "valid");
  const Batch check_set = sample_batch(model, link, cfg.check_samples, check_rng);
  const Tensor<double> inputs = one_hots(model.messages);

  TrainReport report;
  std::uint64_t global_step = 0;
  for (Index stage = 0; stage < stages; ++stage) {
    model.set_delta(schedule.deltas[static_cast<std::size_t>(stage)]);
    StageSummary summary;
    summary.delta = schedule.deltas[static_cast<std::size_t>(stage)];
    double best = std::numeric_limits<double>::infinity();
    Index stale = 0;
    double window = 0.0;
    Index window_steps = 0;
    for (Index step = 1; step <= steps_per_stage; ++step) {
      Rng rng = make_stream(cfg.seed, "train", global_step++);
      const Batch batch = sample_batch(model, link, cfg.batch_size, rng);
      const std::string where = "stage " + std::to_string(stage) + ", step " + std::to_string(step);
      StepResult r;
      try {
        r = forward_backward(model, batch, link, objective, true);
        if (!std::isfinite(r.loss)) throw NumericError("non-finite training loss");
        nn::optimizer_step(model.encoder.params(), model.encoder.gradients(), encoder_opt);
        nn::optimizer_step(model.decoder.params(), model.decoder.gradients(), decoder_opt);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at " + where + " (delta " +
                           std::to_string(schedule.deltas[static_cast<std::size_t>(stage)]) + ")");
      }
      window += r.loss;
      ++window_steps;
      summary.steps = step;

      if (step % cfg.check_every != 0 && step != steps_per_stage) continue;
      model.encoder.calibrate_batchnorm(inputs);
      const CheckResult check = evaluate_check(model, check_set, link, objective);
      TrainRecord record{stage, step, window / static_cast<double>(window_steps), check.ser,
                         dimming_deviation(model, cfg.dimming_target)};
      window = 0.0;
      window_steps = 0;
      report.records.push_back(record);
      if (on_record) on_record(record);
      summary.val_loss = check.loss;
      summary.val_ser = check.ser;
      summary.dim_dev = record.dim_dev;
      if (best - check.loss < cfg.plateau_tolerance) {
        if (++stale >= cfg.plateau_checks) {
          summary.early_stopped = true;
          break;
        }
      } else {
        stale = 0;
      }
      best = std::min(best, check.loss);
    }
    report.stages.push_back(summary);
    if (on_stage) on_stage(stage, model);
  }

  report.final_hardness_gap = models::hardness_gap(models::encode_all(model));
  report.validation_ser =
      validation_ser(model, link, cfg.valid_samples, derive_seed(cfg.seed, "validation"), cfg.threads).ser;
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

eval::SerEstimate validation_ser(const Transceiver& model, const LinkSetup& link, std::int64_t trials,
                                 std::uint64_t seed, int threads) {
  return eval::estimate_ser(eval::transmit_codebook(model), eval::make_ae_receiver(model), eval_link(link), snr_of(link.channel), trials,
                            seed, threads);
}

LambdaSelection choose_lambda(std::vector<LambdaTrial> table, double max_deviation) {
  if (table.empty()) throw ArgumentError("select_lambda: the candidate list is empty");
  for (auto& t : table) t.feasible = t.dim_dev <= max_deviation;
  const bool any_feasible = std::any_of(table.begin(), table.end(), [](const LambdaTrial& t) { return t.feasible; });
  const LambdaTrial* best = nullptr;
  for (const auto& t : table) {
    if (any_feasible && !t.feasible) continue;
    if (!best) {
      best = &t;
      continue;
    }
    const auto key = [&](const LambdaTrial& x) {
      return any_feasible ? std::tuple(x.val_ser, x.dim_dev, x.lambda) : std::tuple(x.dim_dev, x.val_ser, x.lambda);
    };
    if (key(t) < key(*best)) best = &t;
  }
  return {best->lambda, any_feasible, std::move(table)};
}

LambdaSelection select_lambda(const std::vector<double>& candidates, const Transceiver& prototype,
                              const AnnealSchedule& schedule, const TrainConfig& cfg, const LinkSetup& link,
                              double max_deviation) {
  if (candidates.empty()) throw ArgumentError("select_lambda: the candidate list is empty");
  std::vector<LambdaTrial> table;
  for (double lambda : candidates) {
    Transceiver model = prototype;
    TrainConfig run = cfg;
    run.lambda = lambda;
    const TrainReport report = multistage_train(model, schedule, run, link);
    const MatrixX<double> words = eval::transmit_codebook(model).words;
    const double dev = model.kind == models::ModelKind::ook
                           ? (words.colwise().sum().array() - cfg.dimming_target).abs().maxCoeff()
                           : (words.rowwise().mean().array() - cfg.dimming_target).abs().maxCoeff();
    table.push_back({lambda, report.validation_ser, dev, false});
  }
  return choose_lambda(std::move(table), max_deviation);
}

models::Codebook finalize_binary(const Transceiver& model, double threshold, double tolerance) {
  const MatrixX<double> words = models::encode_all(model);
  const MatrixX<double> distance = words.array().min(1.0 - words.array()).abs().matrix();
  Index row = 0;
  Index col = 0;
  const double gap = distance.maxCoeff(&row, &col);
  if (gap > tolerance) {
    std::ostringstream os;
    os << "annealing incomplete: codeword " << col << " entry " << row << " = " << words(row, col)
       << " is " << gap << " from {0, 1} (tolerance " << tolerance << ")";
    throw AnnealingIncompleteError(os.str());
  }
  return models::export_codebook(model, threshold, tolerance);
}

}  // namespace owc::training
