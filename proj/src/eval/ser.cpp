#include "owc/eval/ser.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <iomanip>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <shared_mutex>
#include <thread>

namespace owc::eval {

namespace {

constexpr Index kChunk = 256;

// Clean received signals of every codeword under one channel state, plus the
// per-entry Gaussian weights the ML metric needs.
struct RenderedBank {
  MatrixX<double> clean;        // receive_size x M
  MatrixX<double> inv_two_var;  // 1 / (2 v)
  VectorX<double> log_term;     // sum_p ln(v_p) / 2 per codeword
};

RenderedBank make_bank(MatrixX<double> clean, const channel::ChannelParams& ch) {
  RenderedBank bank;
  if (ch.sigma2 > 0.0) {
    const MatrixX<double> var =
        (ch.sigma2 + ch.psi2 * ch.sigma2 * clean.array().cwiseMax(0.0)).matrix();
    bank.inv_two_var = (0.5 / var.array()).matrix();
    bank.log_term = 0.5 * var.array().log().colwise().sum().transpose();
  } else {
    bank.inv_two_var = MatrixX<double>::Ones(clean.rows(), clean.cols());
    bank.log_term = VectorX<double>::Zero(clean.cols());
  }
  bank.clean = std::move(clean);
  return bank;
}

Index decide(const VectorX<double>& y, const RenderedBank& bank) {
  const VectorX<double> metric =
      ((bank.clean.colwise() - y).array().square() * bank.inv_two_var.array()).colwise().sum().transpose() +
      bank.log_term.array();
  return models::argmax_lowest(-metric);
}

// Rendered banks keyed by rotation grid index, shared across worker threads.
class BankCache {
 public:
  BankCache(const Codebook& codebook, const Link& link, channel::ChannelParams ch)
      : codebook_(codebook), link_(link), ch_(ch) {}

  std::shared_ptr<const RenderedBank> get(double theta_deg) const {
    const long key = link_.kind == LinkKind::image_sensor ? link_.cache->grid_index(theta_deg) : 0;
    {
      std::shared_lock lock(mutex_);
      if (auto it = entries_.find(key); it != entries_.end()) return it->second;
    }
    MatrixX<double> clean;
    if (link_.kind == LinkKind::image_sensor) {
      clean = link_.cache->get(theta_deg)->H * codebook_.words;
    } else {
      clean = codebook_.words;
    }
    auto bank = std::make_shared<const RenderedBank>(make_bank(std::move(clean), ch_));
    std::unique_lock lock(mutex_);
    return entries_.try_emplace(key, std::move(bank)).first->second;
  }

 private:
  const Codebook& codebook_;
  const Link& link_;
  channel::ChannelParams ch_;
  mutable std::shared_mutex mutex_;
  mutable std::map<long, std::shared_ptr<const RenderedBank>> entries_;
};

double clamp_angle(double theta) { return std::clamp(theta, -90.0, 90.0); }

}  // namespace

SerEstimate SerEstimate::from_counts(std::int64_t errors, std::int64_t trials) {
  if (trials <= 0) throw ArgumentError("SER estimate needs at least one trial");
  SerEstimate e;
  e.errors = errors;
  e.trials = trials;
  const double n = static_cast<double>(trials);
  e.ser = static_cast<double>(errors) / n;
  e.ci95 = errors == 0 ? 3.69 / n : 1.96 * std::sqrt(e.ser * (1.0 - e.ser) / n);
  return e;
}

Codebook random_ook_codebook(Index messages, Index rows, Index cols, const VectorX<double>& duty, Rng& rng) {
  const Index n = rows * cols;
  if (duty.size() != n) throw DimensionError("random_ook: duty target must have one entry per LED");
  if (messages < 1) throw ArgumentError("random_ook: need at least one message");
  if ((duty.array() < 0.0).any() || (duty.array() > 1.0).any()) {
    throw ArgumentError("random_ook: duty targets must lie in [0, 1]");
  }
  std::vector<Index> order(static_cast<std::size_t>(messages));
  for (int attempt = 0; attempt < 100; ++attempt) {
    MatrixX<double> words = MatrixX<double>::Zero(n, messages);
    for (Index j = 0; j < n; ++j) {
      const Index ones = static_cast<Index>(std::lround(static_cast<double>(messages) * duty[j]));
      for (Index b = 0; b < messages; ++b) order[static_cast<std::size_t>(b)] = b;
      std::shuffle(order.begin(), order.end(), rng);
      for (Index k = 0; k < ones; ++k) words(j, order[static_cast<std::size_t>(k)]) = 1.0;
    }
    Codebook cb = models::make_codebook(std::move(words), rows, cols);
    cb.binary = true;
    try {
      models::require_distinct(cb);
      return cb;
    } catch (const DegenerateCodebookError&) {
    }
  }
  throw InfeasibleError("random_ook: no set of distinct codewords found in 100 draws");
}

Codebook greedy_cwc(Index messages, Index length, Index weight) {
  if (length < 1 || length > 30) throw ArgumentError("greedy_cwc: length must lie in [1, 30]");
  if (weight < 0 || weight > length) throw ArgumentError("greedy_cwc: weight must lie in [0, N]");
  std::vector<std::uint32_t> pool;
  for (std::uint32_t w = 0; w < (1u << length); ++w) {
    if (std::popcount(w) == weight) pool.push_back(w);
  }
  if (messages < 1 || static_cast<std::size_t>(messages) > pool.size()) {
    throw InfeasibleError("greedy_cwc: M = " + std::to_string(messages) + " exceeds C(N, d) = " +
                          std::to_string(pool.size()));
  }
  const auto distance = [](std::uint32_t a, std::uint32_t b) { return std::popcount(a ^ b); };
  // Lexicode at distance d: scan in order, keep words at >= d from all kept
  // ones. The largest d that still yields M words wins.
  std::vector<std::uint32_t> chosen;
  for (int d = static_cast<int>(length); d >= 1; --d) {
    chosen.clear();
    for (std::uint32_t w : pool) {
      if (std::all_of(chosen.begin(), chosen.end(), [&](std::uint32_t c) { return distance(c, w) >= d; })) {
        chosen.push_back(w);
        if (static_cast<Index>(chosen.size()) == messages) break;
      }
    }
    if (static_cast<Index>(chosen.size()) == messages) break;
  }
  MatrixX<double> words(length, messages);
  for (Index b = 0; b < messages; ++b) {
    for (Index j = 0; j < length; ++j) {
      words(j, b) = (chosen[static_cast<std::size_t>(b)] >> (length - 1 - j)) & 1u ? 1.0 : 0.0;
    }
  }
  Codebook cb = models::make_codebook(std::move(words), 1, length);
  cb.binary = true;
  return cb;
}

Codebook baseline_codebook(BaselineKind kind, Index messages, Index rows, Index cols, const VectorX<double>& target,
                           Rng& rng) {
  if (kind == BaselineKind::random_ook) return random_ook_codebook(messages, rows, cols, target, rng);
  if (target.size() != 1 || target[0] != std::round(target[0])) {
    throw ArgumentError("greedy_cwc: the weight target must be a single integer");
  }
  return greedy_cwc(messages, rows * cols, static_cast<Index>(target[0]));
}

Index min_hamming_distance(const Codebook& codebook) {
  Index best = std::numeric_limits<Index>::max();
  for (Index a = 0; a < codebook.size(); ++a) {
    for (Index b = a + 1; b < codebook.size(); ++b) {
      const Index d = (codebook.words.col(a).array() != codebook.words.col(b).array()).count();
      best = std::min(best, d);
    }
  }
  return best;
}

Link Link::image_sensor(std::shared_ptr<const imaging::ChannelCache> cache, double lo, double hi, double psi2) {
  if (!cache) throw ArgumentError("image-sensor link needs a channel cache");
  if (lo > hi) throw ArgumentError("rotation range is empty");
  return Link{LinkKind::image_sensor, std::move(cache), lo, hi, psi2};
}

Link Link::single_led(double psi2) { return Link{LinkKind::single_led, nullptr, 0.0, 0.0, psi2}; }

Index Link::receive_size(const Codebook& codebook) const {
  if (kind == LinkKind::single_led) return codebook.word_size();
  const Index t = cache->camera().pixels_per_side;
  return t * t;
}

Csi perturb_csi(double true_theta_deg, const channel::ChannelParams& ch, double error_level_deg, Rng& rng) {
  if (error_level_deg < 0) throw ArgumentError("perturb_csi: error level must be >= 0");
  Csi csi{true_theta_deg, ch};
  if (error_level_deg > 0) csi.theta_deg += std::normal_distribution<double>(0.0, error_level_deg)(rng);
  return csi;
}

Index ml_decode(const VectorX<double>& received, const MatrixX<double>& candidates, const channel::ChannelParams& ch) {
  ch.validate();
  if (received.size() != candidates.rows()) throw DimensionError("ml_decode: candidate size mismatch");
  return decide(received, make_bank(candidates, ch));
}

Index ml_decode(const VectorX<double>& received, const Codebook& codebook, const Link& link,
                const std::optional<Csi>& csi) {
  if (!csi) throw ArgumentError("ml_decode: channel state information is required");
  if (link.kind == LinkKind::single_led) return ml_decode(received, codebook.words, csi->channel);
  const auto channel = link.cache->get(clamp_angle(csi->theta_deg));
  return ml_decode(received, MatrixX<double>(channel->H * codebook.words), csi->channel);
}

AeReceiver make_ae_receiver(const models::Transceiver& model) {
  return AeReceiver{std::make_shared<const nn::NetworkF>(model.decoder.cast<float>())};
}

Codebook transmit_codebook(const models::Transceiver& model) {
  MatrixX<double> words = models::encode_all(model);
  const double gap = models::hardness_gap(words);
  if (gap <= 0.01) words = (words.array() >= 0.5).cast<double>().matrix();
  Codebook cb = models::make_codebook(std::move(words), model.codeword_rows, model.codeword_cols);
  cb.delta = model.delta();
  cb.hardness_gap = gap;
  return cb;
}

SerEstimate estimate_ser(const Codebook& transmit, const Receiver& receive, const Link& link, double snr_db,
                         std::int64_t trials, std::uint64_t seed, int threads) {
  if (trials < 1) throw ArgumentError("estimate_ser: n_trials must be >= 1");
  if (transmit.size() < 1) throw ArgumentError("estimate_ser: empty codebook");
  const channel::ChannelParams ch = channel::ChannelParams::from_snr(snr_db, link.psi2);
  const Index receive_size = link.receive_size(transmit);
  if (const auto* ae = std::get_if<AeReceiver>(&receive)) {
    if (!ae->decoder || ae->decoder->input_size() != receive_size || ae->decoder->output_size() != transmit.size()) {
      throw DimensionError("estimate_ser: decoder does not match the codebook and link");
    }
  }
  BankCache banks(transmit, link, ch);
  const std::int64_t chunks = (trials + kChunk - 1) / kChunk;
  std::vector<std::int64_t> chunk_errors(static_cast<std::size_t>(chunks), 0);
  std::atomic<std::int64_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto run_chunk = [&](std::int64_t c) {
    const std::int64_t begin = c * kChunk;
    const std::int64_t end = std::min(trials, begin + kChunk);
    const Index n = static_cast<Index>(end - begin);
    std::vector<Index> sent(static_cast<std::size_t>(n));
    MatrixX<float> batch;
    const auto* ae = std::get_if<AeReceiver>(&receive);
    if (ae) batch.resize(receive_size, n);
    std::int64_t errors = 0;
    for (Index i = 0; i < n; ++i) {
      Rng rng = make_stream(seed, "trial", static_cast<std::uint64_t>(begin + i));
      const Index message =
          std::uniform_int_distribution<Index>(0, transmit.size() - 1)(rng);
      const double theta = link.kind == LinkKind::image_sensor
                               ? imaging::sample_rotation(rng, link.rotation_lo, link.rotation_hi)
                               : 0.0;
      const auto bank = banks.get(theta);
      const VectorX<double> eps = channel::standard_normal<double>(receive_size, 1, rng);
      const VectorX<double> y = channel::add_noise(bank->clean.col(message), eps, ch);
      sent[static_cast<std::size_t>(i)] = message;
      if (ae) {
        batch.col(i) = y.cast<float>();
      } else if (const auto* ml = std::get_if<MlReceiver>(&receive)) {
        const Csi csi = perturb_csi(theta, ch, ml->csi_error_deg, rng);
        const auto est = link.kind == LinkKind::image_sensor ? banks.get(clamp_angle(csi.theta_deg)) : bank;
        errors += decide(y, *est) != message;
      } else {
        errors += std::uniform_int_distribution<Index>(0, transmit.size() - 1)(rng) != message;
      }
    }
    if (ae) {
      const auto decisions = models::decode_batch(*ae->decoder, batch);
      for (Index i = 0; i < n; ++i) errors += decisions[static_cast<std::size_t>(i)] != sent[static_cast<std::size_t>(i)];
    }
    chunk_errors[static_cast<std::size_t>(c)] = errors;
  };

  auto worker = [&] {
    for (std::int64_t c; (c = next.fetch_add(1)) < chunks;) {
      try {
        run_chunk(c);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = chunks;
      }
    }
  };
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(chunks)));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  std::int64_t errors = 0;
  for (auto e : chunk_errors) errors += e;
  return SerEstimate::from_counts(errors, trials);
}

std::vector<SweepRow> sweep_snr(const std::vector<double>& snr_list, const std::vector<SweepSystem>& systems,
                                const Link& link, std::int64_t trials, std::uint64_t seed, int threads) {
  if (snr_list.empty() || systems.empty()) throw ArgumentError("sweep_snr: SNR list and system list must be non-empty");
  if (trials < 1) throw ArgumentError("sweep_snr: n_trials must be >= 1");
  std::vector<SweepRow> rows;
  for (const auto& system : systems) {
    if (system.routes.empty()) throw ArgumentError("sweep_snr: system '" + system.name + "' has no route");
    for (std::size_t k = 0; k < snr_list.size(); ++k) {
      const double snr = snr_list[k];
      const Route* route = &system.routes.back();
      for (const auto& r : system.routes) {
        if (snr <= r.max_snr_db) {
          route = &r;
          break;
        }
      }
      const std::uint64_t row_seed = derive_seed(seed, system.name, k);
      rows.push_back({system.name, snr, estimate_ser(route->transmit, route->receive, link, snr, trials, row_seed, threads)});
    }
  }
  return rows;
}

void write_results_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "system,snr_db,trials,errors,ser,ci95\n";
  for (const auto& r : rows) {
    os << r.system << ',' << std::setprecision(6) << r.snr_db << ',' << r.estimate.trials << ','
       << r.estimate.errors << ',' << std::setprecision(8) << r.estimate.ser << ',' << r.estimate.ci95 << '\n';
  }
}

DimmingDeviation dimming_report(const Codebook& codebook, const VectorX<double>& target) {
  if (codebook.size() < 1) throw ArgumentError("dimming_report: empty codebook");
  if (target.size() != codebook.word_size()) throw DimensionError("dimming_report: target shape mismatch");
  const VectorX<double> dev = (codebook.words.rowwise().mean() - target).cwiseAbs();
  return {dev.maxCoeff(), dev.mean()};
}

}  // namespace owc::eval
