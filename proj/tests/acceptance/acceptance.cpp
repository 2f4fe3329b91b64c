// Acceptance run: prints one PASS/FAIL line per criterion and a summary.
// Exit status is 0 when every criterion ran to a verdict; --strict also
// requires every verdict to be PASS.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "owc/channel/optical.hpp"
#include "owc/cli/app.hpp"
#include "owc/eval/ser.hpp"
#include "owc/heap.hpp"
#include "owc/imaging/isc.hpp"
#include "owc/io/config.hpp"
#include "owc/io/files.hpp"
#include "owc/nn/gradcheck.hpp"
#include "owc/nn/kernels.hpp"
#include "owc/training/train.hpp"

using namespace owc;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

constexpr std::uint64_t kSeed = 2024;

// --quick shrinks every count for a smoke run of the harness itself
struct Scale {
  std::int64_t trials = 100000;
  std::int64_t isc_train = 100000;
  std::int64_t ook_train = 1000000;
  std::int64_t valid = 20000;
};
Scale g_scale;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

std::string fmt_ser(const eval::SerEstimate& e) { return fmt(e.ser) + " +- " + fmt(e.ci95, 2); }

struct Verdict {
  bool pass = false;
  std::string detail;
};

class Report {
 public:
  void record(int id, const std::string& name, const Verdict& v, double secs) {
    std::cout << (v.pass ? "PASS" : "FAIL") << "  [" << id << "] " << name << ": " << v.detail << " (" << std::fixed
              << std::setprecision(1) << secs << " s)" << std::defaultfloat << std::endl;
    passed_ += v.pass ? 1 : 0;
    ++total_;
  }
  int passed() const { return passed_; }
  int total() const { return total_; }

 private:
  int passed_ = 0;
  int total_ = 0;
};

// ---------------------------------------------------------------------------
// independent oracles

MatrixX<double> random_matrix(Index r, Index c, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  MatrixX<double> m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

// same-padded cross-correlation, filters flat [co][ci][ky][kx]
VectorX<double> conv_oracle(const VectorX<double>& x, const VectorX<double>& f, const VectorX<double>& bias,
                            const nn::Conv2dSpec& s) {
  const Index r = s.kernel / 2;
  VectorX<double> y(s.out_channels * s.height * s.width);
  for (Index co = 0; co < s.out_channels; ++co) {
    for (Index i = 0; i < s.height; ++i) {
      for (Index j = 0; j < s.width; ++j) {
        double acc = bias[co];
        for (Index ci = 0; ci < s.in_channels; ++ci) {
          for (Index ky = 0; ky < s.kernel; ++ky) {
            for (Index kx = 0; kx < s.kernel; ++kx) {
              const Index yy = i + ky - r;
              const Index xx = j + kx - r;
              if (yy < 0 || yy >= s.height || xx < 0 || xx >= s.width) continue;
              acc += f[((co * s.in_channels + ci) * s.kernel + ky) * s.kernel + kx] * x[(ci * s.height + yy) * s.width + xx];
            }
          }
        }
        y[(co * s.height + i) * s.width + j] = acc;
      }
    }
  }
  return y;
}

// min ||s - v||^2 over 0 <= s <= peak, mean(s) = target, by enumerating
// which coordinates sit at 0, at peak, or free with a common shift
VectorX<double> qp_oracle(const VectorX<double>& v, double peak, double target) {
  const Index n = v.size();
  Index combos = 1;
  for (Index i = 0; i < n; ++i) combos *= 3;
  double best = std::numeric_limits<double>::infinity();
  VectorX<double> best_s = VectorX<double>::Constant(n, std::nan(""));
  for (Index code = 0; code < combos; ++code) {
    VectorX<double> s(n);
    std::vector<Index> free;
    double fixed = 0.0;
    Index c = code;
    for (Index i = 0; i < n; ++i, c /= 3) {
      if (c % 3 == 0) {
        s[i] = 0.0;
      } else if (c % 3 == 1) {
        s[i] = peak;
        fixed += peak;
      } else {
        free.push_back(i);
      }
    }
    const double need = target * static_cast<double>(n) - fixed;
    if (free.empty()) {
      if (std::abs(need) > 1e-12) continue;
    } else {
      double vsum = 0.0;
      for (Index i : free) vsum += v[i];
      const double mu = (need - vsum) / static_cast<double>(free.size());
      bool ok = true;
      for (Index i : free) {
        s[i] = v[i] + mu;
        ok = ok && s[i] >= -1e-12 && s[i] <= peak + 1e-12;
      }
      if (!ok) continue;
    }
    const double obj = (s - v).squaredNorm();
    if (obj < best) {
      best = obj;
      best_s = s;
    }
  }
  return best_s;
}

// ---------------------------------------------------------------------------
// criteria 1-4

Verdict gradient_fidelity() {
  using namespace nn;
  Rng rng(kSeed);
  double worst = 0.0;
  std::string worst_where;
  bool ok = true;
  const auto note = [&](const std::string& what, const GradCheckReport& r) {
    ok = ok && r.passed();
    if (r.max_relative_error >= worst) {
      worst = r.max_relative_error;
      worst_where = what;
    }
  };
  const auto input = [&rng](Index size, Index batch) { return TensorD::from_samples(random_matrix(size, batch, rng)); };

  struct Case {
    std::string name;
    std::vector<LayerSpec> specs;
    Index in;
  };
  const std::vector<Case> layers{
      {"dense+relu", {DenseSpec{5, 4, true}, ActivationSpec{Activation::relu}}, 5},
      {"conv3", {Conv2dSpec{2, 3, 3, 4, 5, true}}, 40},
      {"conv5", {Conv2dSpec{1, 2, 5, 6, 6, false}}, 36},
      {"maxpool", {MaxPool2dSpec{2, 4, 4, 2}}, 32},
      {"batchnorm", {DenseSpec{4, 12, true}, BatchNormSpec{3, 4}}, 4},
      {"sigmoid", {DenseSpec{4, 4, true}, ActivationSpec{Activation::sigmoid}}, 4},
      {"param_sigmoid", {DenseSpec{4, 3, true}, ActivationSpec{Activation::param_sigmoid, 4.0}}, 4},
  };
  for (const auto& [name, specs, in] : layers) {
    NetworkD net(specs, in);
    net.initialize(rng);
    note(name, grad_check(net, input(in, 4), 1e-6, 20, rng));
  }
  NetworkD soft({DenseSpec{6, 5, true}, ActivationSpec{Activation::softmax}}, 6);
  soft.initialize(rng);
  note("softmax+xent", grad_check(soft, input(6, 4), 1e-6, 20, rng, {0, 4, 2, 2}));

  // full-size graphs with the channel in the loop and the noise frozen
  io::ExperimentConfig cfg;
  for (const auto kind : {models::ModelKind::cae, models::ModelKind::fae, models::ModelKind::ook}) {
    cfg.model = kind;
    cfg.messages = kind == models::ModelKind::ook ? 16 : 64;
    cfg.ook.length = 8;
    cfg.train.dimming_target = kind == models::ModelKind::ook ? 4.0 : 20.0 / 64.0;
    models::Transceiver model = cli::build_model(cfg);
    model.initialize(rng);
    model.set_delta(2.0);
    const auto link = cli::training_link(cfg, 10.0);
    note(models::kind_name(kind), training::pipeline_grad_check(model, link, {10.0, cfg.train.dimming_target}, 4, 1e-5,
                                                                4, rng));
  }
  return {ok, "max relative error " + fmt(worst, 3) + " (" + worst_where + ")"};
}

Verdict oracle_equivalence() {
  Rng rng(kSeed + 1);
  std::uniform_int_distribution<int> dim(1, 4);
  std::uniform_int_distribution<int> side(2, 8);
  double conv_err = 0.0;
  for (int n = 0; n < 100; ++n) {
    nn::Conv2dSpec s;
    s.in_channels = dim(rng);
    s.out_channels = dim(rng);
    s.kernel = (n % 2) ? 3 : 5;
    s.height = side(rng);
    s.width = side(rng);
    const MatrixX<double> x = random_matrix(s.in_channels * s.height * s.width, 2, rng);
    const VectorX<double> f = random_matrix(s.out_channels * s.in_channels * s.kernel * s.kernel, 1, rng);
    const VectorX<double> b = random_matrix(s.out_channels, 1, rng);
    const Eigen::Map<const MatrixX<double>> fv(f.data(), s.in_channels * s.kernel * s.kernel, s.out_channels);
    const MatrixX<double> y = nn::conv2d_forward(x, fv, b, s);
    for (Index col = 0; col < 2; ++col) {
      conv_err = std::max(conv_err, (y.col(col) - conv_oracle(x.col(col), f, b, s)).cwiseAbs().maxCoeff());
    }
  }

  double pool_err = 0.0;
  for (int n = 0; n < 100; ++n) {
    const Index c = dim(rng), h = 2 * dim(rng), w = 2 * dim(rng);
    const nn::MaxPool2dSpec s{c, h, w, 2};
    const MatrixX<double> x = random_matrix(c * h * w, 2, rng);
    const MatrixX<double> y = nn::maxpool2d_forward(x, s, nullptr);
    for (Index b = 0; b < 2; ++b) {
      for (Index ch = 0; ch < c; ++ch) {
        for (Index oy = 0; oy < h / 2; ++oy) {
          for (Index ox = 0; ox < w / 2; ++ox) {
            double m = -std::numeric_limits<double>::infinity();
            for (Index i = 0; i < 2; ++i) {
              for (Index j = 0; j < 2; ++j) m = std::max(m, x((ch * h + 2 * oy + i) * w + 2 * ox + j, b));
            }
            pool_err = std::max(pool_err, std::abs(y((ch * (h / 2) + oy) * (w / 2) + ox, b) - m));
          }
        }
      }
    }
  }

  std::uniform_int_distribution<int> pdim(1, 6);
  std::uniform_real_distribution<double> u(-1.0, 2.0);
  std::uniform_real_distribution<double> t(0.0, 1.0);
  double proj_err = 0.0;
  for (int n = 0; n < 1000; ++n) {
    VectorX<double> v(pdim(rng));
    for (Index i = 0; i < v.size(); ++i) v[i] = u(rng);
    const double target = t(rng);
    proj_err = std::max(proj_err, (models::project_dimming(v, 1.0, target) - qp_oracle(v, 1.0, target)).cwiseAbs().maxCoeff());
  }
  const bool ok = conv_err <= 1e-12 && pool_err <= 1e-12 && proj_err <= 1e-6;
  return {ok, "conv " + fmt(conv_err, 2) + ", maxpool " + fmt(pool_err, 2) + ", projection " + fmt(proj_err, 2)};
}

Verdict channel_statistics() {
  const channel::ChannelParams ch{0.1, 5.0, std::nullopt};
  bool ok = true;
  std::string detail;
  for (double s : {0.0, 0.25, 1.0}) {
    Rng rng = make_stream(kSeed, "acceptance-noise", static_cast<std::uint64_t>(s * 100));
    const VectorX<double> r = channel::apply_optical_noise(VectorX<double>::Constant(1000000, s), ch, rng);
    const double mean = r.mean();
    const double var = (r.array() - mean).square().sum() / static_cast<double>(r.size() - 1);
    const double expected = 0.1 * (1.0 + 5.0 * s);
    const double rel = std::abs(var - expected) / expected;
    const double bias = std::abs(mean - s);
    ok = ok && rel <= 0.02 && bias <= 4.0 * std::sqrt(expected) / 1e3;
    detail += (detail.empty() ? "" : "; ") + std::string("s=") + fmt(s) + " var err " + fmt(100 * rel, 2) + "%, bias " +
              fmt(bias, 2);
  }
  return {ok, detail};
}

Verdict imaging_geometry() {
  const imaging::ArrayGeometry geom;
  const imaging::CameraModel cam;
  const auto g = imaging::measure_rendered_geometry(geom, cam);
  // thin-lens oracle: image pitch = object pitch * f / (z - f), in pixels
  const double lens_pitch = geom.pitch_m * cam.focal_m / (geom.distance_m - cam.focal_m) / cam.pixel_m;
  Rng rng(kSeed + 2);
  double lin = 0.0;
  for (double theta : {-30.0, 0.0, 17.0, 29.5}) {
    const auto h = imaging::build_channel_matrix(geom, cam, theta);
    const VectorX<double> a = random_matrix(25, 1, rng), b = random_matrix(25, 1, rng);
    const VectorX<double> lhs = imaging::render_image(VectorX<double>(0.7 * a - 2.0 * b), h);
    const VectorX<double> rhs = 0.7 * imaging::render_image(a, h) - 2.0 * imaging::render_image(b, h);
    lin = std::max(lin, (lhs - rhs).cwiseAbs().maxCoeff());
  }
  const bool ok = std::abs(g.pitch_px - 1.88) <= 0.05 && std::abs(g.span_px - 7.5) <= 0.2 &&
                  std::abs(lens_pitch - 1.88) <= 0.05 && lin <= 1e-12;
  return {ok, "pitch " + fmt(g.pitch_px) + " px (thin lens " + fmt(lens_pitch) + "), span " + fmt(g.span_px) +
                  " px, linearity " + fmt(lin, 2)};
}

// ---------------------------------------------------------------------------
// training runs through the command line front end

class Runner {
 public:
  explicit Runner(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

  const fs::path& root() const { return root_; }

  fs::path write_config(const std::string& name, const std::string& text) const {
    const fs::path p = root_ / (name + ".cfg");
    std::ofstream(p) << text;
    return p;
  }

  // Runs the CLI with output appended to <log>.log; returns the exit code.
  int cli(const std::string& log, const std::vector<std::string>& args) const {
    std::ofstream os(root_ / (log + ".log"), std::ios::app);
    os << "$ owc";
    for (const auto& a : args) os << ' ' << a;
    os << '\n';
    return cli::run(args, os, os);
  }

 private:
  fs::path root_;
};

std::string isc_config(const fs::path& out, const std::string& kind, const std::string& extra = "") {
  std::ostringstream os;
  os << "model.kind = " << kind << "\n"
     << "model.messages = 64\n"
     << "train.batch_size = 64\n"
     << "train.train_samples = " << g_scale.isc_train << "\n"
     << "train.lambda = 1\n"
     << "train.valid_samples = " << g_scale.valid << "\n"
     << "train.check_samples = 1024\n"
     << "train.check_every = 50\n"
     << "eval.trials = " << g_scale.trials << "\n"
     << "threads = 8\n"
     << "seed = " << kSeed << "\n"
     << "output_dir = " << out.string() << "\n"
     << extra;
  return os.str();
}

std::string ook_config(const fs::path& out) {
  std::ostringstream os;
  os << "model.kind = ook\n"
     << "model.messages = 16\n"
     << "ook.length = 8\n"
     << "train.dimming_target = 4\n"
     << "train.lambda = 1\n"
     << "train.batch_size = 256\n"
     << "train.train_samples = " << g_scale.ook_train << "\n"
     << "train.valid_samples = " << g_scale.valid << "\n"
     << "train.snr_db = 10\n"
     << "eval.snr_db = 10\n"
     << "eval.trials = " << g_scale.trials << "\n"
     << "threads = 8\n"
     << "seed = " << kSeed << "\n"
     << "output_dir = " << out.string() << "\n";
  return os.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

const eval::SerEstimate& find_row(const std::vector<eval::SweepRow>& rows, const std::string& system, double snr) {
  for (const auto& r : rows) {
    if (r.system == system && r.snr_db == snr) return r.estimate;
  }
  throw Error("no sweep row for " + system + " at " + fmt(snr) + " dB");
}

Verdict annealing_contract(const Runner& run, const fs::path& cfg_path) {
  const auto t0 = Clock::now();
  const int code = run.cli("cae", {"train", "--config", cfg_path.string(), "--snr-list", "14"});
  const double secs = seconds_since(t0);
  const fs::path model_path = run.root() / "cae" / "cae_snr14.owcm";
  if (!fs::exists(model_path)) return {false, "training failed (exit " + std::to_string(code) + ")"};
  const models::Transceiver model = io::load_model(model_path);
  std::string why;
  try {
    const models::Codebook cb = training::finalize_binary(model);
    const auto dev = eval::dimming_report(cb, VectorX<double>::Constant(cb.word_size(), 20.0 / 64.0));
    const bool ok = cb.binary && cb.hardness_gap <= 0.01 && dev.max <= 0.02 && secs <= 1800.0;
    return {ok, "hardness gap " + fmt(cb.hardness_gap, 2) + ", " + std::to_string(cb.size()) +
                    " distinct codewords, max |mean - D| " + fmt(dev.max, 3) + ", train time " + fmt(secs, 4) + " s"};
  } catch (const Error& e) {
    return {false, e.what()};
  }
}

Verdict ook_path(const Runner& run) {
  const fs::path dir = run.root() / "ook";
  const fs::path cfg_path = run.write_config("ook", ook_config(dir));
  run.cli("ook", {"train", "--config", cfg_path.string()});
  const fs::path model_path = dir / "ook_snr10.owcm";
  if (!fs::exists(model_path)) return {false, "training failed"};
  models::Codebook cb;
  try {
    cb = training::finalize_binary(io::load_model(model_path));
  } catch (const Error& e) {
    return {false, e.what()};
  }
  bool exact = cb.binary;
  for (Index m = 0; m < cb.size(); ++m) exact = exact && cb.words.col(m).sum() == 4.0;

  if (run.cli("ook", {"sweep", "--config", cfg_path.string(), "--model", model_path.string()}) != 0) {
    return {false, "sweep failed"};
  }
  const io::ExperimentConfig cfg = io::load_config(cfg_path);
  const auto models = std::vector<models::Transceiver>{io::load_model(model_path)};
  auto systems = cli::model_systems(models);
  for (auto& s : cli::baseline_systems(cfg, models::ModelKind::ook)) systems.push_back(std::move(s));
  const auto rows = eval::sweep_snr({10.0}, systems, eval::Link::single_led(5.0), g_scale.trials,
                                    derive_seed(kSeed, "eval"), 8);
  const auto& ae = find_row(rows, "ook", 10.0);
  const auto& cwc = find_row(rows, "cwc_ml", 10.0);
  const models::Codebook greedy = eval::greedy_cwc(16, 8, 4);
  const bool ok = exact && !eval::clearly_below(cwc, ae);
  return {ok, std::string(exact ? "all weights 4" : "weights not exact") + ", OOK-AE SER " + fmt_ser(ae) +
                  " vs greedy CWC (min distance " + std::to_string(eval::min_hamming_distance(greedy)) + ") + ML " +
                  fmt_ser(cwc)};
}

Verdict determinism(const Runner& run, const fs::path& cae_model) {
  // single-LED and small image-sensor pipelines, twice each, byte-compared
  std::vector<std::string> mismatches;
  Index compared = 0;
  const std::string small_isc = "model.filters = 4\nmodel.messages = 8\ntrain.train_samples = 2240\n"
                                "train.batch_size = 32\ntrain.check_every = 10\ntrain.check_samples = 256\n"
                                "train.valid_samples = 2000\ntrain.snr_db = 14\ntrain.lambda = 1\n"
                                "train.dimming_target = 0.3125\neval.snr_db = 14\neval.trials = 2000\nseed = 5\n";
  const Scale saved = g_scale;
  g_scale.ook_train = std::min<std::int64_t>(g_scale.ook_train, 100000);
  g_scale.trials = std::min<std::int64_t>(g_scale.trials, 20000);
  std::string small_ook = ook_config("x");
  g_scale = saved;
  small_ook = small_ook.substr(0, small_ook.find("output_dir"));

  for (const auto& [name, text] : std::vector<std::pair<std::string, std::string>>{
           {"isc", "model.kind = cae\n" + small_isc}, {"ook", small_ook}}) {
    for (const char* rep : {"a", "b"}) {
      const fs::path out = run.root() / "determinism" / (name + "_" + rep);
      fs::remove_all(out);
      const fs::path cfg = run.write_config("det_" + name, text);
      run.cli("determinism", {"train", "--config", cfg.string(), "--out", out.string()});
      std::vector<std::string> models;
      for (const auto& e : fs::directory_iterator(out)) {
        if (e.path().extension() == ".owcm") models.push_back(e.path().string());
      }
      std::sort(models.begin(), models.end());
      std::vector<std::string> args{"sweep", "--config", cfg.string(), "--out", out.string(), "--threads",
                                    rep[0] == 'a' ? "1" : "8"};
      for (const auto& m : models) args.insert(args.end(), {"--model", m});
      run.cli("determinism", args);
    }
    const fs::path a = run.root() / "determinism" / (name + "_a");
    const fs::path b = run.root() / "determinism" / (name + "_b");
    for (const auto& e : fs::directory_iterator(a)) {
      const auto ext = e.path().extension();
      if (ext != ".csv" && ext != ".owcm") continue;
      ++compared;
      const fs::path other = b / e.path().filename();
      if (!fs::exists(other) || slurp(e.path()) != slurp(other)) mismatches.push_back(name + "/" + e.path().filename().string());
    }
  }

  // the trained full-size C-AE under 1 and 8 evaluation threads
  const models::Transceiver model = io::load_model(cae_model);
  const io::ExperimentConfig cfg;
  const eval::Link link = cli::evaluation_link(cfg, models::ModelKind::cae);
  const auto tx = eval::transmit_codebook(model);
  const auto rx = eval::make_ae_receiver(model);
  const auto one = eval::estimate_ser(tx, rx, link, 12.0, std::min<std::int64_t>(g_scale.trials, 20000), kSeed, 1);
  const auto eight = eval::estimate_ser(tx, rx, link, 12.0, std::min<std::int64_t>(g_scale.trials, 20000), kSeed, 8);
  if (one.errors != eight.errors) mismatches.push_back("C-AE errors 1 vs 8 threads");

  std::string detail = std::to_string(compared) + " files byte-identical across reruns (1 vs 8 sweep threads), C-AE " +
                       std::to_string(one.errors) + " vs " + std::to_string(eight.errors) + " errors";
  if (compared == 0) mismatches.push_back("nothing to compare");
  if (!mismatches.empty()) {
    detail = "differs:";
    for (const auto& m : mismatches) detail += " " + m;
  }
  return {mismatches.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  retain_freed_memory();
  CLI::App app{"Acceptance criteria"};
  std::string workdir = "acceptance_run";
  bool strict = false;
  bool quick = false;
  app.add_option("--workdir", workdir, "Scratch directory for models and CSVs");
  app.add_flag("--strict", strict, "Exit non-zero when any criterion fails");
  app.add_flag("--quick", quick, "Tiny sample counts; verdicts are not meaningful");
  CLI11_PARSE(app, argc, argv);
  if (quick) g_scale = Scale{4000, 4480, 20000, 2000};

  const auto start = Clock::now();
  Report report;
  const auto timed = [&](int id, const std::string& name, const std::function<Verdict()>& body) {
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = body();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    report.record(id, name, v, seconds_since(t0));
    return v;
  };

  try {
    timed(1, "gradient fidelity", [] {
      const auto t0 = Clock::now();
      Verdict v = gradient_fidelity();
      const double secs = seconds_since(t0);
      v.pass = v.pass && secs < 60.0;
      return v;
    });
    timed(2, "oracle equivalence", oracle_equivalence);
    timed(3, "channel statistics", channel_statistics);
    timed(4, "imaging geometry", imaging_geometry);

    const Runner run(workdir);
    const fs::path cae_cfg = run.write_config("cae", isc_config(run.root() / "cae", "cae"));
    timed(5, "annealing contract", [&] { return annealing_contract(run, cae_cfg); });
    timed(8, "OOK path", [&] { return ook_path(run); });

    // remaining models for the SER sweep
    const fs::path norot_cfg = run.write_config(
        "cae_norot", isc_config(run.root() / "cae_norot", "cae", "train.rotation_lo = 0\ntrain.rotation_hi = 0\n"));
    const fs::path fae_cfg = run.write_config("fae", isc_config(run.root() / "fae", "fae"));
    auto t0 = Clock::now();
    run.cli("cae", {"train", "--config", cae_cfg.string(), "--snr-list", "10"});
    run.cli("cae_norot", {"train", "--config", norot_cfg.string(), "--snr-list", "14"});
    run.cli("fae", {"train", "--config", fae_cfg.string()});
    std::cout << "      trained C-AE 10 dB, no-rotation C-AE and F-AE in " << std::fixed << std::setprecision(0)
              << seconds_since(t0) << " s" << std::defaultfloat << std::endl;
    t0 = Clock::now();

    const io::ExperimentConfig cfg = io::load_config(cae_cfg);
    std::vector<models::Transceiver> routed;
    for (const char* p : {"cae/cae_snr10.owcm", "cae/cae_snr14.owcm", "fae/fae_snr10.owcm", "fae/fae_snr14.owcm"}) {
      if (fs::exists(run.root() / p)) routed.push_back(io::load_model(run.root() / p));
    }
    std::vector<eval::SweepSystem> systems = cli::model_systems(routed);
    for (auto& s : cli::baseline_systems(cfg, models::ModelKind::cae)) systems.push_back(std::move(s));
    const eval::Link link = cli::evaluation_link(cfg, models::ModelKind::cae);
    std::vector<eval::SweepRow> rows = eval::sweep_snr(cfg.eval_snr_db, systems, link, g_scale.trials,
                                                      derive_seed(kSeed, "eval"), cfg.threads);
    if (fs::exists(run.root() / "cae_norot/cae_norot_snr14.owcm")) {
      const auto norot = cli::model_systems({io::load_model(run.root() / "cae_norot/cae_norot_snr14.owcm")});
      for (auto& r : eval::sweep_snr({14.0}, norot, link, g_scale.trials, derive_seed(kSeed, "eval"), cfg.threads)) {
        rows.push_back(std::move(r));
      }
    }
    {
      std::ofstream os(run.root() / "sweep.csv");
      eval::write_results_csv(os, rows);
    }
    std::cout << "      SER sweep (" << rows.size() << " points) in " << std::fixed << std::setprecision(0)
              << seconds_since(t0) << " s" << std::defaultfloat << std::endl;

    timed(6, "SER trend", [&] {
      const std::vector<double> snrs = cfg.eval_snr_db;
      bool monotone = true;
      std::string curve;
      for (std::size_t i = 0; i < snrs.size(); ++i) {
        const auto& e = find_row(rows, "cae", snrs[i]);
        curve += (i ? ", " : "") + fmt(e.ser, 3);
        if (i > 0) monotone = monotone && !eval::clearly_below(find_row(rows, "cae", snrs[i - 1]), e);
      }
      const auto& cae14 = find_row(rows, "cae", 14.0);
      const auto& base14 = find_row(rows, "ook_ml_csi", 14.0);
      const auto& norot14 = find_row(rows, "cae_norot", 14.0);
      const bool beats_baseline = eval::clearly_below(cae14, base14);
      const bool beats_norot = eval::clearly_below(cae14, norot14);
      return Verdict{monotone && beats_baseline && beats_norot,
                     std::string("(a) ") + (monotone ? "ok" : "FAIL") + " SER " + curve + "; (b) " +
                         (beats_baseline ? "ok" : "FAIL") + " C-AE@14 " + fmt_ser(cae14) + " vs random OOK + ML " +
                         fmt_ser(base14) + "; (c) " + (beats_norot ? "ok" : "FAIL") + " no-rotation C-AE@14 " +
                         fmt_ser(norot14)};
    });
    timed(7, "C-AE vs F-AE", [&] {
      bool ok = true;
      std::string detail;
      for (double snr : {10.0, 14.0}) {
        const auto& c = find_row(rows, "cae", snr);
        const auto& f = find_row(rows, "fae", snr);
        ok = ok && !eval::clearly_below(f, c);
        detail += (detail.empty() ? "" : "; ") + fmt(snr) + " dB: C-AE " + fmt_ser(c) + ", F-AE " + fmt_ser(f);
      }
      return Verdict{ok, detail};
    });
    timed(9, "determinism", [&] { return determinism(run, run.root() / "cae" / "cae_snr14.owcm"); });
  } catch (const std::exception& e) {
    std::cout << "acceptance run aborted: " << e.what() << std::endl;
    return 1;
  }

  std::cout << report.passed() << "/" << report.total() << " criteria passed in " << std::fixed << std::setprecision(0)
            << seconds_since(start) << " s" << std::endl;
  if (report.total() != 9) return 1;
  return (strict && report.passed() != report.total()) ? 1 : 0;
}
