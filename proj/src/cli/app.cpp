#include "owc/cli/app.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "owc/io/files.hpp"

namespace owc::cli {

namespace {

namespace fs = std::filesystem;

struct Flags {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  int threads = 1;
  std::string snr_list;
  std::vector<std::string> models;

  bool has_seed = false;
  bool has_out = false;
  bool has_threads = false;
};

std::vector<double> parse_snr_list(const std::string& text) {
  std::vector<double> list;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      list.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--snr-list: '" + item + "' is not a number");
    }
  }
  if (list.empty()) throw ConfigError("--snr-list is empty");
  return list;
}

io::ExperimentConfig resolve_config(const Flags& f, bool required) {
  if (required && f.config.empty()) throw ConfigError("--config is required for this command");
  io::ExperimentConfig cfg = f.config.empty() ? io::ExperimentConfig{} : io::load_config(f.config);
  if (f.has_seed) cfg.seed = f.seed;
  if (f.has_out) cfg.output_dir = f.out;
  if (f.has_threads) {
    if (f.threads < 1) throw ConfigError("--threads must be >= 1");
    cfg.threads = f.threads;
  }
  cfg.train.threads = cfg.threads;
  return cfg;
}

std::string model_name(const models::Transceiver& m) {
  std::string name = models::kind_name(m.kind);
  if (m.kind != models::ModelKind::ook && !m.rotation_trained) name += "_norot";
  return name;
}

std::vector<models::Transceiver> load_models(const Flags& f, const io::ExperimentConfig& cfg) {
  if (f.models.empty()) throw ConfigError("--model is required for this command");
  std::vector<models::Transceiver> out;
  for (const auto& path : f.models) {
    models::Transceiver m = io::load_model(fs::path(path));
    if (m.messages != cfg.messages) {
      throw ConfigError(path + ": model has " + std::to_string(m.messages) + " messages, config says " +
                        std::to_string(cfg.messages));
    }
    if (m.kind != models::ModelKind::ook &&
        (m.codeword_rows != cfg.geometry.leds_per_side || m.sensor_pixels != cfg.camera.pixels_per_side)) {
      throw ConfigError(path + ": model geometry does not match the configured array and camera");
    }
    out.push_back(std::move(m));
  }
  const bool ook = out.front().kind == models::ModelKind::ook;
  for (const auto& m : out) {
    if ((m.kind == models::ModelKind::ook) != ook) throw ConfigError("cannot mix OOK and image-sensor models");
  }
  return out;
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  body(os);
  if (!os) throw Error("failed writing " + path.string());
}

int cmd_train(const Flags& f, std::ostream& out, std::ostream& err) {
  io::ExperimentConfig cfg = resolve_config(f, true);
  if (!f.snr_list.empty()) cfg.train.snr_db = parse_snr_list(f.snr_list);
  fs::create_directories(cfg.output_dir);
  int status = kExitOk;
  for (std::size_t k = 0; k < cfg.train.snr_db.size(); ++k) {
    const double snr = cfg.train.snr_db[k];
    const training::LinkSetup link = training_link(cfg, snr);
    models::Transceiver model = build_model(cfg);
    Rng init = make_stream(cfg.seed, "init", k);
    model.initialize(init);
    model.trained_snr_db = snr;
    model.rotation_trained = link.cache && link.rotation_lo < link.rotation_hi;

    training::TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, "train", k);
    const std::string stem = model_name(model) + "_snr" + snr_tag(snr);

    if (!cfg.lambda_candidates.empty()) {
      const auto sel = training::select_lambda(cfg.lambda_candidates, model, cfg.schedule, tc, link);
      write_file(cfg.output_dir / (stem + "_lambda.csv"), [&](std::ostream& os) {
        os << "lambda,val_ser,dim_dev,feasible\n" << std::setprecision(10);
        for (const auto& t : sel.table) os << t.lambda << ',' << t.val_ser << ',' << t.dim_dev << ',' << t.feasible << '\n';
      });
      if (!sel.feasible) err << "warning: no lambda candidate met the dimming limit; using the closest\n";
      out << stem << ": lambda " << sel.lambda << " selected\n";
      tc.lambda = sel.lambda;
    }

    const training::TrainReport report = training::multistage_train(
        model, cfg.schedule, tc, link,
        [&](Index stage, const models::Transceiver& m) {
          out << stem << ": stage " << stage << " done (delta " << m.delta() << ")\n";
        },
        [&](const training::TrainRecord& r) {
          out << stem << ": stage " << r.stage << " step " << r.step << " loss " << r.loss << " val_ser " << r.val_ser
              << " dim_dev " << r.dim_dev << std::endl;
        });
    io::save_model(cfg.output_dir / (stem + ".owcm"), model);
    write_file(cfg.output_dir / (stem + "_train.csv"), [&](std::ostream& os) { training::write_report_csv(os, report); });
    out << stem << ": validation SER " << report.validation_ser << ", hardness gap " << report.final_hardness_gap
        << ", " << std::fixed << std::setprecision(1) << report.wall_seconds << " s\n"
        << std::defaultfloat << std::setprecision(6);
    try {
      const models::Codebook cb = training::finalize_binary(model);
      write_file(cfg.output_dir / (stem + "_codebook.csv"), [&](std::ostream& os) { io::write_codebook_csv(os, cb); });
    } catch (const Error& e) {
      err << stem << ": " << e.what() << '\n';
      status = kExitFailure;
    }
  }
  return status;
}

int cmd_sweep(const Flags& f, std::ostream& out, bool with_baselines) {
  io::ExperimentConfig cfg = resolve_config(f, false);
  if (!f.snr_list.empty()) cfg.eval_snr_db = parse_snr_list(f.snr_list);
  std::vector<eval::SweepSystem> systems;
  models::ModelKind kind = cfg.model;
  if (!f.models.empty() || !with_baselines) {
    const auto models = load_models(f, cfg);
    kind = models.front().kind;
    systems = model_systems(models);
  }
  if (with_baselines) {
    for (auto& s : baseline_systems(cfg, kind)) systems.push_back(std::move(s));
  }
  const eval::Link link = evaluation_link(cfg, kind);
  const auto rows = eval::sweep_snr(cfg.eval_snr_db, systems, link, cfg.eval_trials, derive_seed(cfg.seed, "eval"),
                                    cfg.threads);
  fs::create_directories(cfg.output_dir);
  write_file(cfg.output_dir / (with_baselines ? "sweep.csv" : "eval.csv"),
             [&](std::ostream& os) { eval::write_results_csv(os, rows); });
  eval::write_results_csv(out, rows);
  return kExitOk;
}

int cmd_gradcheck(const Flags& f, std::ostream& out) {
  const io::ExperimentConfig cfg = resolve_config(f, false);
  models::Transceiver model = build_model(cfg);
  Rng rng = make_stream(cfg.seed, "gradcheck");
  model.initialize(rng);
  model.set_delta(2.0);
  const training::LinkSetup link = training_link(cfg, cfg.train.snr_db.front());
  const training::Objective objective{cfg.train.lambda, cfg.train.dimming_target};
  const auto report = training::pipeline_grad_check(model, link, objective, 4, 1e-5, 6, rng);
  out << models::kind_name(model.kind) << " end-to-end: max relative error " << report.max_relative_error << " over "
      << report.checked << " coordinates (" << report.skipped_nonsmooth << " skipped at kinks)\n";
  if (!report.passed()) out << "worst: " << report.worst << '\n';
  return report.passed() ? kExitOk : kExitFailure;
}

int cmd_export(const Flags& f, std::ostream& out) {
  const io::ExperimentConfig cfg = resolve_config(f, false);
  if (f.models.size() != 1) throw ConfigError("export-codebook takes exactly one --model");
  const auto model = load_models(f, cfg).front();
  const models::Codebook cb = models::export_codebook(model);
  const auto dev = eval::dimming_report(cb, VectorX<double>::Constant(cb.word_size(), cfg.train.dimming_target));
  fs::create_directories(cfg.output_dir);
  const fs::path path = cfg.output_dir / (fs::path(f.models.front()).stem().string() + "_codebook.csv");
  write_file(path, [&](std::ostream& os) { io::write_codebook_csv(os, cb); });
  out << path.string() << ": " << cb.size() << " codewords, " << (cb.binary ? "binary" : "relaxed")
      << ", hardness gap " << cb.hardness_gap << ", max |mean - D| " << dev.max << '\n';
  return kExitOk;
}

int cmd_channel_stats(const Flags& f, std::ostream& out) {
  const io::ExperimentConfig cfg = resolve_config(f, false);
  const channel::ChannelParams ch{0.1, cfg.psi2, std::nullopt};
  constexpr Index kDraws = 1000000;
  bool ok = true;
  out << "intensity,expected_var,empirical_var,rel_err,mean_bias\n";
  for (double s : {0.0, 0.25, 1.0}) {
    Rng rng = make_stream(cfg.seed, "channel-stats", static_cast<std::uint64_t>(s * 100));
    const VectorX<double> r = channel::apply_optical_noise(VectorX<double>::Constant(kDraws, s), ch, rng);
    const double mean = r.mean();
    const double var = (r.array() - mean).square().sum() / static_cast<double>(kDraws - 1);
    const double expected = ch.variance(s);
    const double rel = std::abs(var - expected) / expected;
    const double bias = mean - s;
    ok = ok && rel <= 0.02 && std::abs(bias) <= 4.0 * std::sqrt(expected) / 1e3;
    out << s << ',' << expected << ',' << var << ',' << rel << ',' << bias << '\n';
  }
  if (cfg.model != models::ModelKind::ook) {
    const auto g = imaging::measure_rendered_geometry(cfg.geometry, cfg.camera);
    out << "rendered pitch " << g.pitch_px << " px (thin lens " << imaging::projected_pitch_px(cfg.geometry, cfg.camera)
        << "), span " << g.span_px << " px\n";
    const auto channel = imaging::build_channel_matrix(cfg.geometry, cfg.camera, 17.0);
    Rng rng = make_stream(cfg.seed, "linearity");
    const VectorX<double> a = channel::standard_normal<double>(channel.H.cols(), 1, rng);
    const VectorX<double> b = channel::standard_normal<double>(channel.H.cols(), 1, rng);
    const double err = (imaging::render_image(VectorX<double>(2.0 * a - 3.0 * b), channel) -
                        (2.0 * imaging::render_image(a, channel) - 3.0 * imaging::render_image(b, channel)))
                           .cwiseAbs()
                           .maxCoeff();
    out << "render linearity error " << err << '\n';
    ok = ok && err <= 1e-12;
  }
  out << (ok ? "channel statistics OK\n" : "channel statistics FAILED\n");
  return ok ? kExitOk : kExitFailure;
}

}  // namespace

std::string snr_tag(double snr_db) {
  std::ostringstream os;
  os << snr_db;
  return os.str();
}

training::LinkSetup training_link(const io::ExperimentConfig& cfg, double snr_db) {
  training::LinkSetup link;
  link.channel = channel::ChannelParams::from_snr(snr_db, cfg.psi2);
  if (cfg.model != models::ModelKind::ook) {
    link.cache = std::make_shared<const imaging::ChannelCache>(cfg.geometry, cfg.camera, cfg.rotation_step_deg);
    link.rotation_lo = cfg.train.rotation_lo;
    link.rotation_hi = cfg.train.rotation_hi;
  }
  return link;
}

models::Transceiver build_model(const io::ExperimentConfig& cfg) {
  switch (cfg.model) {
    case models::ModelKind::cae:
      return models::build_cae(cfg.messages, cfg.geometry.leds_per_side, cfg.camera.pixels_per_side, cfg.filters);
    case models::ModelKind::fae:
      return models::build_fae(cfg.messages, cfg.geometry.leds_per_side, cfg.camera.pixels_per_side);
    case models::ModelKind::ook: {
      models::OokAeSpec spec = cfg.ook;
      spec.messages = cfg.messages;
      spec.weight = cfg.train.dimming_target;
      return models::build_ook_ae(spec);
    }
  }
  throw ConfigError("unknown model kind");
}

eval::Link evaluation_link(const io::ExperimentConfig& cfg, models::ModelKind kind) {
  if (kind == models::ModelKind::ook) return eval::Link::single_led(cfg.psi2);
  return eval::Link::image_sensor(
      std::make_shared<const imaging::ChannelCache>(cfg.geometry, cfg.camera, cfg.rotation_step_deg),
      cfg.eval_rotation_lo, cfg.eval_rotation_hi, cfg.psi2);
}

std::vector<eval::SweepSystem> model_systems(const std::vector<models::Transceiver>& models) {
  std::map<std::string, std::vector<const models::Transceiver*>> groups;
  std::vector<std::string> order;
  for (const auto& m : models) {
    const std::string name = model_name(m);
    if (!groups.count(name)) order.push_back(name);
    groups[name].push_back(&m);
  }
  std::vector<eval::SweepSystem> systems;
  for (const auto& name : order) {
    auto& group = groups[name];
    std::stable_sort(group.begin(), group.end(),
                     [](const auto* a, const auto* b) { return a->trained_snr_db < b->trained_snr_db; });
    eval::SweepSystem system{name, {}};
    for (std::size_t i = 0; i < group.size(); ++i) {
      eval::Route route;
      if (i + 1 < group.size()) route.max_snr_db = 0.5 * (group[i]->trained_snr_db + group[i + 1]->trained_snr_db);
      route.transmit = eval::transmit_codebook(*group[i]);
      route.receive = eval::make_ae_receiver(*group[i]);
      system.routes.push_back(std::move(route));
    }
    systems.push_back(std::move(system));
  }
  return systems;
}

std::vector<eval::SweepSystem> baseline_systems(const io::ExperimentConfig& cfg, models::ModelKind kind) {
  std::vector<eval::SweepSystem> systems;
  if (kind == models::ModelKind::ook) {
    const double d = cfg.train.dimming_target;
    if (d != std::round(d)) throw ConfigError("greedy CWC baseline needs an integral codeword weight");
    eval::Route route{std::numeric_limits<double>::infinity(),
                      eval::greedy_cwc(cfg.messages, cfg.ook.length, static_cast<Index>(d)), eval::MlReceiver{0.0}};
    systems.push_back({"cwc_ml", {route}});
    return systems;
  }
  Rng rng = make_stream(cfg.seed, "baseline");
  const Index L = cfg.geometry.leds_per_side;
  const models::Codebook cb = eval::random_ook_codebook(
      cfg.messages, L, L, VectorX<double>::Constant(L * L, cfg.train.dimming_target), rng);
  systems.push_back({"ook_ml_csi", {{std::numeric_limits<double>::infinity(), cb, eval::MlReceiver{0.0}}}});
  for (double e : cfg.csi_error_deg) {
    if (e <= 0.0) continue;
    systems.push_back(
        {"ook_ml_csi_err" + snr_tag(e), {{std::numeric_limits<double>::infinity(), cb, eval::MlReceiver{e}}}});
  }
  return systems;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Optical wireless autoencoder transceivers: training, evaluation and baselines", "owc"};
  app.require_subcommand(1);
  Flags flags;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"train", "Train one model per training SNR"},
      {"eval", "SER of trained models over an SNR list"},
      {"sweep", "SER of trained models and baselines over an SNR list"},
      {"gradcheck", "Finite-difference check of the configured model"},
      {"export-codebook", "Write the codebook of a trained model as CSV"},
      {"channel-stats", "Noise and imaging self-tests"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", flags.config, "Experiment config file");
    auto* seed = sub->add_option("--seed", flags.seed, "Root random seed");
    auto* outdir = sub->add_option("--out", flags.out, "Output directory");
    auto* threads = sub->add_option("--threads", flags.threads, "Evaluation worker threads");
    sub->add_option("--snr-list", flags.snr_list, "Comma-separated SNR values in dB");
    sub->add_option("--model", flags.models, "Model file (repeatable)")->delimiter(',');
    sub->final_callback([&flags, seed, outdir, threads] {
      flags.has_seed = seed->count() > 0;
      flags.has_out = outdir->count() > 0;
      flags.has_threads = threads->count() > 0;
    });
  }

  std::vector<std::string> argv_storage{"owc"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (command == "train") return cmd_train(flags, out, err);
    if (command == "eval") return cmd_sweep(flags, out, false);
    if (command == "sweep") return cmd_sweep(flags, out, true);
    if (command == "gradcheck") return cmd_gradcheck(flags, out);
    if (command == "export-codebook") return cmd_export(flags, out);
    return cmd_channel_stats(flags, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace owc::cli
