#include "owc/io/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <utility>

namespace owc::io {

namespace {

std::string trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return std::string(s.substr(begin, end - begin + 1));
}

template <typename T>
T parse_number(const std::string& text) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw ConfigError("'" + text + "' is not a valid number");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) throw ConfigError("'" + text + "' is not finite");
  }
  return value;
}

Index parse_count(const std::string& text) {
  const auto v = parse_number<long long>(text);
  if (v < 0) throw ConfigError("'" + text + "' must be non-negative");
  return static_cast<Index>(v);
}

template <typename T>
std::vector<T> parse_list(const std::string& text, T (*parse)(const std::string&)) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError("empty entry in list '" + text + "'");
    out.push_back(parse(item));
  }
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

double parse_double(const std::string& s) { return parse_number<double>(s); }
Index parse_index(const std::string& s) { return parse_count(s); }

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

std::vector<std::pair<std::string, Setter>> make_setters() {
  std::vector<std::pair<std::string, Setter>> s;
  auto add = [&](std::string key, Setter fn) { s.emplace_back(std::move(key), std::move(fn)); };

  add("seed", [](ExperimentConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>(v); });
  add("output_dir", [](ExperimentConfig& c, const std::string& v) { c.output_dir = v; });
  add("threads", [](ExperimentConfig& c, const std::string& v) { c.threads = static_cast<int>(parse_count(v)); });

  add("model.kind", [](ExperimentConfig& c, const std::string& v) { c.model = models::parse_kind(v); });
  add("model.messages", [](ExperimentConfig& c, const std::string& v) { c.messages = parse_count(v); });
  add("model.filters", [](ExperimentConfig& c, const std::string& v) { c.filters = parse_count(v); });

  add("array.leds_per_side", [](ExperimentConfig& c, const std::string& v) { c.geometry.leds_per_side = parse_count(v); });
  add("array.pitch_cm", [](ExperimentConfig& c, const std::string& v) { c.geometry.pitch_m = parse_double(v) * 1e-2; });
  add("array.distance_m", [](ExperimentConfig& c, const std::string& v) { c.geometry.distance_m = parse_double(v); });

  add("camera.pixels_per_side", [](ExperimentConfig& c, const std::string& v) { c.camera.pixels_per_side = parse_count(v); });
  add("camera.pixel_um", [](ExperimentConfig& c, const std::string& v) { c.camera.pixel_m = parse_double(v) * 1e-6; });
  add("camera.focal_mm", [](ExperimentConfig& c, const std::string& v) { c.camera.focal_m = parse_double(v) * 1e-3; });
  add("camera.fnumber", [](ExperimentConfig& c, const std::string& v) { c.camera.fnumber = parse_double(v); });
  add("camera.psf_sigma_px", [](ExperimentConfig& c, const std::string& v) { c.camera.psf_sigma_px = parse_double(v); });
  add("camera.rotation_step_deg", [](ExperimentConfig& c, const std::string& v) { c.rotation_step_deg = parse_double(v); });

  add("channel.psi2", [](ExperimentConfig& c, const std::string& v) { c.psi2 = parse_double(v); });

  add("train.lambda", [](ExperimentConfig& c, const std::string& v) { c.train.lambda = parse_double(v); });
  add("train.lambda_candidates", [](ExperimentConfig& c, const std::string& v) { c.lambda_candidates = parse_list(v, parse_double); });
  add("train.learning_rate", [](ExperimentConfig& c, const std::string& v) { c.train.learning_rate = parse_double(v); });
  add("train.batch_size", [](ExperimentConfig& c, const std::string& v) { c.train.batch_size = parse_count(v); });
  add("train.steps_per_stage", [](ExperimentConfig& c, const std::string& v) { c.train.steps_per_stage = parse_count(v); });
  add("train.train_samples", [](ExperimentConfig& c, const std::string& v) { c.train.train_samples = parse_count(v); });
  add("train.valid_samples", [](ExperimentConfig& c, const std::string& v) { c.train.valid_samples = parse_count(v); });
  add("train.check_samples", [](ExperimentConfig& c, const std::string& v) { c.train.check_samples = parse_count(v); });
  add("train.check_every", [](ExperimentConfig& c, const std::string& v) { c.train.check_every = parse_count(v); });
  add("train.plateau_checks", [](ExperimentConfig& c, const std::string& v) { c.train.plateau_checks = parse_count(v); });
  add("train.plateau_tolerance", [](ExperimentConfig& c, const std::string& v) { c.train.plateau_tolerance = parse_double(v); });
  add("train.snr_db", [](ExperimentConfig& c, const std::string& v) { c.train.snr_db = parse_list(v, parse_double); });
  add("train.dimming_target", [](ExperimentConfig& c, const std::string& v) { c.train.dimming_target = parse_double(v); });
  add("train.rotation_lo", [](ExperimentConfig& c, const std::string& v) { c.train.rotation_lo = parse_double(v); });
  add("train.rotation_hi", [](ExperimentConfig& c, const std::string& v) { c.train.rotation_hi = parse_double(v); });
  add("train.deltas", [](ExperimentConfig& c, const std::string& v) { c.schedule.deltas = parse_list(v, parse_double); });

  add("ook.length", [](ExperimentConfig& c, const std::string& v) { c.ook.length = parse_count(v); });
  add("ook.encoder_hidden", [](ExperimentConfig& c, const std::string& v) { c.ook.encoder_hidden = parse_list(v, parse_index); });
  add("ook.decoder_hidden", [](ExperimentConfig& c, const std::string& v) { c.ook.decoder_hidden = parse_list(v, parse_index); });

  add("eval.snr_db", [](ExperimentConfig& c, const std::string& v) { c.eval_snr_db = parse_list(v, parse_double); });
  add("eval.trials", [](ExperimentConfig& c, const std::string& v) { c.eval_trials = parse_count(v); });
  add("eval.rotation_lo", [](ExperimentConfig& c, const std::string& v) { c.eval_rotation_lo = parse_double(v); });
  add("eval.rotation_hi", [](ExperimentConfig& c, const std::string& v) { c.eval_rotation_hi = parse_double(v); });
  add("eval.csi_error_deg", [](ExperimentConfig& c, const std::string& v) { c.csi_error_deg = parse_list(v, parse_double); });
  return s;
}

const std::vector<std::pair<std::string, Setter>>& setters() {
  static const auto table = make_setters();
  return table;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (messages < 1) throw ConfigError("model.messages must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (!(psi2 >= 0.0)) throw ConfigError("channel.psi2 must be >= 0");
  if (!(rotation_step_deg > 0.0)) throw ConfigError("camera.rotation_step_deg must be positive");
  if (eval_trials < 1) throw ConfigError("eval.trials must be >= 1");
  if (eval_snr_db.empty()) throw ConfigError("eval.snr_db must not be empty");
  if (!(eval_rotation_lo <= eval_rotation_hi)) throw ConfigError("eval rotation range is empty");
  for (double e : csi_error_deg) {
    if (e < 0.0) throw ConfigError("eval.csi_error_deg entries must be >= 0");
  }
  for (double l : lambda_candidates) {
    if (l < 0.0) throw ConfigError("train.lambda_candidates entries must be >= 0");
  }
  train.validate();
  schedule.validate();
  if (model == models::ModelKind::ook) {
    models::OokAeSpec spec = ook;
    spec.messages = messages;
    spec.weight = train.dimming_target;
    spec.validate();
  } else {
    camera.validate();
    geometry.validate(camera);
    if (!(train.dimming_target >= 0.0 && train.dimming_target <= 1.0)) {
      throw ConfigError("train.dimming_target must lie in [0, 1] for image-sensor links");
    }
  }
}

ExperimentConfig parse_config(std::istream& in, const std::string& source) {
  ExperimentConfig cfg;
  std::map<std::string, const Setter*> lookup;
  for (const auto& [key, fn] : setters()) lookup.emplace(key, &fn);
  std::set<std::string> seen;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto where = source + ":" + std::to_string(number) + ": ";
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string text = trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(std::string_view(text).substr(0, eq));
    const std::string value = trim(std::string_view(text).substr(eq + 1));
    const auto it = lookup.find(key);
    if (it == lookup.end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    if (value.empty()) throw ConfigError(where + "missing value for '" + key + "'");
    try {
      (*it->second)(cfg, value);
    } catch (const Error& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  cfg.ook.messages = cfg.messages;
  cfg.ook.weight = cfg.train.dimming_target;
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_config(in, path.string());
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [key, fn] : setters()) keys.push_back(key);
  return keys;
}

}  // namespace owc::io
