#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "owc/cli/app.hpp"
#include "owc/io/config.hpp"
#include "owc/io/files.hpp"

using namespace owc;
namespace fs = std::filesystem;

namespace {

io::ExperimentConfig parse(const std::string& text) {
  std::istringstream is(text);
  return io::parse_config(is, "test.cfg");
}

std::string config_error(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("owc_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

models::Transceiver trained_shape_ook() {
  models::OokAeSpec spec;
  spec.length = 6;
  spec.messages = 8;
  spec.weight = 3;
  spec.encoder_hidden = {12};
  spec.decoder_hidden = {12};
  models::Transceiver t = models::build_ook_ae(spec);
  Rng rng(11);
  t.initialize(rng);
  t.set_delta(16.0);
  t.trained_snr_db = 10.0;
  return t;
}

std::string saved_bytes(const models::Transceiver& t) {
  std::ostringstream os(std::ios::binary);
  io::save_model(os, t);
  return os.str();
}

models::Transceiver load_bytes(const std::string& bytes) {
  std::istringstream is(bytes, std::ios::binary);
  return io::load_model(is);
}

int run_cli(const std::vector<std::string>& args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

const char* kSmallOok = R"(# tiny single-LED setup
model.kind = ook
model.messages = 8
ook.length = 6
ook.encoder_hidden = 16
ook.decoder_hidden = 16
train.dimming_target = 3
train.lambda = 0.5
train.batch_size = 32
train.train_samples = 200000
train.valid_samples = 2000
train.check_samples = 256
train.check_every = 20
train.snr_db = 16
train.deltas = 1, 2, 4, 8, 16, 32, 64
eval.snr_db = 8, 12
eval.trials = 2000
seed = 3
)";

}  // namespace

TEST_CASE("config values, lists and comments") {
  const auto cfg = parse(
      "# comment\n"
      "model.kind = fae   # trailing\n"
      "\n"
      "model.messages = 16\n"
      "train.snr_db = 10, 14\n"
      "camera.pixel_um = 5.6\n"
      "array.pitch_cm = 1.5\n"
      "eval.csi_error_deg = 2, 5\n");
  CHECK(cfg.model == models::ModelKind::fae);
  CHECK(cfg.messages == 16);
  CHECK(cfg.train.snr_db == std::vector<double>{10, 14});
  CHECK(cfg.camera.pixel_m == doctest::Approx(5.6e-6));
  CHECK(cfg.geometry.pitch_m == doctest::Approx(0.015));
  CHECK(cfg.csi_error_deg == std::vector<double>{2, 5});
  CHECK(io::config_keys().size() > 30);
}

TEST_CASE("config errors carry the source line") {
  CHECK(config_error("seed = 1\nmodel.colour = red\n").find("test.cfg:2:") == 0);
  CHECK(config_error("model.colour = red\n").find("unknown key") != std::string::npos);
  CHECK(config_error("seed = 1\nseed = 2\n").find("duplicate key") != std::string::npos);
  CHECK(config_error("\n\nseed 1\n").find("test.cfg:3:") == 0);
  CHECK(config_error("seed =\n").find("missing value") != std::string::npos);
  CHECK(config_error("model.messages = many\n").find("test.cfg:1:") == 0);
  CHECK(config_error("train.snr_db = 10,,14\n").find("test.cfg:1:") == 0);
  CHECK_FALSE(config_error("model.kind = rnn\n").empty());
  CHECK_FALSE(config_error("threads = 0\n").empty());
}

TEST_CASE("model files round-trip exactly") {
  models::Transceiver t = trained_shape_ook();
  const std::string bytes = saved_bytes(t);
  CHECK(bytes.rfind(io::kModelMagic, 0) == 0);
  models::Transceiver back = load_bytes(bytes);
  CHECK(back.kind == t.kind);
  CHECK(back.messages == t.messages);
  CHECK(back.delta() == t.delta());
  CHECK(back.trained_snr_db == t.trained_snr_db);
  CHECK(models::encode_all(back) == models::encode_all(t));
  CHECK(saved_bytes(back) == bytes);
}

TEST_CASE("damaged model files are refused") {
  const std::string bytes = saved_bytes(trained_shape_ook());
  SUBCASE("truncated") {
    CHECK_THROWS_AS(load_bytes(bytes.substr(0, bytes.size() - 9)), IntegrityError);
    CHECK_THROWS_AS(load_bytes(bytes.substr(0, 10)), IntegrityError);
  }
  SUBCASE("bad magic") {
    std::string b = bytes;
    b[0] = 'X';
    CHECK_THROWS_AS(load_bytes(b), IntegrityError);
  }
  SUBCASE("flipped payload byte") {
    std::string b = bytes;
    b[b.size() - 20] = static_cast<char>(b[b.size() - 20] ^ 0x40);
    CHECK_THROWS_AS(load_bytes(b), IntegrityError);
  }
  SUBCASE("future version") {
    std::string b = bytes;
    b[std::char_traits<char>::length(io::kModelMagic)] = 9;
    CHECK_THROWS_AS(load_bytes(b), VersionError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(io::load_model(fs::path("/nonexistent/model.owcm")), Error);
  }
}

TEST_CASE("codebook CSV round trip and malformed input") {
  MatrixX<double> w(4, 2);
  w << 1, 0, 0, 1, 1, 1, 0, 0;
  const models::Codebook cb = models::make_codebook(w, 2, 2);
  std::stringstream ss;
  io::write_codebook_csv(ss, cb);
  const models::Codebook back = io::read_codebook_csv(ss);
  CHECK(back.words == cb.words);
  CHECK(back.rows == 2);
  CHECK(back.cols == 2);
  CHECK(back.binary);

  const auto bad = [](const std::string& text) {
    std::istringstream is(text);
    return io::read_codebook_csv(is);
  };
  CHECK_THROWS_AS(bad("m,r,c,v\n"), ArgumentError);
  CHECK_THROWS_AS(bad("message,row,col,intensity\n0,0,0\n"), ArgumentError);
  CHECK_THROWS_AS(bad("message,row,col,intensity\n0,0,0,x\n"), ArgumentError);
  CHECK_THROWS_AS(bad("message,row,col,intensity\n0,0,0,1\n0,0,0,1\n"), ArgumentError);
  CHECK_THROWS_AS(bad("message,row,col,intensity\n0,0,0,1\n1,0,1,1\n"), ArgumentError);
}

TEST_CASE("command line exit codes") {
  std::string out, err;
  CHECK(run_cli({}, &out, &err) == cli::kExitUsage);
  CHECK(run_cli({"train", "--bogus"}, &out, &err) == cli::kExitUsage);
  CHECK(run_cli({"train"}, &out, &err) == cli::kExitUsage);
  CHECK(err.find("--config") != std::string::npos);
  CHECK(run_cli({"eval", "--config", "/nonexistent.cfg"}, &out, &err) == cli::kExitUsage);

  const fs::path dir = scratch("cli_codes");
  const fs::path bad_cfg = dir / "bad.cfg";
  std::ofstream(bad_cfg) << "model.messages = 8\nmodel.sheep = 3\n";
  CHECK(run_cli({"gradcheck", "--config", bad_cfg.string()}, &out, &err) == cli::kExitUsage);
  CHECK(err.find("bad.cfg:2:") != std::string::npos);

  CHECK(run_cli({"eval", "--model", (dir / "absent.owcm").string()}, &out, &err) == cli::kExitFailure);
  CHECK(run_cli({"sweep", "--snr-list", "10,abc"}, &out, &err) == cli::kExitUsage);
  CHECK(run_cli({"train", "--config", bad_cfg.string(), "--threads", "0"}, &out, &err) == cli::kExitUsage);
}

TEST_CASE("channel-stats and gradcheck succeed on the defaults") {
  std::string out, err;
  CHECK(run_cli({"channel-stats", "--seed", "7"}, &out, &err) == cli::kExitOk);
  CHECK(out.find("channel statistics OK") != std::string::npos);

  const fs::path dir = scratch("cli_gradcheck");
  std::ofstream(dir / "small.cfg") << kSmallOok;
  CHECK(run_cli({"gradcheck", "--config", (dir / "small.cfg").string(), "--seed", "7"}, &out, &err) == cli::kExitOk);
  CHECK(out.find("max relative error") != std::string::npos);
}

TEST_CASE("train, export and sweep a small single-LED model") {
  const fs::path dir = scratch("cli_pipeline");
  const fs::path cfg = dir / "small.cfg";
  std::ofstream(cfg) << kSmallOok;
  std::string out, err;
  const int code = run_cli({"train", "--config", cfg.string(), "--out", dir.string()}, &out, &err);
  CAPTURE(err);
  REQUIRE(code == cli::kExitOk);
  const fs::path model = dir / "ook_snr16.owcm";
  CHECK(fs::exists(model));
  CHECK(fs::exists(dir / "ook_snr16_train.csv"));
  REQUIRE(fs::exists(dir / "ook_snr16_codebook.csv"));

  std::ifstream cb_in(dir / "ook_snr16_codebook.csv");
  const models::Codebook cb = io::read_codebook_csv(cb_in);
  CHECK(cb.binary);
  CHECK(cb.size() == 8);
  for (Index m = 0; m < cb.size(); ++m) CHECK(cb.words.col(m).sum() == doctest::Approx(3.0));

  CHECK(run_cli({"export-codebook", "--config", cfg.string(), "--model", model.string(), "--out", dir.string()}, &out,
                &err) == cli::kExitOk);
  CHECK(out.find("binary") != std::string::npos);

  std::string first, second;
  REQUIRE(run_cli({"sweep", "--config", cfg.string(), "--model", model.string(), "--out", dir.string()}, &first, &err) ==
          cli::kExitOk);
  CHECK(first.find("cwc_ml") != std::string::npos);
  CHECK(run_cli({"sweep", "--config", cfg.string(), "--model", model.string(), "--out", dir.string(), "--threads", "3"},
                &second, &err) == cli::kExitOk);
  CHECK(first == second);
  CHECK(fs::exists(dir / "sweep.csv"));

  // a model trained for a different message count is refused as a config error
  const fs::path other = dir / "other.cfg";
  std::ofstream(other) << "model.kind = ook\nmodel.messages = 16\n";
  CHECK(run_cli({"eval", "--config", other.string(), "--model", model.string()}, &out, &err) == cli::kExitUsage);
}

TEST_CASE("shipped configs parse and validate") {
  Index count = 0;
  for (const auto& e : fs::directory_iterator(fs::path(OWC_SOURCE_DIR) / "configs")) {
    if (e.path().extension() != ".cfg") continue;
    CAPTURE(e.path().string());
    CHECK_NOTHROW(io::load_config(e.path()).validate());
    ++count;
  }
  CHECK(count >= 4);
}
