#include "owc/io/files.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <iterator>
#include <map>
#include <ostream>
#include <sstream>

namespace owc::io {

namespace {

constexpr std::size_t kMagicSize = sizeof(kModelMagic) - 1;

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buffer_.insert(buffer_.end(), c, c + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buffer_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buffer_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  const std::vector<char>& buffer() const { return buffer_; }

 private:
  std::vector<char> buffer_;
};

class ByteReader {
 public:
  ByteReader(const char* data, std::size_t size) : data_(data), size_(size) {}
  void need(std::size_t n) const {
    if (size_ - pos_ < n) throw IntegrityError("model file is truncated");
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(data_ + pos_, n);
    pos_ += n;
    return s;
  }
  std::uint64_t uint(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(width);
    return v;
  }
  double f64() { return std::bit_cast<double>(uint(8)); }
  std::size_t remaining() const { return size_ - pos_; }

 private:
  const char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

std::uint64_t checksum(const char* data, std::size_t n) { return fnv1a64(std::string_view(data, n)); }

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

void describe_network(std::ostringstream& os, const std::string& name, const nn::NetworkD& net) {
  os << name << ".input=" << net.input_size() << '\n';
  os << name << ".layers=" << net.layers().size() << '\n';
  for (const auto& layer : net.layers()) os << nn::describe_layer(layer) << '\n';
}

class Descriptor {
 public:
  explicit Descriptor(const std::string& text) : in_(text) {}

  std::string value(const std::string& key) {
    std::string line;
    if (!std::getline(in_, line)) throw IntegrityError("model descriptor ends before '" + key + "'");
    const auto eq = line.find('=');
    if (eq == std::string::npos || line.substr(0, eq) != key) {
      throw IntegrityError("model descriptor: expected '" + key + "', found '" + line + "'");
    }
    return line.substr(eq + 1);
  }

  Index count(const std::string& key) {
    const std::string v = value(key);
    try {
      return static_cast<Index>(std::stoll(v));
    } catch (const std::exception&) {
      throw IntegrityError("model descriptor: bad integer for '" + key + "'");
    }
  }

  double real(const std::string& key) {
    const std::string v = value(key);
    try {
      return std::stod(v);
    } catch (const std::exception&) {
      throw IntegrityError("model descriptor: bad number for '" + key + "'");
    }
  }

  nn::NetworkD network(const std::string& name) {
    const Index input = count(name + ".input");
    const Index n = count(name + ".layers");
    std::vector<nn::LayerSpec> layers;
    for (Index i = 0; i < n; ++i) {
      std::string line;
      if (!std::getline(in_, line)) throw IntegrityError("model descriptor: missing " + name + " layer");
      try {
        layers.push_back(nn::parse_layer(line));
      } catch (const ConfigError& e) {
        throw IntegrityError(std::string("model descriptor: ") + e.what());
      }
    }
    return nn::NetworkD(std::move(layers), input);
  }

 private:
  std::istringstream in_;
};

}  // namespace

void save_model(std::ostream& os, const models::Transceiver& model) {
  std::ostringstream d;
  d << "kind=" << models::kind_name(model.kind) << '\n'
    << "messages=" << model.messages << '\n'
    << "codeword_rows=" << model.codeword_rows << '\n'
    << "codeword_cols=" << model.codeword_cols << '\n'
    << "sensor_pixels=" << model.sensor_pixels << '\n'
    << "filters=" << model.filters << '\n'
    << "trained_snr_db=" << format_double(model.trained_snr_db) << '\n'
    << "rotation_trained=" << (model.rotation_trained ? 1 : 0) << '\n';
  describe_network(d, "encoder", model.encoder);
  describe_network(d, "decoder", model.decoder);
  const std::string descriptor = d.str();

  ByteWriter w;
  w.bytes(kModelMagic, kMagicSize);
  w.u32(kModelVersion);
  w.u64(descriptor.size());
  w.bytes(descriptor.data(), descriptor.size());
  std::uint64_t count = 0;
  for (const auto* net : {&model.encoder, &model.decoder}) {
    for (const auto& t : net->params().tensors) count += static_cast<std::uint64_t>(t.value.size());
  }
  w.u64(count);
  for (const auto* net : {&model.encoder, &model.decoder}) {
    for (const auto& t : net->params().tensors) {
      for (Index i = 0; i < t.value.size(); ++i) w.f64(t.value[i]);
    }
  }
  w.u64(checksum(w.buffer().data(), w.buffer().size()));
  os.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!os) throw Error("failed to write model file");
}

models::Transceiver load_model(std::istream& is) {
  const std::string data((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  ByteReader r(data.data(), data.size());
  if (data.size() < kMagicSize || r.bytes(kMagicSize) != std::string(kModelMagic, kMagicSize)) {
    throw IntegrityError("not a model file (bad magic)");
  }
  const auto version = static_cast<std::uint32_t>(r.uint(4));
  if (version != kModelVersion) {
    throw VersionError("model file version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kModelVersion) + ")");
  }
  if (data.size() < kMagicSize + 4 + 8) throw IntegrityError("model file is truncated");
  const std::size_t body = data.size() - 8;
  ByteReader tail(data.data() + body, 8);
  if (tail.uint(8) != checksum(data.data(), body)) throw IntegrityError("model file checksum mismatch");

  const std::uint64_t descriptor_size = r.uint(8);
  if (descriptor_size > r.remaining()) throw IntegrityError("model file is truncated");
  Descriptor d(r.bytes(static_cast<std::size_t>(descriptor_size)));

  models::Transceiver m;
  try {
    m.kind = models::parse_kind(d.value("kind"));
  } catch (const ConfigError& e) {
    throw IntegrityError(std::string("model descriptor: ") + e.what());
  }
  m.messages = d.count("messages");
  m.codeword_rows = d.count("codeword_rows");
  m.codeword_cols = d.count("codeword_cols");
  m.sensor_pixels = d.count("sensor_pixels");
  m.filters = d.count("filters");
  m.trained_snr_db = d.real("trained_snr_db");
  m.rotation_trained = d.count("rotation_trained") != 0;
  try {
    m.encoder = d.network("encoder");
    m.decoder = d.network("decoder");
  } catch (const IntegrityError&) {
    throw;
  } catch (const Error& e) {
    throw IntegrityError(std::string("model architecture does not validate: ") + e.what());
  }
  if (m.encoder.input_size() != m.messages || m.decoder.output_size() != m.messages ||
      m.encoder.output_size() != m.codeword_size() || m.decoder.input_size() != m.receive_size()) {
    throw IntegrityError("model descriptor: network shapes disagree with the header");
  }

  const std::uint64_t count = r.uint(8);
  std::uint64_t expected = 0;
  for (auto* net : {&m.encoder, &m.decoder}) {
    for (const auto& t : net->params().tensors) expected += static_cast<std::uint64_t>(t.value.size());
  }
  if (count != expected) throw IntegrityError("model payload size does not match the architecture");
  if (r.remaining() != count * 8 + 8) throw IntegrityError("model payload length mismatch");
  for (auto* net : {&m.encoder, &m.decoder}) {
    for (auto& t : net->params().tensors) {
      for (Index i = 0; i < t.value.size(); ++i) t.value[i] = r.f64();
    }
  }
  return m;
}

void save_model(const std::filesystem::path& path, const models::Transceiver& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  save_model(os, model);
}

models::Transceiver load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open model file " + path.string());
  return load_model(is);
}

void write_codebook_csv(std::ostream& os, const models::Codebook& codebook) {
  os << "message,row,col,intensity\n";
  char buf[64];
  for (Index b = 0; b < codebook.size(); ++b) {
    for (Index r = 0; r < codebook.rows; ++r) {
      for (Index c = 0; c < codebook.cols; ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g", codebook.words(r * codebook.cols + c, b));
        os << b << ',' << r << ',' << c << ',' << buf << '\n';
      }
    }
  }
}

models::Codebook read_codebook_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "message,row,col,intensity") {
    throw ArgumentError("codebook CSV must start with 'message,row,col,intensity'");
  }
  std::map<std::tuple<Index, Index, Index>, double> entries;
  Index messages = 0;
  Index rows = 0;
  Index cols = 0;
  int number = 1;
  while (std::getline(is, line)) {
    ++number;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string f[4];
    for (int i = 0; i < 4; ++i) {
      if (!std::getline(ss, f[i], ',')) throw ArgumentError("codebook CSV line " + std::to_string(number) + ": expected 4 fields");
    }
    try {
      const Index b = std::stoll(f[0]);
      const Index r = std::stoll(f[1]);
      const Index c = std::stoll(f[2]);
      if (b < 0 || r < 0 || c < 0) throw std::out_of_range("negative index");
      if (!entries.emplace(std::tuple(b, r, c), std::stod(f[3])).second) {
        throw ArgumentError("codebook CSV line " + std::to_string(number) + ": duplicate entry");
      }
      messages = std::max(messages, b + 1);
      rows = std::max(rows, r + 1);
      cols = std::max(cols, c + 1);
    } catch (const ArgumentError&) {
      throw;
    } catch (const std::exception&) {
      throw ArgumentError("codebook CSV line " + std::to_string(number) + ": malformed field");
    }
  }
  if (static_cast<Index>(entries.size()) != messages * rows * cols || messages == 0) {
    throw ArgumentError("codebook CSV does not describe a complete codebook");
  }
  MatrixX<double> words(rows * cols, messages);
  for (const auto& [key, v] : entries) {
    const auto [b, r, c] = key;
    words(r * cols + c, b) = v;
  }
  return models::make_codebook(std::move(words), rows, cols);
}

}  // namespace owc::io
