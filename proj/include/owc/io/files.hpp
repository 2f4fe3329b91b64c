#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "owc/models/transceiver.hpp"

namespace owc::io {

inline constexpr char kModelMagic[] = "OWCAE1\n";
inline constexpr std::uint32_t kModelVersion = 1;

/// Model file layout:
///   magic "OWCAE1\n"
///   u32 format version
///   u64 descriptor length, then the descriptor: `key=value` header lines
///     followed by one line per encoder and decoder layer
///   u64 value count, then every parameter tensor as f64, encoder first
///   u64 FNV-1a-64 checksum of all preceding bytes
/// All integers and floats little-endian.
void save_model(std::ostream& os, const models::Transceiver& model);
models::Transceiver load_model(std::istream& is);

void save_model(const std::filesystem::path& path, const models::Transceiver& model);
models::Transceiver load_model(const std::filesystem::path& path);

/// `message,row,col,intensity`, one line per codeword entry, zero-based.
void write_codebook_csv(std::ostream& os, const models::Codebook& codebook);
models::Codebook read_codebook_csv(std::istream& is);

}  // namespace owc::io
