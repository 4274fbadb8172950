#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pdda/params.hpp"

namespace pdda {

/// Binary layout, all integers unsigned 64-bit little-endian:
///
///   "PDDA" version:u8=1 count
///   count x { name_len name[name_len] rank dims[rank] payload[numel] }
///
/// payload values are IEEE-754 doubles, little-endian.
inline constexpr std::uint8_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const NamedArrays& arrays);
/// Throws pdda::Error naming the byte offset of the first malformed field.
NamedArrays decode_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Refuses non-finite arrays.
void save_checkpoint(const std::filesystem::path& path, const NamedArrays& arrays);
NamedArrays load_checkpoint(const std::filesystem::path& path);

/// Binary PGM (P5, maxval 255). Values map from [-1,1] by round((v+1) 127.5),
/// clamped to 0..255. The image is the last two dimensions of `image`, whose
/// leading dimensions must all be 1.
void write_pgm(const std::filesystem::path& path, const Tensor& image);
std::vector<std::uint8_t> encode_pgm(const Tensor& image);
/// Returns a (1,H,W) tensor with v = p / 127.5 - 1.
Tensor read_pgm(const std::filesystem::path& path);
Tensor decode_pgm(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace pdda
