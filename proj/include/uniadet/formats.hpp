#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uniadet/memory_bank.hpp"
#include "uniadet/raster.hpp"
#include "uniadet/types.hpp"

namespace uniadet {

// All binary formats are little-endian with float32 payloads.
//
// UFST  feature stack
//   "UFST" u16 version=1 u16 L u32 image_h u32 image_w
//   L x { u16 block_index u32 d u32 grid_h u32 grid_w }
//   L x { d f32 global token, grid_h*grid_w*d f32 patch tokens (row-major) }
//
// UADW  weight bank
//   "UADW" u16 version=1 f32 tau f32 lambda_p f32 lambda_f u16 L
//   L x { u16 block_index u32 d, w_cls (d x 2), w_seg (d x 2) }
//   each matrix column-major, normal column first
//   u32 n, n bytes UTF-8 JSON metadata
//
// UFSB  memory bank
//   "UFSB" u16 version=1 u16 L
//   L x { u16 block_index u32 d u32 grid_h u32 grid_w u32 rows }
//   L x { rows*d f32 unit-normalized tokens }
//   u16 K, K x { u32 n, n bytes UTF-8 reference id }

inline constexpr std::uint16_t kFormatVersion = 1;

std::vector<std::uint8_t> encode_features(const FeatureStack& stack);
/// Parses a UFST buffer. The stack's source_id is set to `source_id`.
FeatureStack decode_features(std::span<const std::uint8_t> bytes, const std::string& source_id = {});
void write_feature_file(const FeatureStack& stack, const std::filesystem::path& path);
/// source_id of the result is the file stem.
FeatureStack read_feature_file(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_weights(const WeightBank& bank);
WeightBank decode_weights(std::span<const std::uint8_t> bytes);
void write_weight_file(const WeightBank& bank, const std::filesystem::path& path);
WeightBank read_weight_file(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_bank(const MemoryBank& bank);
MemoryBank decode_bank(std::span<const std::uint8_t> bytes);
void write_bank_file(const MemoryBank& bank, const std::filesystem::path& path);
MemoryBank read_bank_file(const std::filesystem::path& path);

/// Binary PGM (P5). Any nonzero sample is anomalous; the writer emits 0/255.
/// With `expected` set, a size mismatch raises ValidationError.
Mask read_mask(const std::filesystem::path& path,
               std::optional<std::pair<std::size_t, std::size_t>> expected = std::nullopt);
void write_mask(const Mask& mask, const std::filesystem::path& path);
Mask decode_mask(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_mask(const Mask& mask);

/// 8-bit PGM (P5, 1 channel) or PPM (P6, 3 channels), samples scaled to [0, 1].
Raster read_raster(const std::filesystem::path& path);
void write_raster(const Raster& image, const std::filesystem::path& path);

/// Writes a [0, 1] map as an 8-bit PGM scaled to 0..255.
void write_map_pgm(const Grid& map, const std::filesystem::path& path);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(std::span<const std::uint8_t> bytes, const std::filesystem::path& path);

}  // namespace uniadet
