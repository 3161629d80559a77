// Copyright 2025 The Compact Attention Authors.
// SPDX-License-Identifier: Apache-2.0

// Persistence formats.
//
// Tensor file (*.catn), all integers little-endian:
//   "CATN" | u16 version = 1 | u8 dtype (0 = f32) | u8 rank | u64 dims[rank]
//   | row-major f32 payload
//
// Block mask file (*.catm):
//   "CATM" | u16 version = 1 | u64 tokens | u64 block_size | u64 blocks
//   | ceil(blocks^2 / 8) bytes, row-major bits, least significant bit first
//
// Configs and schedules are JSON documents carrying grid {f,h,w},
// tile {tf,th,tw} and block_size next to either `groups` (one head) or
// `full_prefix`, `total_steps` and `entries` (a schedule). Extents are
// {omega, eta} objects or null.
//
// By convention post-softmax maps are stored as *.probs.catn and raw
// projections as *.q.catn, *.k.catn, *.v.catn.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "compact_attn/attention.hpp"
#include "compact_attn/layout.hpp"
#include "compact_attn/masks.hpp"
#include "compact_attn/matrix.hpp"
#include "compact_attn/search.hpp"
#include "compact_attn/synth.hpp"

namespace compact_attn {

inline constexpr std::uint16_t kTensorVersion = 1;
inline constexpr std::uint16_t kMaskVersion = 1;

struct Tensor {
  std::vector<std::uint64_t> dims;
  std::vector<float> data;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::string encode_tensor(const Tensor& tensor);
// Throws BadMagic, UnsupportedVersion, UnsupportedDtype, TruncatedPayload or
// TrailingData.
Tensor decode_tensor(std::string_view bytes);

void write_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_tensor(const std::filesystem::path& path);

Tensor to_tensor(const Matrix& m);
Tensor to_tensor(const ProbMatrix& m);
// Throws ShapeMismatch unless the tensor has rank 2.
Matrix to_matrix(const Tensor& t);
ProbMatrix to_prob_matrix(const Tensor& t);

void write_matrix(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix(const std::filesystem::path& path);

std::string encode_mask(const BlockMask& mask);
BlockMask decode_mask(std::string_view bytes);
void write_mask(const std::filesystem::path& path, const BlockMask& mask);
BlockMask read_mask(const std::filesystem::path& path);

// Grid, tile and block size a config is defined against.
struct MaskSetup {
  VideoGrid grid;
  TileShape tile = kDefaultTile;
  std::size_t block_size = kDefaultBlockSize;

  friend bool operator==(const MaskSetup&, const MaskSetup&) = default;
};

struct ConfigDocument {
  MaskSetup setup;
  HeadMaskConfig config;

  friend bool operator==(const ConfigDocument&, const ConfigDocument&) = default;
};

struct ScheduleDocument {
  MaskSetup setup;
  ModelMaskSchedule schedule;

  friend bool operator==(const ScheduleDocument&,
                         const ScheduleDocument&) = default;
};

using ConfigFile = std::variant<ConfigDocument, ScheduleDocument>;

nlohmann::json to_json(const HeadMaskConfig& config);
nlohmann::json to_json(const ConfigDocument& doc);
nlohmann::json to_json(const ScheduleDocument& doc);

// Throw SchemaViolation (with a field path) on structural errors and
// InvariantViolation when the decoded value breaks a module invariant.
HeadMaskConfig config_from_json(const nlohmann::json& j, const VideoGrid& grid,
                                const std::string& path = "");
ConfigFile config_file_from_json(const nlohmann::json& j);

ConfigFile load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ConfigFile& file);

// Convenience wrappers that require a specific document kind.
ConfigDocument load_head_config(const std::filesystem::path& path);
ScheduleDocument load_schedule(const std::filesystem::path& path);

nlohmann::json to_json(const SyntheticHeadSpec& spec);
SyntheticHeadSpec spec_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SearchTrace& trace);
nlohmann::json to_json(const SearchParams& params);

std::string read_file(const std::filesystem::path& path);
// Writes through a temporary file and renames it into place.
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace compact_attn
