// Copyright 2025 The Compact Attention Authors.
// SPDX-License-Identifier: Apache-2.0

#include "compact_attn/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "compact_attn/errors.hpp"

namespace compact_attn {
namespace {

using nlohmann::json;

constexpr char kTensorMagic[4] = {'C', 'A', 'T', 'N'};
constexpr char kMaskMagic[4] = {'C', 'A', 'T', 'M'};
constexpr std::uint8_t kDtypeF32 = 0;

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>(u & 0xFF));
    u = static_cast<U>(u >> 8);
  }
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get_le(const char* what) {
    need(sizeof(T), what);
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<std::make_unsigned_t<T>>(
               static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }

  std::string_view take(std::size_t count, const char* what) {
    need(count, what);
    auto out = bytes_.substr(pos_, count);
    pos_ += count;
    return out;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t count, const char* what) {
    if (remaining() < count) {
      throw TruncatedPayload(std::string("file ends inside the ") + what);
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

void check_magic(Reader& r, const char (&magic)[4]) {
  if (r.remaining() < 4) throw BadMagic("file is too short for a header");
  const auto got = r.take(4, "magic");
  if (std::memcmp(got.data(), magic, 4) != 0) {
    throw BadMagic("expected magic '" + std::string(magic, 4) + "', got '" +
                   std::string(got) + "'");
  }
}

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
  if (b != 0 && a > std::numeric_limits<std::uint64_t>::max() / b) {
    throw TruncatedPayload("tensor dimensions overflow");
  }
  return a * b;
}

// --- JSON helpers -----------------------------------------------------------

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

const json& field(const json& j, const std::string& key,
                  const std::string& path) {
  if (!j.is_object()) throw SchemaViolation(path.empty() ? "$" : path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw SchemaViolation(join(path, key), "missing field");
  return *it;
}

long long get_int(const json& j, const std::string& key,
                  const std::string& path) {
  const json& v = field(j, key, path);
  if (!v.is_number_integer()) {
    throw SchemaViolation(join(path, key), "expected an integer");
  }
  return v.get<long long>();
}

int get_small_int(const json& j, const std::string& key,
                  const std::string& path) {
  const long long v = get_int(j, key, path);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw SchemaViolation(join(path, key), "integer out of range");
  }
  return static_cast<int>(v);
}

double get_number(const json& j, const std::string& key,
                  const std::string& path) {
  const json& v = field(j, key, path);
  if (!v.is_number()) throw SchemaViolation(join(path, key), "expected a number");
  return v.get<double>();
}

const json& get_array(const json& j, const std::string& key,
                      const std::string& path) {
  const json& v = field(j, key, path);
  if (!v.is_array()) throw SchemaViolation(join(path, key), "expected an array");
  return v;
}

json window_json(const std::optional<SpatialWindow>& w) {
  if (!w) return nullptr;
  return json{{"omega", w->omega}, {"eta", w->eta}};
}

std::optional<SpatialWindow> window_from_json(const json& j,
                                              const std::string& key,
                                              const std::string& path) {
  const json& v = field(j, key, path);
  if (v.is_null()) return std::nullopt;
  const std::string p = join(path, key);
  return SpatialWindow{get_small_int(v, "omega", p), get_small_int(v, "eta", p)};
}

json setup_json(const MaskSetup& s) {
  return json{{"grid", {{"f", s.grid.f}, {"h", s.grid.h}, {"w", s.grid.w}}},
              {"tile", {{"tf", s.tile.tf}, {"th", s.tile.th}, {"tw", s.tile.tw}}},
              {"block_size", s.block_size}};
}

MaskSetup setup_from_json(const json& j) {
  MaskSetup s;
  const json& g = field(j, "grid", "");
  s.grid = VideoGrid{get_small_int(g, "f", "grid"), get_small_int(g, "h", "grid"),
                     get_small_int(g, "w", "grid")};
  const json& t = field(j, "tile", "");
  s.tile = TileShape{get_small_int(t, "tf", "tile"), get_small_int(t, "th", "tile"),
                     get_small_int(t, "tw", "tile")};
  const long long bs = get_int(j, "block_size", "");
  if (bs < 1) throw InvariantViolation("block_size must be >= 1");
  s.block_size = static_cast<std::size_t>(bs);
  try {
    validate(s.grid, s.tile);
  } catch (const InvariantViolation&) {
    throw;
  } catch (const ValidationError& e) {
    throw InvariantViolation(e.what());
  }
  return s;
}

}  // namespace

// --- tensors ----------------------------------------------------------------

std::string encode_tensor(const Tensor& t) {
  std::uint64_t count = 1;
  for (auto d : t.dims) count = checked_mul(count, d);
  if (t.dims.size() > 255) throw ValidationError("tensor rank exceeds 255");
  if (count != t.data.size()) {
    throw ShapeMismatch("tensor dims do not match its payload length");
  }
  std::string out(kTensorMagic, 4);
  put_le<std::uint16_t>(out, kTensorVersion);
  put_le<std::uint8_t>(out, kDtypeF32);
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.dims.size()));
  for (auto d : t.dims) put_le<std::uint64_t>(out, d);
  out.reserve(out.size() + 4 * t.data.size());
  for (float x : t.data) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(x));
  return out;
}

Tensor decode_tensor(std::string_view bytes) {
  Reader r(bytes);
  check_magic(r, kTensorMagic);
  const auto version = r.get_le<std::uint16_t>("header");
  if (version != kTensorVersion) {
    throw UnsupportedVersion("tensor format version " + std::to_string(version) +
                             " is not supported");
  }
  const auto dtype = r.get_le<std::uint8_t>("header");
  if (dtype != kDtypeF32) {
    throw UnsupportedDtype("dtype code " + std::to_string(dtype) +
                           " is not supported");
  }
  const auto rank = r.get_le<std::uint8_t>("header");
  Tensor t;
  std::uint64_t count = 1;
  for (std::uint8_t i = 0; i < rank; ++i) {
    t.dims.push_back(r.get_le<std::uint64_t>("dims"));
    count = checked_mul(count, t.dims.back());
  }
  if (count > r.remaining() / 4) {
    throw TruncatedPayload("payload holds " + std::to_string(r.remaining()) +
                           " bytes, dims need " + std::to_string(count) +
                           " floats");
  }
  t.data.resize(count);
  for (auto& x : t.data) x = std::bit_cast<float>(r.get_le<std::uint32_t>("payload"));
  if (r.remaining() != 0) {
    throw TrailingData(std::to_string(r.remaining()) +
                       " bytes follow the tensor payload");
  }
  return t;
}

void write_tensor(const std::filesystem::path& path, const Tensor& tensor) {
  write_file(path, encode_tensor(tensor));
}

Tensor read_tensor(const std::filesystem::path& path) {
  return decode_tensor(read_file(path));
}

Tensor to_tensor(const Matrix& m) {
  return Tensor{{m.rows(), m.cols()}, {m.data().begin(), m.data().end()}};
}

Tensor to_tensor(const ProbMatrix& m) {
  Tensor t{{m.rows(), m.cols()}, {}};
  t.data.reserve(m.size());
  for (double x : m.data()) t.data.push_back(static_cast<float>(x));
  return t;
}

Matrix to_matrix(const Tensor& t) {
  if (t.dims.size() != 2) {
    throw ShapeMismatch("expected a rank-2 tensor, got rank " +
                        std::to_string(t.dims.size()));
  }
  Matrix m(t.dims[0], t.dims[1]);
  std::copy(t.data.begin(), t.data.end(), m.data().begin());
  return m;
}

ProbMatrix to_prob_matrix(const Tensor& t) {
  if (t.dims.size() != 2) {
    throw ShapeMismatch("expected a rank-2 tensor, got rank " +
                        std::to_string(t.dims.size()));
  }
  ProbMatrix m(t.dims[0], t.dims[1]);
  std::copy(t.data.begin(), t.data.end(), m.data().begin());
  return m;
}

void write_matrix(const std::filesystem::path& path, const Matrix& m) {
  write_tensor(path, to_tensor(m));
}

Matrix read_matrix(const std::filesystem::path& path) {
  return to_matrix(read_tensor(path));
}

// --- masks ------------------------------------------------------------------

std::string encode_mask(const BlockMask& mask) {
  std::string out(kMaskMagic, 4);
  put_le<std::uint16_t>(out, kMaskVersion);
  put_le<std::uint64_t>(out, mask.tokens());
  put_le<std::uint64_t>(out, mask.block_size());
  put_le<std::uint64_t>(out, mask.blocks());
  std::string bits((mask.total_count() + 7) / 8, '\0');
  std::size_t bit = 0;
  for (std::size_t i = 0; i < mask.blocks(); ++i) {
    for (std::size_t j = 0; j < mask.blocks(); ++j, ++bit) {
      if (mask.allowed(i, j)) bits[bit / 8] = static_cast<char>(bits[bit / 8] | (1 << (bit % 8)));
    }
  }
  return out + bits;
}

BlockMask decode_mask(std::string_view bytes) {
  Reader r(bytes);
  check_magic(r, kMaskMagic);
  const auto version = r.get_le<std::uint16_t>("header");
  if (version != kMaskVersion) {
    throw UnsupportedVersion("mask format version " + std::to_string(version) +
                             " is not supported");
  }
  const auto tokens = r.get_le<std::uint64_t>("header");
  const auto block_size = r.get_le<std::uint64_t>("header");
  const auto blocks = r.get_le<std::uint64_t>("header");
  if (block_size == 0 || blocks != (tokens + block_size - 1) / block_size) {
    throw IoError("mask header is inconsistent");
  }
  const std::uint64_t cells = checked_mul(blocks, blocks);
  const auto bits = r.take(static_cast<std::size_t>((cells + 7) / 8), "mask bits");
  if (r.remaining() != 0) throw TrailingData("bytes follow the mask bits");
  BlockMask mask(tokens, block_size);
  std::size_t bit = 0;
  for (std::size_t i = 0; i < blocks; ++i) {
    for (std::size_t j = 0; j < blocks; ++j, ++bit) {
      mask.set(i, j, (static_cast<unsigned char>(bits[bit / 8]) >> (bit % 8)) & 1);
    }
  }
  return mask;
}

void write_mask(const std::filesystem::path& path, const BlockMask& mask) {
  write_file(path, encode_mask(mask));
}

BlockMask read_mask(const std::filesystem::path& path) {
  return decode_mask(read_file(path));
}

// --- configs ----------------------------------------------------------------

json to_json(const HeadMaskConfig& config) {
  json groups = json::array();
  for (const auto& g : config.groups) {
    groups.push_back({{"d_lo", g.d_lo},
                      {"d_hi", g.d_hi},
                      {"w1", window_json(g.window.w1)},
                      {"w2", window_json(g.window.w2)}});
  }
  return json{{"groups", groups}};
}

json to_json(const ConfigDocument& doc) {
  json j = setup_json(doc.setup);
  j["groups"] = to_json(doc.config)["groups"];
  return j;
}

json to_json(const ScheduleDocument& doc) {
  json j = setup_json(doc.setup);
  j["full_prefix"] = doc.schedule.full_prefix;
  j["total_steps"] = doc.schedule.total_steps;
  json entries = json::array();
  for (const auto& e : doc.schedule.entries) {
    entries.push_back({{"layer", e.layer},
                       {"head", e.head},
                       {"step_lo", e.step_lo},
                       {"step_hi", e.step_hi},
                       {"config", to_json(e.config)}});
  }
  j["entries"] = entries;
  return j;
}

HeadMaskConfig config_from_json(const json& j, const VideoGrid& grid,
                                const std::string& path) {
  const std::string groups_path = join(path, "groups");
  const json& groups = get_array(j, "groups", path);
  HeadMaskConfig config;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const std::string p = groups_path + "[" + std::to_string(i) + "]";
    const json& g = groups[i];
    FrameGroup group;
    group.d_lo = get_small_int(g, "d_lo", p);
    group.d_hi = get_small_int(g, "d_hi", p);
    group.window.w1 = window_from_json(g, "w1", p);
    group.window.w2 = window_from_json(g, "w2", p);
    config.groups.push_back(group);
  }
  try {
    validate(config, grid);
  } catch (const InvariantViolation& e) {
    throw InvariantViolation(path.empty() ? e.what() : path + ": " + e.what());
  }
  return config;
}

ConfigFile config_file_from_json(const json& j) {
  if (!j.is_object()) throw SchemaViolation("$", "expected a JSON object");
  const MaskSetup setup = setup_from_json(j);
  const bool has_groups = j.contains("groups");
  const bool has_entries = j.contains("entries");
  if (has_groups == has_entries) {
    throw SchemaViolation("$", "expected exactly one of 'groups' or 'entries'");
  }
  if (has_groups) return ConfigDocument{setup, config_from_json(j, setup.grid)};

  ScheduleDocument doc{setup, {}};
  doc.schedule.full_prefix = get_small_int(j, "full_prefix", "");
  doc.schedule.total_steps = get_small_int(j, "total_steps", "");
  const json& entries = get_array(j, "entries", "");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const std::string p = "entries[" + std::to_string(i) + "]";
    const json& e = entries[i];
    ScheduleEntry entry;
    entry.layer = get_small_int(e, "layer", p);
    entry.head = get_small_int(e, "head", p);
    entry.step_lo = get_small_int(e, "step_lo", p);
    entry.step_hi = get_small_int(e, "step_hi", p);
    entry.config = config_from_json(field(e, "config", p), setup.grid, p + ".config");
    doc.schedule.entries.push_back(std::move(entry));
  }
  validate(doc.schedule, setup.grid);
  return doc;
}

ConfigFile load_config(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaViolation("$", std::string("invalid JSON: ") + e.what());
  }
  return config_file_from_json(j);
}

void save_config(const std::filesystem::path& path, const ConfigFile& file) {
  const json j = std::visit([](const auto& doc) { return to_json(doc); }, file);
  write_file(path, j.dump(2) + "\n");
}

ConfigDocument load_head_config(const std::filesystem::path& path) {
  auto file = load_config(path);
  if (auto* doc = std::get_if<ConfigDocument>(&file)) return std::move(*doc);
  throw SchemaViolation("groups", path.string() + " holds a schedule, not a head config");
}

ScheduleDocument load_schedule(const std::filesystem::path& path) {
  auto file = load_config(path);
  if (auto* doc = std::get_if<ScheduleDocument>(&file)) return std::move(*doc);
  throw SchemaViolation("entries", path.string() + " holds a head config, not a schedule");
}

// --- specs, traces, params ---------------------------------------------------

json to_json(const SyntheticHeadSpec& s) {
  return json{{"spatial", to_string(s.spatial)},
              {"temporal", to_string(s.temporal)},
              {"decay_rate", s.decay_rate},
              {"band_center", s.band_center},
              {"band_width", s.band_width},
              {"window1", window_json(s.window1)},
              {"window2", window_json(s.window2)},
              {"mass", s.mass},
              {"noise_floor", s.noise_floor},
              {"seed", s.seed}};
}

SyntheticHeadSpec spec_from_json(const json& j) {
  SyntheticHeadSpec s;
  const json& spatial = field(j, "spatial", "");
  const json& temporal = field(j, "temporal", "");
  if (!spatial.is_string()) throw SchemaViolation("spatial", "expected a string");
  if (!temporal.is_string()) throw SchemaViolation("temporal", "expected a string");
  s.spatial = parse_spatial_kind(spatial.get<std::string>());
  s.temporal = parse_temporal_kind(temporal.get<std::string>());
  s.decay_rate = get_number(j, "decay_rate", "");
  s.band_center = get_small_int(j, "band_center", "");
  s.band_width = get_small_int(j, "band_width", "");
  if (auto w = window_from_json(j, "window1", "")) s.window1 = *w;
  if (auto w = window_from_json(j, "window2", "")) s.window2 = *w;
  s.mass = get_number(j, "mass", "");
  s.noise_floor = get_number(j, "noise_floor", "");
  const json& seed = field(j, "seed", "");
  if (!seed.is_number_unsigned() && !seed.is_number_integer()) {
    throw SchemaViolation("seed", "expected an integer");
  }
  s.seed = seed.get<std::uint64_t>();
  return s;
}

json to_json(const SearchTrace& trace) {
  json steps = json::array();
  for (const auto& s : trace.steps) {
    json changes = json::array();
    for (const auto& c : s.move.changes) {
      changes.push_back({{"slot", c.slot},
                         {"axis", c.axis == Axis::X ? "x" : "y"},
                         {"new_extent", c.new_extent}});
    }
    steps.push_back({{"move", s.move.describe()},
                     {"group", s.move.group},
                     {"disable", s.move.disable},
                     {"changes", changes},
                     {"recall_after", s.recall_after},
                     {"cost_after", s.cost_after},
                     {"ratio", s.ratio}});
  }
  return json{{"initial_recall", trace.initial_recall},
              {"initial_cost", trace.initial_cost},
              {"steps", steps},
              {"termination", to_string(trace.termination)}};
}

json to_json(const SearchParams& p) {
  return json{{"tau", p.tau},
              {"lambda", p.lambda},
              {"tile", {{"tf", p.tile.tf}, {"th", p.tile.th}, {"tw", p.tile.tw}}},
              {"block_size", p.block_size},
              {"group_starts", p.group_starts},
              {"step_reuse_n", p.step_reuse_n},
              {"full_prefix", p.full_prefix},
              {"mode", to_string(p.mode)}};
}

// --- files ------------------------------------------------------------------

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("failed reading " + path.string());
  return std::move(buf).str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() +
                        ": " + ec.message());
}

}  // namespace compact_attn
