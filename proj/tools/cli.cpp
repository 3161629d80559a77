// Copyright 2025 The Compact Attention Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <regex>
#include <sstream>
#include <string_view>

#include <CLI11.hpp>
#include <json.hpp>

#include "compact_attn/attention.hpp"
#include "compact_attn/errors.hpp"
#include "compact_attn/io.hpp"
#include "compact_attn/layout.hpp"
#include "compact_attn/masks.hpp"
#include "compact_attn/metrics.hpp"
#include "compact_attn/parallel.hpp"
#include "compact_attn/prob_map.hpp"
#include "compact_attn/search.hpp"
#include "compact_attn/synth.hpp"

namespace compact_attn::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kSeedEnv = "COMPACT_ATTN_SEED";
constexpr const char* kManifestName = "manifest.json";
constexpr double kTopkTarget = 0.95;

// --- argument parsing -------------------------------------------------------

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    std::size_t end = s.find(sep, start);
    parts.emplace_back(s.substr(start, end - start));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return parts;
}

long long parse_int(const std::string& text, const std::string& what) {
  long long value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ValidationError(what + ": '" + text + "' is not an integer");
  }
  return value;
}

double parse_double(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) {
    throw ValidationError(what + ": '" + text + "' is not a number");
  }
  return value;
}

std::vector<int> parse_dims(const std::string& text, const std::string& what) {
  auto parts = split(text, 'x');
  if (parts.size() != 3) {
    throw ValidationError(what + ": expected AxBxC, got '" + text + "'");
  }
  std::vector<int> dims;
  for (const auto& p : parts) {
    long long v = parse_int(p, what);
    if (v < 1 || v > std::numeric_limits<int>::max()) {
      throw ValidationError(what + ": dimension " + p + " must be positive");
    }
    dims.push_back(static_cast<int>(v));
  }
  return dims;
}

VideoGrid parse_grid(const std::string& text) {
  auto d = parse_dims(text, "--grid");
  VideoGrid grid{d[0], d[1], d[2]};
  validate(grid);
  return grid;
}

TileShape parse_tile(const std::string& text) {
  auto d = parse_dims(text, "--tile");
  return {d[0], d[1], d[2]};
}

std::vector<int> parse_int_list(const std::string& text, const std::string& what) {
  std::vector<int> out;
  for (const auto& p : split(text, ',')) {
    out.push_back(static_cast<int>(parse_int(p, what)));
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& text,
                                      const std::string& what) {
  std::vector<double> out;
  for (const auto& p : split(text, ',')) out.push_back(parse_double(p, what));
  return out;
}

std::uint64_t default_seed() {
  const char* env = std::getenv(kSeedEnv);
  if (env == nullptr || *env == '\0') return 0;
  std::uint64_t seed = 0;
  std::string_view s(env);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), seed);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ValidationError(std::string(kSeedEnv) + ": '" + env +
                          "' is not an unsigned integer");
  }
  return seed;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string fmt_short(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

// --- map inputs ------------------------------------------------------------

struct MapInput {
  std::string name;
  fs::path file;
  int layer = 0;
  int head = 0;
  int step = 0;
};

// l{L}_h{H}_s{S}.probs.catn
std::optional<DumpKey> parse_dump_name(const std::string& filename) {
  static const std::regex pattern(R"(l(\d+)_h(\d+)_s(\d+)\.probs\.catn)");
  std::smatch m;
  if (!std::regex_match(filename, m, pattern)) return std::nullopt;
  return DumpKey{std::stoi(m[1]), std::stoi(m[2]), std::stoi(m[3])};
}

std::string stem_of(const fs::path& file) {
  std::string name = file.filename().string();
  for (std::string_view suffix : {".probs.catn", ".catn"}) {
    if (name.size() > suffix.size() && name.ends_with(suffix)) {
      return name.substr(0, name.size() - suffix.size());
    }
  }
  return name;
}

struct MapSet {
  std::optional<VideoGrid> grid;
  std::vector<MapInput> maps;
};

MapSet read_manifest(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw SchemaViolation("", std::string("manifest is not valid JSON: ") + e.what());
  }
  MapSet set;
  try {
    const json& g = doc.at("grid");
    VideoGrid grid{g.at("f").get<int>(), g.at("h").get<int>(), g.at("w").get<int>()};
    validate(grid);
    set.grid = grid;
    const json& maps = doc.at("maps");
    for (std::size_t i = 0; i < maps.size(); ++i) {
      const json& m = maps[i];
      MapInput in;
      in.name = m.at("name").get<std::string>();
      in.file = path.parent_path() / m.at("file").get<std::string>();
      in.layer = m.value("layer", 0);
      in.head = m.value("head", static_cast<int>(i));
      in.step = m.value("step", 0);
      set.maps.push_back(std::move(in));
    }
  } catch (const json::exception& e) {
    throw SchemaViolation("manifest", e.what());
  }
  return set;
}

MapSet collect_maps(const std::vector<std::string>& files,
                    const std::string& manifest,
                    const std::optional<VideoGrid>& grid) {
  MapSet set;
  if (!manifest.empty()) set = read_manifest(manifest);
  if (grid) {
    if (set.grid && *set.grid != *grid) {
      throw IncompatibleGrid("--grid " + to_string(*grid) +
                             " disagrees with manifest grid " +
                             to_string(*set.grid));
    }
    set.grid = grid;
  }
  for (std::size_t i = 0; i < files.size(); ++i) {
    MapInput in;
    in.file = files[i];
    in.name = stem_of(in.file);
    if (auto key = parse_dump_name(in.file.filename().string())) {
      in.layer = key->layer;
      in.head = key->head;
      in.step = key->step;
    } else {
      in.head = static_cast<int>(set.maps.size());
    }
    set.maps.push_back(std::move(in));
  }
  if (set.maps.empty()) throw ValidationError("no attention maps given");
  if (!set.grid) throw ValidationError("--grid is required without --manifest");
  return set;
}

// Maps on disk are stored in raster token order.
AttentionProbMap load_map(const fs::path& file, const VideoGrid& grid,
                          bool renormalize) {
  ProbMatrix probs = to_prob_matrix(read_tensor(file));
  if (probs.rows() != grid.tokens() || probs.cols() != grid.tokens()) {
    throw ShapeMismatch(file.string() + ": map is " +
                        std::to_string(probs.rows()) + "x" +
                        std::to_string(probs.cols()) + ", grid " +
                        to_string(grid) + " needs " +
                        std::to_string(grid.tokens()) + " tokens");
  }
  Permutation id = Permutation::identity(grid.tokens());
  return renormalize
             ? AttentionProbMap::renormalized(grid, std::move(id), std::move(probs))
             : AttentionProbMap(grid, std::move(id), std::move(probs));
}

std::vector<AttentionProbMap> load_maps(const MapSet& set, const Permutation& order,
                                        bool renormalize, std::size_t jobs) {
  std::vector<std::optional<AttentionProbMap>> slots(set.maps.size());
  parallel_for(set.maps.size(), jobs, [&](std::size_t i) {
    slots[i] = load_map(set.maps[i].file, *set.grid, renormalize).reordered(order);
  });
  std::vector<AttentionProbMap> maps;
  maps.reserve(slots.size());
  for (auto& s : slots) maps.push_back(std::move(*s));
  return maps;
}

// --- shared option groups ---------------------------------------------------

struct Common {
  std::string grid;
  std::string tile = "1x4x4";
  std::size_t block_size = kDefaultBlockSize;
  std::string order = "tiled";
  std::size_t jobs = 1;
};

struct SearchOpts {
  double tau = 0.9;
  double lambda = 0.011;
  std::string groups = "0,1,3,7";
  std::string mode = "dual";
  int reuse = 1;
  int full_prefix = 0;
};

void add_common(CLI::App* app, Common& c, bool with_grid) {
  if (with_grid) app->add_option("--grid", c.grid, "token grid FxHxW");
  app->add_option("--tile", c.tile, "tile shape TFxTHxTW")->capture_default_str();
  app->add_option("--block-size", c.block_size, "tokens per block")
      ->capture_default_str();
  app->add_option("--order", c.order, "token order: raster or tiled")
      ->capture_default_str();
  app->add_option("--jobs", c.jobs, "concurrent per-head tasks")
      ->capture_default_str();
}

void add_search(CLI::App* app, SearchOpts& s) {
  app->add_option("--tau", s.tau, "minimum recall")->capture_default_str();
  app->add_option("--lambda", s.lambda, "maximum recall loss per unit cost")
      ->capture_default_str();
  app->add_option("--groups", s.groups, "frame-group start distances")
      ->capture_default_str();
  app->add_option("--mode", s.mode, "dual, frame-group or cubic")
      ->capture_default_str();
}

SearchParams make_params(const Common& c, const SearchOpts& s) {
  SearchParams p;
  p.tau = s.tau;
  p.lambda = s.lambda;
  p.tile = parse_tile(c.tile);
  p.block_size = c.block_size;
  p.group_starts = parse_int_list(s.groups, "--groups");
  p.step_reuse_n = s.reuse;
  p.full_prefix = s.full_prefix;
  p.mode = parse_search_mode(s.mode);
  validate(p);
  return p;
}

std::string params_line(const SearchParams& p, TokenOrder order,
                        std::size_t jobs) {
  std::ostringstream os;
  os << "tau=" << fmt_short(p.tau) << " lambda=" << fmt_short(p.lambda)
     << " tile=" << to_string(p.tile) << " block_size=" << p.block_size
     << " groups=" << join(p.group_starts) << " mode=" << to_string(p.mode)
     << " order=" << to_string(order) << " reuse=" << p.step_reuse_n
     << " full_prefix=" << p.full_prefix << " jobs=" << jobs;
  return os.str();
}

void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << text;
  } else {
    write_file(path, text);
  }
}

// --- synth ------------------------------------------------------------------

struct SynthOpts {
  Common common;
  std::string pattern = "local";
  std::string temporal = "invariant";
  double rate = 0.5;
  int band_center = 1;
  int band_width = 0;
  int omega = 2;
  int eta = 2;
  int omega2 = 0;
  int eta2 = 0;
  double mass = 0.9;
  double noise = 0.0;
  std::optional<std::uint64_t> seed;
  std::string spec_file;
  std::string name;
  bool battery = false;
  int variants = 0;
  int jitter = 0;
  double mass_jitter = 0.0;
  std::size_t qkv = 0;
  std::string out_dir = ".";
};

json grid_json(const VideoGrid& g) { return {{"f", g.f}, {"h", g.h}, {"w", g.w}}; }

int cmd_synth(const SynthOpts& o, std::ostream& out) {
  if (o.common.grid.empty()) throw ValidationError("--grid is required");
  VideoGrid grid = parse_grid(o.common.grid);
  std::uint64_t seed = o.seed ? *o.seed : default_seed();

  SyntheticHeadSpec base;
  if (!o.spec_file.empty()) {
    json j;
    try {
      j = json::parse(read_file(o.spec_file));
    } catch (const json::parse_error& e) {
      throw SchemaViolation("", std::string("spec is not valid JSON: ") + e.what());
    }
    base = spec_from_json(j);
  } else {
    base.spatial = parse_spatial_kind(o.pattern);
    base.temporal = parse_temporal_kind(o.temporal);
    base.decay_rate = o.rate;
    base.band_center = o.band_center;
    base.band_width = o.band_width;
    base.window1 = {o.omega, o.eta};
    base.window2 = {o.omega2, o.eta2};
    base.mass = o.mass;
    base.noise_floor = o.noise;
    base.seed = seed;
  }

  std::vector<NamedSpec> specs;
  if (o.battery) {
    specs = pattern_battery(grid, seed);
  } else {
    std::string name = o.name.empty() ? to_string(base.spatial) : o.name;
    specs.push_back({name, base});
  }
  if (o.variants > 0) {
    std::vector<NamedSpec> expanded;
    Perturbation pert;
    pert.extent_jitter = o.jitter;
    pert.mass_jitter = o.mass_jitter;
    pert.tile = parse_tile(o.common.tile);
    for (const auto& ns : specs) {
      for (int v = 0; v < o.variants; ++v) {
        std::uint64_t vseed = seed + static_cast<std::uint64_t>(v);
        expanded.push_back({ns.name + "_v" + std::to_string(v),
                            gen_prompt_variant(ns.spec, pert, vseed)});
      }
    }
    specs = std::move(expanded);
  }
  for (const auto& ns : specs) validate(ns.spec, grid);

  out << "grid=" << to_string(grid) << " seed=" << seed
      << " maps=" << specs.size() << " variants=" << o.variants
      << " jitter=" << o.jitter << " mass_jitter=" << fmt_short(o.mass_jitter)
      << " qkv=" << o.qkv << " out=" << o.out_dir << '\n';

  fs::path dir = o.out_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  json entries = json::array();
  std::vector<std::string> names(specs.size());
  parallel_for(specs.size(), o.common.jobs, [&](std::size_t i) {
    const auto& ns = specs[i];
    AttentionProbMap map = gen_probmap(ns.spec, grid);
    write_tensor(dir / (ns.name + ".probs.catn"), to_tensor(map.probs()));
    if (o.qkv > 0) {
      AttentionInputs in = gen_qkv(grid, o.qkv, ns.spec.seed);
      write_matrix(dir / (ns.name + ".q.catn"), in.q);
      write_matrix(dir / (ns.name + ".k.catn"), in.k);
      write_matrix(dir / (ns.name + ".v.catn"), in.v);
    }
  });
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& ns = specs[i];
    entries.push_back({{"name", ns.name},
                       {"file", ns.name + ".probs.catn"},
                       {"layer", 0},
                       {"head", static_cast<int>(i)},
                       {"step", 0},
                       {"seed", ns.spec.seed},
                       {"spec", to_json(ns.spec)}});
    out << ns.name << ".probs.catn\n";
  }
  json manifest{{"grid", grid_json(grid)},
                {"order", "raster"},
                {"seed", seed},
                {"maps", entries}};
  write_file(dir / kManifestName, manifest.dump(2) + "\n");
  return kOk;
}

// --- search -----------------------------------------------------------------

struct SearchCmdOpts {
  Common common;
  SearchOpts search;
  std::vector<std::string> maps;
  std::string manifest;
  std::string dumps;
  bool merge = false;
  std::string sweep_tau;
  std::string trace;
  std::string out;
  std::string csv;
  bool renormalize = false;
};

DumpTable load_dumps(const fs::path& dir, const std::optional<VideoGrid>& grid,
                     const Permutation& order, bool renormalize,
                     std::size_t jobs) {
  if (!grid) throw ValidationError("--grid is required with --dumps");
  std::error_code ec;
  std::vector<std::pair<DumpKey, fs::path>> files;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    if (auto key = parse_dump_name(entry.path().filename().string())) {
      files.emplace_back(*key, entry.path());
    }
  }
  if (ec) throw IoError("cannot list " + dir.string() + ": " + ec.message());
  if (files.empty()) {
    throw MissingDump("no l{L}_h{H}_s{S}.probs.catn files in " + dir.string());
  }
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::optional<AttentionProbMap>> slots(files.size());
  parallel_for(files.size(), jobs, [&](std::size_t i) {
    slots[i] = load_map(files[i].second, *grid, renormalize).reordered(order);
  });
  DumpTable table;
  for (std::size_t i = 0; i < files.size(); ++i) {
    table.emplace(files[i].first, std::move(*slots[i]));
  }
  return table;
}

std::vector<SearchResult> search_all(const std::vector<AttentionProbMap>& maps,
                                     const SearchParams& params,
                                     std::size_t jobs) {
  std::vector<SearchResult> results(maps.size());
  parallel_for(maps.size(), jobs,
               [&](std::size_t i) { results[i] = shrink_search(maps[i], params); });
  return results;
}

int cmd_search(const SearchCmdOpts& o, std::ostream& out) {
  SearchParams params = make_params(o.common, o.search);
  TokenOrder order = parse_token_order(o.common.order);
  std::optional<VideoGrid> grid;
  if (!o.common.grid.empty()) grid = parse_grid(o.common.grid);
  out << params_line(params, order, o.common.jobs) << '\n';

  if (!o.dumps.empty()) {
    if (!o.maps.empty() || !o.manifest.empty()) {
      throw ValidationError("--dumps cannot be combined with map files");
    }
    if (grid) validate(*grid, params.tile);
    Permutation perm = make_order(*grid, order, params.tile);
    DumpTable dumps = load_dumps(o.dumps, grid, perm, o.renormalize, o.common.jobs);
    ModelMaskSchedule schedule = schedule_search(dumps, params, o.common.jobs);
    out << "entries=" << schedule.entries.size()
        << " total_steps=" << schedule.total_steps << '\n';
    ScheduleDocument doc{{*grid, params.tile, params.block_size}, schedule};
    emit(to_json(doc).dump(2) + "\n", o.out, out);
    return kOk;
  }

  MapSet set = collect_maps(o.maps, o.manifest, grid);
  validate(*set.grid, params.tile);
  Permutation perm = make_order(*set.grid, order, params.tile);
  std::vector<AttentionProbMap> maps =
      load_maps(set, perm, o.renormalize, o.common.jobs);
  std::vector<const AttentionProbMap*> ptrs;
  for (const auto& m : maps) ptrs.push_back(&m);
  if (maps.size() > 1 && !o.merge && o.sweep_tau.empty()) {
    throw ValidationError("several maps need --merge (or use --dumps)");
  }
  MaskSetup setup{*set.grid, params.tile, params.block_size};

  if (!o.sweep_tau.empty()) {
    std::ostringstream csv;
    csv << "tau,sparsity,flop_proxy,mean_recall\n";
    for (double tau : parse_double_list(o.sweep_tau, "--sweep-tau")) {
      SearchParams p = params;
      p.tau = tau;
      validate(p);
      std::vector<HeadMaskConfig> configs;
      for (auto& r : search_all(maps, p, o.common.jobs)) {
        configs.push_back(std::move(r.config));
      }
      ConfigReport rep =
          evaluate_config(merge_prompts(configs), ptrs, params.block_size);
      csv << fmt(tau) << ',' << fmt(rep.sparsity) << ',' << fmt(rep.flop_proxy)
          << ',' << fmt(rep.mean_recall) << '\n';
    }
    emit(csv.str(), o.csv, out);
    return kOk;
  }

  std::vector<SearchResult> results = search_all(maps, params, o.common.jobs);
  std::vector<HeadMaskConfig> configs;
  json traces = json::array();
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    out << "map=" << set.maps[i].name << " recall=" << fmt_short(r.recall)
        << " sparsity=" << fmt_short(1.0 - r.cost)
        << " moves=" << r.trace.steps.size()
        << " termination=" << to_string(r.trace.termination) << '\n';
    configs.push_back(r.config);
    traces.push_back({{"map", set.maps[i].name}, {"trace", to_json(r.trace)}});
  }
  HeadMaskConfig config = merge_prompts(configs);
  ConfigReport rep = evaluate_config(config, ptrs, params.block_size);
  out << "result recall=" << fmt_short(rep.mean_recall)
      << " sparsity=" << fmt(rep.sparsity)
      << " flop_proxy=" << fmt(rep.flop_proxy) << '\n';
  if (!o.trace.empty()) {
    json doc{{"params", to_json(params)}, {"maps", traces}};
    write_file(o.trace, doc.dump(2) + "\n");
  }
  emit(to_json(ConfigDocument{setup, config}).dump(2) + "\n", o.out, out);
  return kOk;
}

// --- attend -----------------------------------------------------------------

struct AttendOpts {
  std::string q, k, v;
  std::string config;
  std::string order;
  std::size_t block_size = kDefaultBlockSize;
  std::string grid;
  bool dense = false;
  bool sparse = false;
  std::string out;
};

int cmd_attend(const AttendOpts& o, std::ostream& out) {
  AttentionInputs inputs =
      make_inputs(read_matrix(o.q), read_matrix(o.k), read_matrix(o.v));
  bool run_dense = o.dense || !o.sparse;
  bool run_sparse = o.sparse || !o.dense;

  const std::size_t n = inputs.q.rows();
  BlockMask mask = BlockMask::full(n, o.block_size);
  Permutation perm = Permutation::identity(n);
  std::string order_name = "raster";
  if (!o.config.empty()) {
    ConfigDocument doc = load_head_config(o.config);
    if (doc.setup.grid.tokens() != n) {
      throw ShapeMismatch("config grid " + to_string(doc.setup.grid) + " has " +
                          std::to_string(doc.setup.grid.tokens()) +
                          " tokens, inputs have " + std::to_string(n));
    }
    TokenOrder order = parse_token_order(o.order.empty() ? "tiled" : o.order);
    validate(doc.setup.grid, doc.setup.tile);
    perm = make_order(doc.setup.grid, order, doc.setup.tile);
    mask = rasterize(doc.config, doc.setup.grid, perm, doc.setup.block_size);
    order_name = to_string(order);
  } else if (!o.grid.empty()) {
    VideoGrid grid = parse_grid(o.grid);
    if (grid.tokens() != n) throw ShapeMismatch("--grid does not match inputs");
  }
  out << "tokens=" << n << " head_dim=" << inputs.q.cols()
      << " block_size=" << mask.block_size() << " order=" << order_name
      << " dense=" << (run_dense ? 1 : 0) << " sparse=" << (run_sparse ? 1 : 0)
      << '\n';

  // Inputs are in raster order; the mask is in `perm` order.
  AttentionInputs permuted{permute_rows(inputs.q, perm),
                           permute_rows(inputs.k, perm),
                           permute_rows(inputs.v, perm), inputs.scale};
  std::optional<Matrix> dense, sparse;
  if (run_dense) dense = dense_attention(inputs);
  if (run_sparse) {
    sparse = unpermute_rows(block_sparse_attention(permuted, mask), perm);
    out << "sparsity=" << fmt(sparsity(mask)) << " flop_proxy=" << fmt(flop_proxy(mask))
        << '\n';
  }
  if (dense && sparse) {
    out << "max_abs_diff=" << fmt(max_abs_diff(*dense, *sparse)) << '\n';
  }
  if (!o.out.empty()) write_matrix(o.out, sparse ? *sparse : *dense);
  return kOk;
}

// --- rasterize --------------------------------------------------------------

struct RasterizeOpts {
  std::string config;
  std::string order = "tiled";
  std::string out;
};

json mask_stats(const BlockMask& mask) {
  return {{"blocks", mask.blocks()},
          {"allowed", mask.allowed_count()},
          {"sparsity", sparsity(mask)},
          {"flop_proxy", flop_proxy(mask)}};
}

int cmd_rasterize(const RasterizeOpts& o, std::ostream& out) {
  TokenOrder order = parse_token_order(o.order);
  ConfigFile file = load_config(o.config);
  if (const auto* doc = std::get_if<ConfigDocument>(&file)) {
    validate(doc->setup.grid, doc->setup.tile);
    Permutation perm = make_order(doc->setup.grid, order, doc->setup.tile);
    BlockMask mask =
        rasterize(doc->config, doc->setup.grid, perm, doc->setup.block_size);
    json stats = mask_stats(mask);
    stats["order"] = to_string(order);
    out << stats.dump() << '\n';
    if (!o.out.empty()) write_mask(o.out, mask);
    return kOk;
  }
  const auto& doc = std::get<ScheduleDocument>(file);
  if (!o.out.empty()) {
    throw ValidationError("--out writes one mask; pass a single-head config");
  }
  validate(doc.setup.grid, doc.setup.tile);
  Permutation perm = make_order(doc.setup.grid, order, doc.setup.tile);
  json rows = json::array();
  for (const auto& e : doc.schedule.entries) {
    json stats = mask_stats(
        rasterize(e.config, doc.setup.grid, perm, doc.setup.block_size));
    stats["layer"] = e.layer;
    stats["head"] = e.head;
    stats["step_lo"] = e.step_lo;
    stats["step_hi"] = e.step_hi;
    rows.push_back(std::move(stats));
  }
  out << json{{"order", to_string(order)}, {"entries", rows}}.dump() << '\n';
  return kOk;
}

// --- report -----------------------------------------------------------------

struct ReportOpts {
  Common common;
  SearchOpts search;
  std::vector<std::string> maps;
  std::string manifest;
  std::vector<std::string> configs;
  bool run_search = false;
  std::string compare;
  std::string csv;
  std::string json_out;
  bool renormalize = false;
};

struct ReportRow {
  MapInput input;
  double recall = 1.0;
  double sparsity = 0.0;
  double flop_proxy = 1.0;
  double jaccard = 1.0;
  std::string spatial;
  std::string temporal;
  double topk = 0.0;
  std::vector<double> topk_compare;
  std::optional<BlockMask> mask;
};

int cmd_report(const ReportOpts& o, std::ostream& out) {
  SearchParams params = make_params(o.common, o.search);
  TokenOrder order = parse_token_order(o.common.order);
  std::optional<VideoGrid> grid;
  if (!o.common.grid.empty()) grid = parse_grid(o.common.grid);
  MapSet set = collect_maps(o.maps, o.manifest, grid);
  validate(*set.grid, params.tile);
  if (o.run_search && !o.configs.empty()) {
    throw ValidationError("--search and --configs are exclusive");
  }
  if (!o.configs.empty() && o.configs.size() != 1 &&
      o.configs.size() != set.maps.size()) {
    throw ValidationError("--configs needs one file or one per map");
  }
  std::vector<TokenOrder> compare;
  if (!o.compare.empty()) {
    for (const auto& name : split(o.compare, ',')) {
      compare.push_back(parse_token_order(name));
    }
  }
  out << "# " << params_line(params, order, o.common.jobs)
      << " search=" << (o.run_search ? 1 : 0) << " compare=" << o.compare
      << " topk_target=" << kTopkTarget << '\n';

  std::vector<ConfigDocument> docs;
  for (const auto& path : o.configs) {
    docs.push_back(load_head_config(path));
    if (docs.back().setup.grid != *set.grid) {
      throw IncompatibleGrid(path + ": config grid " +
                             to_string(docs.back().setup.grid) +
                             " differs from map grid " + to_string(*set.grid));
    }
  }

  const VideoGrid g = *set.grid;
  Permutation perm = make_order(g, order, params.tile);
  std::vector<ReportRow> rows(set.maps.size());
  parallel_for(set.maps.size(), o.common.jobs, [&](std::size_t i) {
    ReportRow& row = rows[i];
    row.input = set.maps[i];
    AttentionProbMap raster = load_map(row.input.file, g, o.renormalize);
    AttentionProbMap map = raster.reordered(perm);
    std::optional<HeadMaskConfig> config;
    std::size_t block_size = params.block_size;
    Permutation mask_perm = perm;
    if (o.run_search) {
      config = shrink_search(map, params).config;
    } else if (!docs.empty()) {
      const ConfigDocument& doc = docs.size() == 1 ? docs[0] : docs[i];
      config = doc.config;
      block_size = doc.setup.block_size;
      validate(g, doc.setup.tile);
      mask_perm = make_order(g, order, doc.setup.tile);
    }
    const AttentionProbMap& measured =
        mask_perm == perm ? map : raster.reordered(mask_perm);
    BlockMask mask = config ? rasterize(*config, g, mask_perm, block_size)
                            : BlockMask::full(g.tokens(), block_size);
    row.recall = compact_attn::recall(measured, mask);
    row.sparsity = compact_attn::sparsity(mask);
    row.flop_proxy = compact_attn::flop_proxy(mask);
    row.topk = topk_block_fraction(map, params.block_size, kTopkTarget);
    row.spatial = to_string(classify_spatial(raster));
    row.temporal = g.f > 1 ? to_string(classify_temporal(raster)) : "n/a";
    for (TokenOrder c : compare) {
      AttentionProbMap m = raster.reordered(make_order(g, c, params.tile));
      row.topk_compare.push_back(
          topk_block_fraction(m, params.block_size, kTopkTarget));
    }
    row.mask = std::move(mask);
  });

  // Mean Jaccard of each mask against every other mask with the same shape.
  double pair_sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t j = 0; j < rows.size(); ++j) {
      if (i == j || rows[i].mask->blocks() != rows[j].mask->blocks()) continue;
      double jac = jaccard(*rows[i].mask, *rows[j].mask);
      sum += jac;
      ++count;
      if (j > i) {
        pair_sum += jac;
        ++pairs;
      }
    }
    rows[i].jaccard = count > 0 ? sum / static_cast<double>(count) : 1.0;
  }
  double mean_jaccard = pairs > 0 ? pair_sum / static_cast<double>(pairs) : 1.0;

  std::ostringstream csv;
  csv << "name,layer,head,step,recall,sparsity,flop_proxy,jaccard,spatial,"
         "temporal,topk@0.95";
  for (TokenOrder c : compare) csv << ",topk@0.95_" << to_string(c);
  csv << '\n';
  json jrows = json::array();
  for (const auto& r : rows) {
    csv << r.input.name << ',' << r.input.layer << ',' << r.input.head << ','
        << r.input.step << ',' << fmt(r.recall) << ',' << fmt(r.sparsity) << ','
        << fmt(r.flop_proxy) << ',' << fmt(r.jaccard) << ',' << r.spatial << ','
        << r.temporal << ',' << fmt(r.topk);
    for (double t : r.topk_compare) csv << ',' << fmt(t);
    csv << '\n';
    json jr{{"name", r.input.name},   {"layer", r.input.layer},
            {"head", r.input.head},   {"step", r.input.step},
            {"recall", r.recall},     {"sparsity", r.sparsity},
            {"flop_proxy", r.flop_proxy}, {"jaccard", r.jaccard},
            {"spatial", r.spatial},   {"temporal", r.temporal},
            {"topk@0.95", r.topk}};
    for (std::size_t c = 0; c < compare.size(); ++c) {
      jr[std::string("topk@0.95_") + to_string(compare[c])] = r.topk_compare[c];
    }
    jrows.push_back(std::move(jr));
  }
  emit(csv.str(), o.csv, out);
  out << "pairwise_mean_jaccard=" << fmt(mean_jaccard) << '\n';
  if (!o.json_out.empty()) {
    json doc{{"params", to_json(params)},
             {"order", to_string(order)},
             {"rows", jrows},
             {"pairwise_mean_jaccard", mean_jaccard}};
    write_file(o.json_out, doc.dump(2) + "\n");
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Compact attention masks for video diffusion transformers",
               "compact-attn"};
  app.require_subcommand(1);

  SynthOpts synth;
  CLI::App* s = app.add_subcommand("synth", "generate synthetic attention maps");
  add_common(s, synth.common, true);
  s->add_option("--pattern", synth.pattern, "local, cross or global")
      ->capture_default_str();
  s->add_option("--temporal", synth.temporal, "invariant, decay or band")
      ->capture_default_str();
  s->add_option("--rate", synth.rate, "decay rate per frame")->capture_default_str();
  s->add_option("--band-center", synth.band_center)->capture_default_str();
  s->add_option("--band-width", synth.band_width)->capture_default_str();
  s->add_option("--omega", synth.omega, "window 1 half-width")->capture_default_str();
  s->add_option("--eta", synth.eta, "window 1 half-height")->capture_default_str();
  s->add_option("--omega2", synth.omega2, "window 2 half-width")->capture_default_str();
  s->add_option("--eta2", synth.eta2, "window 2 half-height")->capture_default_str();
  s->add_option("--mass", synth.mass, "in-pattern mass fraction")->capture_default_str();
  s->add_option("--noise", synth.noise, "uniform noise floor")->capture_default_str();
  s->add_option("--seed", synth.seed, "seed (default $COMPACT_ATTN_SEED or 0)");
  s->add_option("--spec", synth.spec_file, "JSON head spec");
  s->add_option("--name", synth.name, "output name stem");
  s->add_flag("--battery", synth.battery, "one map per pattern family");
  s->add_option("--variants", synth.variants, "prompt variants per spec");
  s->add_option("--jitter", synth.jitter, "variant extent jitter in tokens");
  s->add_option("--mass-jitter", synth.mass_jitter, "variant mass jitter");
  s->add_option("--qkv", synth.qkv, "also write random Q/K/V of this head dim");
  s->add_option("--out", synth.out_dir, "output directory")->capture_default_str();

  SearchCmdOpts search;
  CLI::App* se = app.add_subcommand("search", "search sparse head configs");
  add_common(se, search.common, true);
  add_search(se, search.search);
  se->add_option("maps", search.maps, "probability maps (*.probs.catn)");
  se->add_option("--manifest", search.manifest, "synth manifest listing maps");
  se->add_option("--dumps", search.dumps, "directory of l{L}_h{H}_s{S}.probs.catn");
  se->add_option("--reuse", search.search.reuse, "steps sharing one config")
      ->capture_default_str();
  se->add_option("--full-prefix", search.search.full_prefix, "dense warm-up steps")
      ->capture_default_str();
  se->add_flag("--merge", search.merge, "union the per-map configs");
  se->add_option("--sweep-tau", search.sweep_tau, "comma-separated tau values");
  se->add_option("--trace", search.trace, "write search traces as JSON");
  se->add_option("--out", search.out, "config/schedule output (default stdout)");
  se->add_option("--csv", search.csv, "sweep CSV output (default stdout)");
  se->add_flag("--renormalize", search.renormalize, "rescale map rows to sum 1");

  AttendOpts attend;
  CLI::App* at = app.add_subcommand("attend", "run dense and/or sparse attention");
  at->add_option("--q", attend.q)->required();
  at->add_option("--k", attend.k)->required();
  at->add_option("--v", attend.v)->required();
  at->add_option("--config", attend.config, "head config JSON");
  at->add_option("--order", attend.order, "token order (default tiled)");
  at->add_option("--block-size", attend.block_size, "block size without --config")
      ->capture_default_str();
  at->add_option("--grid", attend.grid, "token grid FxHxW");
  at->add_flag("--dense", attend.dense);
  at->add_flag("--sparse", attend.sparse);
  at->add_option("--out", attend.out, "output tensor");

  RasterizeOpts raster;
  CLI::App* ra = app.add_subcommand("rasterize", "rasterize a config to a block mask");
  ra->add_option("--config", raster.config)->required();
  ra->add_option("--order", raster.order)->capture_default_str();
  ra->add_option("--out", raster.out, "block mask output (*.catm)");

  ReportOpts report;
  CLI::App* re = app.add_subcommand("report", "per-head metrics as CSV/JSON");
  add_common(re, report.common, true);
  add_search(re, report.search);
  re->add_option("maps", report.maps, "probability maps (*.probs.catn)");
  re->add_option("--manifest", report.manifest, "synth manifest listing maps");
  re->add_option("--configs", report.configs, "one config, or one per map");
  re->add_flag("--search", report.run_search, "search a config per map");
  re->add_option("--compare", report.compare, "token orders, e.g. raster,tiled");
  re->add_option("--csv", report.csv, "CSV output (default stdout)");
  re->add_option("--json", report.json_out, "JSON output");
  re->add_flag("--renormalize", report.renormalize, "rescale map rows to sum 1");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  if (argv.empty()) argv.push_back("compact-attn");
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kOk : kValidationError;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, out);
    if (se->parsed()) return cmd_search(search, out);
    if (at->parsed()) return cmd_attend(attend, out);
    if (ra->parsed()) return cmd_rasterize(raster, out);
    if (re->parsed()) return cmd_report(report, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kValidationError;
  }
  return kValidationError;
}

}  // namespace compact_attn::cli
