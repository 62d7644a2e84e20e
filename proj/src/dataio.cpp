#include "nwn/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

namespace nwn::dataio {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "f32le blobs are read and written natively");

std::string_view error_code_name(DataErrorCode code) {
  switch (code) {
    case DataErrorCode::length_mismatch: return "length-mismatch";
    case DataErrorCode::unknown_dtype: return "unknown-dtype";
    case DataErrorCode::missing_band: return "missing-band";
    case DataErrorCode::dims_mismatch: return "dims-mismatch";
    case DataErrorCode::hotspot_overflow: return "hotspot-overflow";
    case DataErrorCode::invalid_params: return "invalid-params";
    case DataErrorCode::io: return "io";
    case DataErrorCode::parse: return "parse";
  }
  return "unknown";
}

namespace {

[[noreturn]] void fail(DataErrorCode code, const std::string& message) { throw DataError(code, message); }

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(DataErrorCode::io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(DataErrorCode::parse, path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(DataErrorCode::io, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) fail(DataErrorCode::io, "failed writing " + path.string());
}

// Wraps JSON access errors (missing keys, wrong types) as parse errors.
template <typename F>
auto parsing(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    fail(DataErrorCode::parse, what + ": " + e.what());
  }
}

std::size_t pixel_count(int h, int w) { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }

}  // namespace

// ---------------------------------------------------------------------------
// Granules

fs::path blob_path_for(const fs::path& header) {
  fs::path blob = header;
  blob.replace_extension(".bin");
  return blob;
}

void save_granule(const Granule& granule, const fs::path& header) {
  json bands = json::array();
  std::uint64_t offset = 0;
  const std::size_t n = pixel_count(granule.height, granule.width);
  std::vector<const Raster*> order;
  for (BandId id : kBands) {
    const Raster* r = granule.find(id);
    if (!r) fail(DataErrorCode::missing_band, "granule '" + granule.id + "' lacks " + std::string(band_name(id)));
    if (r->height != granule.height || r->width != granule.width || r->data.size() != n)
      fail(DataErrorCode::dims_mismatch, "band " + std::string(band_name(id)) + " does not match granule dims");
    const std::uint64_t bytes = n * sizeof(float);
    bands.push_back({{"band_id", band_name(id)}, {"dtype", "f32le"}, {"offset", offset}, {"byte_length", bytes}});
    offset += bytes;
    order.push_back(r);
  }
  const json head = {{"id", granule.id},         {"level", level_name(granule.level)},
                     {"height", granule.height}, {"width", granule.width},
                     {"bands", bands},           {"metadata", granule.metadata}};
  write_text(header, head.dump(1) + "\n");

  const fs::path blob = blob_path_for(header);
  std::ofstream out(blob, std::ios::binary);
  if (!out) fail(DataErrorCode::io, "cannot open " + blob.string() + " for writing");
  for (const Raster* r : order)
    out.write(reinterpret_cast<const char*>(r->data.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (!out) fail(DataErrorCode::io, "failed writing " + blob.string());
}

Granule load_granule(const fs::path& header) {
  const json head = read_json(header);
  Granule g;
  struct BandEntry {
    BandId id;
    std::uint64_t offset;
    std::uint64_t length;
  };
  std::vector<BandEntry> entries;
  parsing(header.string(), [&] {
    g.id = head.at("id").get<std::string>();
    const auto level = head.at("level").get<std::string>();
    const auto parsed = level_from_name(level);
    if (!parsed) fail(DataErrorCode::parse, header.string() + ": unknown level '" + level + "'");
    g.level = *parsed;
    g.height = head.at("height").get<int>();
    g.width = head.at("width").get<int>();
    g.metadata = head.value("metadata", json::object());
    for (const auto& b : head.at("bands")) {
      const auto name = b.at("band_id").get<std::string>();
      const auto id = band_from_name(name);
      if (!id) fail(DataErrorCode::parse, header.string() + ": unknown band '" + name + "'");
      const auto dtype = b.at("dtype").get<std::string>();
      if (dtype != "f32le") fail(DataErrorCode::unknown_dtype, header.string() + ": unsupported dtype '" + dtype + "'");
      entries.push_back({*id, b.at("offset").get<std::uint64_t>(), b.at("byte_length").get<std::uint64_t>()});
    }
    return 0;
  });
  if (g.height <= 0 || g.width <= 0) fail(DataErrorCode::parse, header.string() + ": non-positive dimensions");
  for (BandId id : kBands) {
    if (std::none_of(entries.begin(), entries.end(), [id](const BandEntry& e) { return e.id == id; }))
      fail(DataErrorCode::missing_band, header.string() + ": band " + std::string(band_name(id)) + " missing");
  }

  const fs::path blob = blob_path_for(header);
  std::ifstream in(blob, std::ios::binary);
  if (!in) fail(DataErrorCode::io, "cannot open " + blob.string());
  std::error_code ec;
  const auto blob_size = fs::file_size(blob, ec);
  if (ec) fail(DataErrorCode::io, "cannot stat " + blob.string());

  const std::size_t n = pixel_count(g.height, g.width);
  std::uint64_t declared = 0;
  for (const auto& e : entries) {
    if (e.length != n * sizeof(float))
      fail(DataErrorCode::length_mismatch, header.string() + ": band " + std::string(band_name(e.id)) + " declares " +
                                               std::to_string(e.length) + " bytes, dims need " +
                                               std::to_string(n * sizeof(float)));
    declared = std::max(declared, e.offset + e.length);
  }
  if (blob_size != declared)
    fail(DataErrorCode::length_mismatch, blob.string() + " holds " + std::to_string(blob_size) +
                                             " bytes, header declares " + std::to_string(declared));
  for (const auto& e : entries) {
    if (g.bands.count(e.id)) fail(DataErrorCode::parse, header.string() + ": band listed twice");
    Raster r(g.height, g.width);
    in.seekg(static_cast<std::streamoff>(e.offset));
    in.read(reinterpret_cast<char*>(r.data.data()), static_cast<std::streamsize>(e.length));
    if (!in) fail(DataErrorCode::io, "failed reading " + blob.string());
    for (float v : r.data) {
      if (!std::isfinite(v) || v < 0.0f)
        fail(DataErrorCode::parse, blob.string() + ": pixel values must be finite and non-negative");
    }
    g.bands.emplace(e.id, std::move(r));
  }
  return g;
}

// ---------------------------------------------------------------------------
// Labels

int LabelMask::event_count() const {
  return static_cast<int>(std::count(grid.begin(), grid.end(), std::uint8_t{1}));
}

json labels_to_json(const LabelMask& mask) {
  json grid = json::array();
  for (int r = 0; r < mask.rows; ++r) {
    json line = json::array();
    for (int c = 0; c < mask.cols; ++c) line.push_back(mask.at(r, c) ? 1 : 0);
    grid.push_back(std::move(line));
  }
  json j = {{"rows", mask.rows}, {"cols", mask.cols}, {"grid", std::move(grid)}};
  if (mask.event_pixel_counts) {
    json counts = json::array();
    for (int r = 0; r < mask.rows; ++r) {
      json line = json::array();
      for (int c = 0; c < mask.cols; ++c) line.push_back((*mask.event_pixel_counts)[static_cast<std::size_t>(r * mask.cols + c)]);
      counts.push_back(std::move(line));
    }
    j["event_pixel_counts"] = std::move(counts);
  }
  return j;
}

LabelMask labels_from_json(const json& j) {
  return parsing("labels", [&] {
    const int rows = j.at("rows").get<int>();
    const int cols = j.at("cols").get<int>();
    if (rows < 0 || cols < 0) fail(DataErrorCode::dims_mismatch, "labels: negative dimensions");
    LabelMask mask(rows, cols);
    auto read_grid = [&](const json& g, auto&& store) {
      if (!g.is_array() || static_cast<int>(g.size()) != rows)
        fail(DataErrorCode::dims_mismatch, "labels: grid row count differs from declared rows " + std::to_string(rows));
      for (int r = 0; r < rows; ++r) {
        const auto& line = g[static_cast<std::size_t>(r)];
        if (!line.is_array() || static_cast<int>(line.size()) != cols)
          fail(DataErrorCode::dims_mismatch, "labels: grid row " + std::to_string(r) + " length differs from cols " +
                                                 std::to_string(cols));
        for (int c = 0; c < cols; ++c) store(r, c, line[static_cast<std::size_t>(c)].get<int>());
      }
    };
    read_grid(j.at("grid"), [&](int r, int c, int v) {
      if (v != 0 && v != 1) fail(DataErrorCode::parse, "labels: grid entries must be 0 or 1");
      mask.grid[static_cast<std::size_t>(r * cols + c)] = static_cast<std::uint8_t>(v);
    });
    if (j.contains("event_pixel_counts")) {
      std::vector<int> counts(mask.grid.size(), 0);
      read_grid(j.at("event_pixel_counts"),
                [&](int r, int c, int v) { counts[static_cast<std::size_t>(r * cols + c)] = v; });
      mask.event_pixel_counts = std::move(counts);
    }
    return mask;
  });
}

void write_labels(const LabelMask& mask, const fs::path& path) { write_text(path, labels_to_json(mask).dump() + "\n"); }

LabelMask load_labels(const fs::path& path) {
  try {
    return labels_from_json(read_json(path));
  } catch (const DataError& e) {
    if (std::string_view(e.what()).starts_with(path.string())) throw;
    throw DataError(e.code(), path.string() + ": " + e.what());
  }
}

void check_label_dims(const LabelMask& mask, const pipeline::TileGrid& grid) {
  if (mask.rows != grid.rows || mask.cols != grid.cols)
    fail(DataErrorCode::dims_mismatch, "label mask is " + std::to_string(mask.rows) + "x" + std::to_string(mask.cols) +
                                           " but the granule tiles to " + std::to_string(grid.rows) + "x" +
                                           std::to_string(grid.cols));
}

// ---------------------------------------------------------------------------
// Synthesis

namespace {

double norm_max_for(Level level, BandId band) {
  return pipeline::defaults_for(level).band(band).norm_max;
}

// Pixel bounding box of a disk.
struct Box {
  int r0, r1, c0, c1;  // inclusive
};

Box disk_box(const Hotspot& h) {
  return {static_cast<int>(std::ceil(h.row - h.radius)), static_cast<int>(std::floor(h.row + h.radius)),
          static_cast<int>(std::ceil(h.col - h.radius)), static_cast<int>(std::floor(h.col + h.radius))};
}

template <typename F>
void for_each_disk_pixel(const Hotspot& h, F&& f) {
  const Box b = disk_box(h);
  const double r2 = h.radius * h.radius;
  for (int r = b.r0; r <= b.r1; ++r) {
    for (int c = b.c0; c <= b.c1; ++c) {
      const double dr = r - h.row;
      const double dc = c - h.col;
      if (dr * dr + dc * dc <= r2) f(r, c);
    }
  }
}

}  // namespace

void SynthParams::validate() const {
  auto bad = [](const std::string& m) { fail(DataErrorCode::invalid_params, m); };
  if (height <= 0 || width <= 0) bad("synthetic raster dimensions must be positive");
  if (tile_size <= 0 || height < tile_size || width < tile_size) bad("synthetic raster is smaller than one tile");
  if (min_event_pixels < 1) bad("min_event_pixels must be >= 1");
  if (!(b8a.std >= 0.0) || !(b12.std >= 0.0)) bad("noise std must be non-negative");
  if (!(b8a_amplitude >= 0.0) || !(b12_amplitude >= 0.0)) bad("hotspot amplitudes must be non-negative");
  const std::pair<const BandNoise*, double> bands[] = {{&b8a, b8a_amplitude}, {&b12, b12_amplitude}};
  for (std::size_t i = 0; i < 2; ++i) {
    const double limit = norm_max_for(level, kBands[i]);
    const double top = bands[i].first->mean + bands[i].second;
    if (!(bands[i].first->mean >= 0.0) || top > limit)
      bad("band " + std::string(band_name(kBands[i])) + ": mean + amplitude " + std::to_string(top) +
          " leaves [0, " + std::to_string(limit) + "]");
  }
  if (hotspots) {
    for (const auto& h : *hotspots) {
      if (!(h.radius > 0.0)) bad("hotspot radius must be positive");
      const Box b = disk_box(h);
      if (b.r0 < 0 || b.c0 < 0 || b.r1 >= height || b.c1 >= width)
        fail(DataErrorCode::hotspot_overflow, "hotspot at (" + std::to_string(h.row) + ", " + std::to_string(h.col) +
                                                  ") with radius " + std::to_string(h.radius) + " leaves the raster");
    }
    return;
  }
  if (hotspot_count < 0) bad("hotspot_count must be non-negative");
  if (!(radius_min > 0.0) || radius_max < radius_min) bad("hotspot radius range must satisfy 0 < min <= max");
  if (2 * static_cast<int>(std::ceil(radius_max)) + 1 > tile_size)
    fail(DataErrorCode::hotspot_overflow, "hotspot radius " + std::to_string(radius_max) + " does not fit in a tile");
  const int tiles = (height / tile_size) * (width / tile_size);
  if (hotspot_count > tiles)
    fail(DataErrorCode::hotspot_overflow,
         std::to_string(hotspot_count) + " hotspots exceed the " + std::to_string(tiles) + " available tiles");
}

SynthParams synth_defaults(Level level) {
  SynthParams p;
  p.level = level;
  if (level == Level::l1c) {
    // Reflectance-like values on the L1C normalization scale.
    p.b8a = {0.3, 0.01};
    p.b12 = {0.2, 0.02};
    p.b8a_amplitude = 1.5 * p.b8a.std;
    p.b12_amplitude = 5.0 * p.b12.std;
  }
  return p;
}

json synth_params_to_json(const SynthParams& p) {
  json j = {{"height", p.height},
            {"width", p.width},
            {"level", level_name(p.level)},
            {"b8a_noise", {{"mean", p.b8a.mean}, {"std", p.b8a.std}}},
            {"b12_noise", {{"mean", p.b12.mean}, {"std", p.b12.std}}},
            {"hotspot_count", p.hotspot_count},
            {"radius_min", p.radius_min},
            {"radius_max", p.radius_max},
            {"b12_amplitude", p.b12_amplitude},
            {"b8a_amplitude", p.b8a_amplitude},
            {"tile_size", p.tile_size},
            {"min_event_pixels", p.min_event_pixels},
            {"seed", p.seed}};
  if (p.hotspots) {
    json hs = json::array();
    for (const auto& h : *p.hotspots) hs.push_back({{"row", h.row}, {"col", h.col}, {"radius", h.radius}});
    j["hotspots"] = std::move(hs);
  }
  return j;
}

SynthParams synth_params_from_json(const json& j, const SynthParams& base) {
  return parsing("synth params", [&] {
    SynthParams p = base;
    if (j.contains("level")) {
      const auto name = j.at("level").get<std::string>();
      const auto level = level_from_name(name);
      if (!level) fail(DataErrorCode::parse, "unknown level '" + name + "'");
      p.level = *level;
    }
    p.height = j.value("height", p.height);
    p.width = j.value("width", p.width);
    if (j.contains("b8a_noise")) p.b8a = {j["b8a_noise"].value("mean", p.b8a.mean), j["b8a_noise"].value("std", p.b8a.std)};
    if (j.contains("b12_noise")) p.b12 = {j["b12_noise"].value("mean", p.b12.mean), j["b12_noise"].value("std", p.b12.std)};
    p.hotspot_count = j.value("hotspot_count", p.hotspot_count);
    p.radius_min = j.value("radius_min", p.radius_min);
    p.radius_max = j.value("radius_max", p.radius_max);
    p.b12_amplitude = j.value("b12_amplitude", p.b12_amplitude);
    p.b8a_amplitude = j.value("b8a_amplitude", p.b8a_amplitude);
    p.tile_size = j.value("tile_size", p.tile_size);
    p.min_event_pixels = j.value("min_event_pixels", p.min_event_pixels);
    p.seed = j.value("seed", p.seed);
    if (j.contains("hotspots")) {
      std::vector<Hotspot> hs;
      for (const auto& h : j.at("hotspots"))
        hs.push_back({h.at("row").get<double>(), h.at("col").get<double>(), h.at("radius").get<double>()});
      p.hotspots = std::move(hs);
    }
    return p;
  });
}

LabelMask labels_from_hotspots(const std::vector<Hotspot>& hotspots, int height, int width, int tile_size,
                               int min_event_pixels) {
  const int rows = height / tile_size;
  const int cols = width / tile_size;
  LabelMask mask(rows, cols);
  std::vector<int> counts(mask.grid.size(), 0);
  // A pixel covered by two disks counts once.
  std::vector<std::pair<int, int>> pixels;
  for (const auto& h : hotspots) for_each_disk_pixel(h, [&](int r, int c) { pixels.emplace_back(r, c); });
  std::sort(pixels.begin(), pixels.end());
  pixels.erase(std::unique(pixels.begin(), pixels.end()), pixels.end());
  for (const auto& [r, c] : pixels) {
    if (r < 0 || c < 0) continue;
    const int tr = r / tile_size;
    const int tc = c / tile_size;
    if (tr < rows && tc < cols) ++counts[static_cast<std::size_t>(tr * cols + tc)];
  }
  for (std::size_t k = 0; k < counts.size(); ++k) mask.grid[k] = counts[k] >= min_event_pixels ? 1 : 0;
  mask.event_pixel_counts = std::move(counts);
  return mask;
}

SynthResult synth_granule(const SynthParams& params) {
  params.validate();
  std::mt19937_64 rng(params.seed);

  std::vector<Hotspot> hotspots;
  if (params.hotspots) {
    hotspots = *params.hotspots;
  } else {
    const int rows = params.height / params.tile_size;
    const int cols = params.width / params.tile_size;
    std::vector<int> tiles(static_cast<std::size_t>(rows * cols));
    for (std::size_t i = 0; i < tiles.size(); ++i) tiles[i] = static_cast<int>(i);
    // Partial Fisher-Yates: the first hotspot_count entries are distinct tiles.
    for (int i = 0; i < params.hotspot_count; ++i) {
      std::uniform_int_distribution<int> pick(i, static_cast<int>(tiles.size()) - 1);
      std::swap(tiles[static_cast<std::size_t>(i)], tiles[static_cast<std::size_t>(pick(rng))]);
    }
    std::uniform_real_distribution<double> radius(params.radius_min, params.radius_max);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int i = 0; i < params.hotspot_count; ++i) {
      const int tile = tiles[static_cast<std::size_t>(i)];
      Hotspot h;
      h.radius = params.radius_min == params.radius_max ? params.radius_min : radius(rng);
      const double margin = std::ceil(h.radius);
      const double span = params.tile_size - 1 - 2 * margin;
      h.row = (tile / cols) * params.tile_size + margin + std::floor(unit(rng) * (span + 1));
      h.col = (tile % cols) * params.tile_size + margin + std::floor(unit(rng) * (span + 1));
      hotspots.push_back(h);
    }
  }

  Granule g;
  g.level = params.level;
  g.height = params.height;
  g.width = params.width;
  g.id = "synth-" + std::string(level_name(params.level)) + "-" + std::to_string(params.seed);
  const std::pair<BandNoise, double> specs[] = {{params.b8a, params.b8a_amplitude}, {params.b12, params.b12_amplitude}};
  for (std::size_t b = 0; b < 2; ++b) {
    const double limit = norm_max_for(params.level, kBands[b]);
    const auto& [noise, amplitude] = specs[b];
    Raster r(params.height, params.width);
    std::normal_distribution<double> draw(noise.mean, noise.std > 0.0 ? noise.std : 1.0);
    for (float& v : r.data) {
      const double x = noise.std > 0.0 ? draw(rng) : noise.mean;
      v = static_cast<float>(std::clamp(x, 0.0, limit));
    }
    // Overlapping disks raise a pixel once.
    Raster raised(params.height, params.width);
    for (const auto& h : hotspots) for_each_disk_pixel(h, [&](int y, int x) { raised.at(y, x) = 1.0f; });
    for (std::size_t k = 0; k < r.data.size(); ++k) {
      if (raised.data[k] != 0.0f) r.data[k] = static_cast<float>(std::clamp(r.data[k] + amplitude, 0.0, limit));
    }
    g.bands.emplace(kBands[b], std::move(r));
  }

  json hs = json::array();
  for (const auto& h : hotspots) hs.push_back({{"row", h.row}, {"col", h.col}, {"radius", h.radius}});
  SynthParams echo = params;
  echo.hotspots.reset();
  g.metadata = {{"generator", "nwn synth"},
                {"synth_params", synth_params_to_json(echo)},
                {"hotspots", std::move(hs)}};

  SynthResult out;
  out.labels = labels_from_hotspots(hotspots, params.height, params.width, params.tile_size, params.min_event_pixels);
  out.granule = std::move(g);
  out.hotspots = std::move(hotspots);
  return out;
}

LabelMask labels_from_metadata(const Granule& granule, int tile_size) {
  return parsing("granule '" + granule.id + "' metadata", [&] {
    std::vector<Hotspot> hs;
    for (const auto& h : granule.metadata.at("hotspots"))
      hs.push_back({h.at("row").get<double>(), h.at("col").get<double>(), h.at("radius").get<double>()});
    const int min_pixels = granule.metadata.at("synth_params").value("min_event_pixels", 9);
    return labels_from_hotspots(hs, granule.height, granule.width, tile_size, min_pixels);
  });
}

// ---------------------------------------------------------------------------
// Manifests

double Manifest::event_fraction() const {
  const long long total = event_tiles + non_event_tiles;
  return total == 0 ? 0.0 : static_cast<double>(event_tiles) / static_cast<double>(total);
}

void write_manifest(const Manifest& manifest, const fs::path& path) {
  const fs::path base = path.parent_path();
  json entries = json::array();
  for (const auto& e : manifest.entries) {
    entries.push_back({{"granule", e.granule.lexically_relative(base.empty() ? "." : base).generic_string()},
                       {"labels", e.labels.lexically_relative(base.empty() ? "." : base).generic_string()},
                       {"level", level_name(e.level)}});
  }
  const json j = {{"entries", std::move(entries)},
                  {"event_tiles", manifest.event_tiles},
                  {"non_event_tiles", manifest.non_event_tiles},
                  {"event_fraction", manifest.event_fraction()}};
  write_text(path, j.dump(1) + "\n");
}

Manifest load_manifest(const fs::path& path) {
  const json j = read_json(path);
  const fs::path base = path.parent_path();
  Manifest m;
  parsing(path.string(), [&] {
    for (const auto& e : j.at("entries")) {
      ManifestEntry entry;
      entry.granule = base / e.at("granule").get<std::string>();
      entry.labels = base / e.at("labels").get<std::string>();
      const auto level = level_from_name(e.value("level", std::string("raw")));
      if (!level) fail(DataErrorCode::parse, path.string() + ": unknown level");
      entry.level = *level;
      m.entries.push_back(std::move(entry));
    }
    m.event_tiles = j.value("event_tiles", 0LL);
    m.non_event_tiles = j.value("non_event_tiles", 0LL);
    return 0;
  });
  for (const auto& e : m.entries) {
    for (const auto& p : {e.granule, blob_path_for(e.granule), e.labels}) {
      if (!fs::exists(p)) fail(DataErrorCode::io, path.string() + " references missing file " + p.string());
    }
  }
  return m;
}

Manifest synth_dataset(const SynthParams& base, int count, double target_event_fraction, const fs::path& out_dir) {
  if (count < 0) fail(DataErrorCode::invalid_params, "granule count must be non-negative");
  if (!(target_event_fraction >= 0.0) || target_event_fraction > 1.0)
    fail(DataErrorCode::invalid_params, "event fraction must lie in [0, 1]");
  SynthParams check = base;
  check.hotspots.reset();
  check.hotspot_count = 0;
  check.validate();

  const int tiles = (base.height / base.tile_size) * (base.width / base.tile_size);
  const long long total_tiles = static_cast<long long>(tiles) * count;
  const auto target = static_cast<long long>(std::llround(target_event_fraction * static_cast<double>(total_tiles)));

  // Scatter the hotspots over granules, one tile each, capped per granule.
  std::vector<int> per_granule(static_cast<std::size_t>(count), 0);
  std::mt19937_64 rng(base.seed ^ 0x9e3779b97f4a7c15ULL);
  for (long long placed = 0; placed < target;) {
    std::uniform_int_distribution<int> pick(0, count - 1);
    int& slot = per_granule[static_cast<std::size_t>(pick(rng))];
    if (slot < tiles) {
      ++slot;
      ++placed;
    }
  }

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) fail(DataErrorCode::io, "cannot create directory " + out_dir.string());

  Manifest m;
  for (int i = 0; i < count; ++i) {
    SynthParams p = base;
    p.hotspots.reset();
    p.hotspot_count = per_granule[static_cast<std::size_t>(i)];
    p.seed = base.seed + static_cast<std::uint64_t>(i);
    SynthResult s = synth_granule(p);
    char name[32];
    std::snprintf(name, sizeof name, "g%04d", i);
    s.granule.id = name;
    const fs::path header = out_dir / (std::string(name) + ".granule.json");
    const fs::path labels = out_dir / (std::string(name) + ".labels.json");
    save_granule(s.granule, header);
    write_labels(s.labels, labels);
    m.entries.push_back({header, labels, p.level});
    const int events = s.labels.event_count();
    m.event_tiles += events;
    m.non_event_tiles += static_cast<long long>(s.labels.grid.size()) - events;
  }
  write_manifest(m, out_dir / "manifest.json");
  return m;
}

}  // namespace nwn::dataio
