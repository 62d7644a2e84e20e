#include "nwn/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

namespace nwn {

std::string_view band_name(BandId band) { return band == BandId::b8a ? "B8A" : "B12"; }

std::optional<BandId> band_from_name(std::string_view name) {
  if (name == "B8A") return BandId::b8a;
  if (name == "B12") return BandId::b12;
  return std::nullopt;
}

std::string_view level_name(Level level) { return level == Level::raw ? "raw" : "l1c"; }

std::optional<Level> level_from_name(std::string_view name) {
  if (name == "raw") return Level::raw;
  if (name == "l1c") return Level::l1c;
  return std::nullopt;
}

}  // namespace nwn

namespace nwn::pipeline {

namespace {

std::size_t band_slot(BandId id) { return id == BandId::b8a ? 0 : 1; }

const char* policy_name(PartialTilePolicy p) {
  return p == PartialTilePolicy::drop ? "drop" : "pad-reflect";
}

int reflect(int i, int n) {
  // Tiles never start past the edge, and a raster is at least one tile
  // wide, so one reflection is enough.
  return i < n ? i : 2 * (n - 1) - i;
}

}  // namespace

void PipelineConfig::validate() const {
  if (tile_size <= 0 || pool_size <= 0 || pool_stride <= 0)
    throw PipelineError("tile_size, pool_size and pool_stride must be positive");
  if (pool_size > tile_size) throw PipelineError("pool_size exceeds tile_size");
  if (tile_size % pool_stride != 0 || (tile_size - pool_size) % pool_stride != 0)
    throw PipelineError("tile_size " + std::to_string(tile_size) + " is not divisible by pool_stride " +
                        std::to_string(pool_stride));
  if (!(threshold >= 0.0) || !std::isfinite(threshold)) throw PipelineError("threshold must be >= 0");
  if (bands[0].band == bands[1].band) throw PipelineError("band configs must cover B8A and B12");
  for (const auto& b : bands) {
    if (!(b.norm_max > 0.0) || !std::isfinite(b.norm_max))
      throw PipelineError("norm_max for " + std::string(band_name(b.band)) + " must be positive");
  }
}

const BandConfig& PipelineConfig::band(BandId id) const {
  for (const auto& b : bands) {
    if (b.band == id) return b;
  }
  throw PipelineError("no config for band " + std::string(band_name(id)));
}

PipelineConfig defaults_for(Level level) {
  PipelineConfig c;
  if (level == Level::l1c) {
    c.threshold = 0.92;
    c.bands = {{{BandId::b8a, 4.0}, {BandId::b12, 2.0}}};
  }
  return c;
}

nlohmann::json config_to_json(const PipelineConfig& c) {
  nlohmann::json bands = nlohmann::json::array();
  for (const auto& b : c.bands) bands.push_back({{"band_id", band_name(b.band)}, {"norm_max", b.norm_max}});
  return {{"tile_size", c.tile_size},
          {"pool_size", c.pool_size},
          {"pool_stride", c.pool_stride},
          {"threshold", c.threshold},
          {"band_configs", bands},
          {"partial_tile_policy", policy_name(c.partial_tile_policy)}};
}

PipelineConfig config_from_json(const nlohmann::json& j, const PipelineConfig& base) {
  PipelineConfig c = base;
  c.tile_size = j.value("tile_size", c.tile_size);
  c.pool_size = j.value("pool_size", c.pool_size);
  c.pool_stride = j.value("pool_stride", c.pool_stride);
  c.threshold = j.value("threshold", c.threshold);
  if (j.contains("band_configs")) {
    const auto& arr = j.at("band_configs");
    for (const auto& entry : arr) {
      const auto name = entry.at("band_id").get<std::string>();
      const auto id = band_from_name(name);
      if (!id) throw PipelineError("unknown band '" + name + "'");
      c.bands[band_slot(*id)] = {*id, entry.at("norm_max").get<double>()};
    }
  }
  if (j.contains("partial_tile_policy")) {
    const auto name = j.at("partial_tile_policy").get<std::string>();
    if (name == "drop") {
      c.partial_tile_policy = PartialTilePolicy::drop;
    } else if (name == "pad-reflect") {
      c.partial_tile_policy = PartialTilePolicy::pad_reflect;
    } else {
      throw PipelineError("unknown partial_tile_policy '" + name + "'");
    }
  }
  return c;
}

double normalize_value(double x, double norm_max) {
  return 1.2 * (std::clamp(x, 0.0, norm_max) / norm_max) - 0.4;
}

Raster normalize_band(const Raster& pixels, double norm_max) {
  if (!(norm_max > 0.0)) throw PipelineError("norm_max must be positive");
  Raster out(pixels.height, pixels.width);
  std::transform(pixels.data.begin(), pixels.data.end(), out.data.begin(), [norm_max](float x) {
    return static_cast<float>(normalize_value(x, norm_max));
  });
  return out;
}

TileGrid tile_grid(int height, int width, const PipelineConfig& config) {
  const int t = config.tile_size;
  if (height < t || width < t)
    throw PipelineError("raster " + std::to_string(height) + "x" + std::to_string(width) +
                        " is smaller than one " + std::to_string(t) + "-pixel tile");
  if (config.partial_tile_policy == PartialTilePolicy::drop) return {height / t, width / t};
  return {(height + t - 1) / t, (width + t - 1) / t};
}

Raster extract_tile(const Raster& band, int row, int col, const PipelineConfig& config) {
  const TileGrid grid = tile_grid(band.height, band.width, config);
  if (row < 0 || col < 0 || row >= grid.rows || col >= grid.cols)
    throw PipelineError("tile index out of range");
  const int t = config.tile_size;
  Raster out(t, t);
  for (int r = 0; r < t; ++r) {
    const int sr = reflect(row * t + r, band.height);
    for (int c = 0; c < t; ++c) out.at(r, c) = band.at(sr, reflect(col * t + c, band.width));
  }
  return out;
}

std::vector<Patch> tile_granule(const Raster& band, const PipelineConfig& config) {
  const TileGrid grid = tile_grid(band.height, band.width, config);
  std::vector<Patch> patches;
  patches.reserve(static_cast<std::size_t>(grid.count()));
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) patches.push_back({r, c, extract_tile(band, r, c, config)});
  }
  return patches;
}

Raster max_pool(const Raster& patch, int pool_size, int stride) {
  if (pool_size <= 0 || stride <= 0) throw PipelineError("pool size and stride must be positive");
  for (int side : {patch.height, patch.width}) {
    if (side < pool_size || (side - pool_size) % stride != 0)
      throw PipelineError("patch side " + std::to_string(side) + " does not fit pool " +
                          std::to_string(pool_size) + " with stride " + std::to_string(stride));
  }
  Raster out((patch.height - pool_size) / stride + 1, (patch.width - pool_size) / stride + 1);
  for (int i = 0; i < out.height; ++i) {
    for (int j = 0; j < out.width; ++j) {
      float m = -std::numeric_limits<float>::infinity();
      for (int r = i * stride; r < i * stride + pool_size; ++r) {
        for (int c = j * stride; c < j * stride + pool_size; ++c) m = std::max(m, patch.at(r, c));
      }
      out.at(i, j) = m;
    }
  }
  return out;
}

void pool_tile(const Raster& band, int row, int col, const PipelineConfig& config, std::span<double> out) {
  const int side = config.pooled_side();
  if (out.size() != static_cast<std::size_t>(side * side))
    throw PipelineError("pooled buffer has " + std::to_string(out.size()) + " cells, expected " +
                        std::to_string(side * side));
  const int t = config.tile_size;
  const int r0 = row * t;
  const int c0 = col * t;
  const bool inside = r0 + t <= band.height && c0 + t <= band.width;
  for (int i = 0; i < side; ++i) {
    for (int j = 0; j < side; ++j) {
      float m = -std::numeric_limits<float>::infinity();
      for (int r = i * config.pool_stride; r < i * config.pool_stride + config.pool_size; ++r) {
        if (inside) {
          const float* line = &band.data[static_cast<std::size_t>(r0 + r) * static_cast<std::size_t>(band.width) +
                                         static_cast<std::size_t>(c0)];
          for (int c = j * config.pool_stride; c < j * config.pool_stride + config.pool_size; ++c)
            m = std::max(m, line[c]);
        } else {
          const int sr = reflect(r0 + r, band.height);
          for (int c = j * config.pool_stride; c < j * config.pool_stride + config.pool_size; ++c)
            m = std::max(m, band.at(sr, reflect(c0 + c, band.width)));
        }
      }
      out[static_cast<std::size_t>(i * side + j)] = m;
    }
  }
}

double span_norm(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw PipelineError("span_norm needs equal lengths, got " + std::to_string(x.size()) + " and " +
                        std::to_string(y.size()));
  if (x.empty()) return 0.0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  return hi - lo;
}

std::vector<double> extract_features(dynamics::DeviceSimulator& sim, std::span<const double> pooled) {
  const auto readout = sim.run_tile(pooled);
  std::vector<double> feature(pooled.begin(), pooled.end());
  feature.insert(feature.end(), readout.begin(), readout.end());
  return feature;
}

std::vector<double> extract_features(const netgen::DeviceGraph& graph, std::span<const double> pooled,
                                     const dynamics::DynParams& params) {
  dynamics::DeviceSimulator sim(graph, params, {.mode = dynamics::SolveMode::direct});
  return extract_features(sim, pooled);
}

// ---------------------------------------------------------------------------
// EventMap

void EventMap::apply_threshold(double t) {
  threshold = t;
  predicted.resize(distance.size());
  for (std::size_t i = 0; i < distance.size(); ++i) predicted[i] = distance[i] > t ? 1 : 0;
}

nlohmann::json event_map_to_json(const EventMap& map) {
  nlohmann::json tiles = nlohmann::json::array();
  for (int r = 0; r < map.rows; ++r) {
    for (int c = 0; c < map.cols; ++c) {
      tiles.push_back({{"row", r},
                       {"col", c},
                       {"distance", map.distance_at(r, c)},
                       {"predicted", map.predicted_at(r, c) ? "event" : "non-event"}});
    }
  }
  return {{"granule_id", map.granule_id},
          {"config", map.config},
          {"threshold", map.threshold},
          {"rows", map.rows},
          {"cols", map.cols},
          {"tiles", std::move(tiles)}};
}

EventMap event_map_from_json(const nlohmann::json& j) {
  EventMap map;
  map.granule_id = j.at("granule_id").get<std::string>();
  map.config = j.value("config", nlohmann::json::object());
  map.threshold = j.at("threshold").get<double>();
  map.rows = j.at("rows").get<int>();
  map.cols = j.at("cols").get<int>();
  if (map.rows < 0 || map.cols < 0) throw PipelineError("event map has negative dimensions");
  const auto n = static_cast<std::size_t>(map.rows) * static_cast<std::size_t>(map.cols);
  map.distance.assign(n, 0.0);
  map.predicted.assign(n, 0);
  std::vector<char> seen(n, 0);
  const auto& tiles = j.at("tiles");
  if (tiles.size() != n)
    throw PipelineError("event map lists " + std::to_string(tiles.size()) + " tiles for a " +
                        std::to_string(map.rows) + "x" + std::to_string(map.cols) + " grid");
  for (const auto& t : tiles) {
    const int r = t.at("row").get<int>();
    const int c = t.at("col").get<int>();
    if (r < 0 || c < 0 || r >= map.rows || c >= map.cols) throw PipelineError("event map tile out of range");
    const auto k = static_cast<std::size_t>(r * map.cols + c);
    if (seen[k]++) throw PipelineError("event map lists tile twice");
    map.distance[k] = t.at("distance").get<double>();
    const auto label = t.at("predicted").get<std::string>();
    if (label != "event" && label != "non-event") throw PipelineError("unknown tile label '" + label + "'");
    map.predicted[k] = label == "event" ? 1 : 0;
  }
  return map;
}

std::string serialize_event_map(const EventMap& map) { return event_map_to_json(map).dump(1) + "\n"; }

void write_event_map(const EventMap& map, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PipelineError("cannot open " + path.string() + " for writing");
  out << serialize_event_map(map);
  if (!out) throw PipelineError("failed writing " + path.string());
}

EventMap read_event_map(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PipelineError("cannot open " + path.string());
  try {
    return event_map_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw PipelineError(path.string() + ": " + e.what());
  }
}

void write_distance_blob(const EventMap& map, const std::filesystem::path& path) {
  static_assert(std::endian::native == std::endian::little, "blob writer assumes a little-endian host");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PipelineError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(map.distance.data()),
            static_cast<std::streamsize>(map.distance.size() * sizeof(double)));
  if (!out) throw PipelineError("failed writing " + path.string());
}

// ---------------------------------------------------------------------------
// Detector

Detector::Detector(const netgen::DeviceGraph& graph, dynamics::DynParams dyn, PipelineConfig config,
                   int workers, dynamics::SimulatorOptions options)
    : graph_(&graph), dyn_(dyn), config_(config), workers_(workers) {
  config_.validate();
  dyn_.validate();
  if (workers_ < 1) throw PipelineError("workers must be >= 1");
  const int side = config_.pooled_side();
  if (static_cast<std::size_t>(side * side) != graph.input_node_ids.size())
    throw PipelineError("pooled grid has " + std::to_string(side * side) + " cells but the device has " +
                        std::to_string(graph.input_node_ids.size()) + " input electrodes");
  // Persistent state needs one simulator per band; more would sit idle.
  const int sims = dyn_.reset_policy == dynamics::ResetPolicy::persistent ? 2 : workers_;
  sims_.push_back(std::make_unique<dynamics::DeviceSimulator>(graph, dyn_, options));
  for (int i = 1; i < sims; ++i) sims_.push_back(std::make_unique<dynamics::DeviceSimulator>(*sims_[0]));
}

Detector::~Detector() = default;

void Detector::run_jobs(std::size_t count, const std::function<void(int, std::size_t)>& fn) {
  const int threads = std::min<int>(static_cast<int>(sims_.size()), static_cast<int>(count));
  if (threads <= 1) {
    for (std::size_t job = 0; job < count; ++job) fn(0, job);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto body = [&](int worker) {
    try {
      for (std::size_t job = next++; job < count; job = next++) fn(worker, job);
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next = count;
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(static_cast<std::size_t>(threads - 1));
  for (int w = 1; w < threads; ++w) pool.emplace_back(body, w);
  body(0);
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

Detection Detector::detect(const Granule& granule, bool keep_tiles) {
  std::array<Raster, 2> normalized;
  for (BandId id : kBands) {
    const Raster* raw = granule.find(id);
    if (!raw) throw PipelineError("granule '" + granule.id + "' is missing band " + std::string(band_name(id)));
    normalized[band_slot(id)] = normalize_band(*raw, config_.band(id).norm_max);
  }
  if (normalized[0].height != normalized[1].height || normalized[0].width != normalized[1].width)
    throw PipelineError("granule '" + granule.id + "' has bands of different size");

  const TileGrid grid = tile_grid(normalized[0].height, normalized[0].width, config_);
  const auto tiles = static_cast<std::size_t>(grid.count());
  const std::size_t inputs = graph_->input_node_ids.size();
  const std::size_t width = inputs + graph_->readout_node_ids.size();
  // features[band][tile * width ...]
  std::array<std::vector<double>, 2> features;
  for (auto& f : features) f.assign(tiles * width, 0.0);

  auto run_one = [&](int worker, std::size_t band, std::size_t tile) {
    const int r = static_cast<int>(tile) / grid.cols;
    const int c = static_cast<int>(tile) % grid.cols;
    std::span<double> slot(features[band].data() + tile * width, width);
    pool_tile(normalized[band], r, c, config_, slot.first(inputs));
    const auto readout = sims_[static_cast<std::size_t>(worker)]->run_tile(slot.first(inputs));
    std::copy(readout.begin(), readout.end(), slot.begin() + static_cast<std::ptrdiff_t>(inputs));
  };

  if (dyn_.reset_policy == dynamics::ResetPolicy::persistent) {
    for (auto& sim : sims_) sim->reset_state();
    run_jobs(2, [&](int, std::size_t band) {
      for (std::size_t tile = 0; tile < tiles; ++tile) run_one(static_cast<int>(band), band, tile);
    });
  } else {
    // Band-major job order keeps both bands of a tile in flight together.
    run_jobs(2 * tiles, [&](int worker, std::size_t job) { run_one(worker, job % 2, job / 2); });
  }

  Detection out;
  EventMap& map = out.map;
  map.granule_id = granule.id;
  map.rows = grid.rows;
  map.cols = grid.cols;
  map.distance.resize(tiles);
  for (std::size_t t = 0; t < tiles; ++t) {
    map.distance[t] = span_norm(std::span<const double>(features[0].data() + t * width, width),
                                std::span<const double>(features[1].data() + t * width, width));
  }
  map.apply_threshold(config_.threshold);

  if (keep_tiles) {
    out.tiles.resize(tiles);
    for (std::size_t t = 0; t < tiles; ++t) {
      TileFeature& tf = out.tiles[t];
      tf.row = static_cast<int>(t) / grid.cols;
      tf.col = static_cast<int>(t) % grid.cols;
      for (std::size_t b = 0; b < 2; ++b) {
        const double* base = features[b].data() + t * width;
        tf.feature[b].assign(base, base + width);
        tf.pooled[b].assign(base, base + inputs);
      }
      tf.distance = map.distance[t];
      tf.predicted = map.predicted[t] != 0;
    }
  }
  return out;
}

Detection detect_granule(const Granule& granule, const netgen::DeviceGraph& graph,
                         const dynamics::DynParams& dyn, const PipelineConfig& config, int workers,
                         bool keep_tiles) {
  Detector detector(graph, dyn, config, workers);
  return detector.detect(granule, keep_tiles);
}

}  // namespace nwn::pipeline
