// Two-band detection flow: normalize each band, cut 128x128 tiles, max-pool
// each tile to 8x8, drive one device per band with the pooled values, append
// the readout to the pooled input, and threshold the spanning-norm distance
// between the two band features.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "nwn/dynamics.hpp"
#include "nwn/granule.hpp"
#include "nwn/netgen.hpp"

namespace nwn::pipeline {

class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BandConfig {
  BandId band = BandId::b8a;
  double norm_max = 3000.0;  // raw units
};

enum class PartialTilePolicy { drop, pad_reflect };

struct PipelineConfig {
  int tile_size = 128;
  int pool_size = 16;
  int pool_stride = 16;
  double threshold = 1.68;
  std::array<BandConfig, 2> bands{{{BandId::b8a, 3000.0}, {BandId::b12, 3000.0}}};
  PartialTilePolicy partial_tile_policy = PartialTilePolicy::drop;

  void validate() const;
  const BandConfig& band(BandId id) const;
  /// Pooled cells per tile side.
  int pooled_side() const { return (tile_size - pool_size) / pool_stride + 1; }
};

/// Level-specific constants: raw uses 3000 for both bands and threshold
/// 1.68; L1C uses 4 (B8A), 2 (B12) and threshold 0.92.
PipelineConfig defaults_for(Level level);

nlohmann::json config_to_json(const PipelineConfig& c);
/// Missing keys keep the values of `base`.
PipelineConfig config_from_json(const nlohmann::json& j, const PipelineConfig& base = {});

/// 1.2 * clip(x, 0, norm_max) / norm_max - 0.4.
double normalize_value(double x, double norm_max);
Raster normalize_band(const Raster& pixels, double norm_max);

struct TileGrid {
  int rows = 0;
  int cols = 0;
  int count() const { return rows * cols; }
};

/// Tile counts for a raster. Drop floors both dimensions; pad-reflect rounds
/// up. Throws if the raster is smaller than one tile.
TileGrid tile_grid(int height, int width, const PipelineConfig& config);

struct Patch {
  int row = 0;
  int col = 0;
  Raster pixels;
};

/// Copies the tile at (row, col). Under pad-reflect, pixels past the edge
/// mirror the raster without repeating the border pixel.
Raster extract_tile(const Raster& band, int row, int col, const PipelineConfig& config);
/// All tiles in row-major order.
std::vector<Patch> tile_granule(const Raster& band, const PipelineConfig& config);

/// Non-overlapping (or strided) window maxima. Requires
/// (side - pool_size) to be a multiple of stride in both dimensions.
Raster max_pool(const Raster& patch, int pool_size, int stride);
/// Pools tile (row, col) of `band` straight into `out` (row-major), without
/// materializing the tile.
void pool_tile(const Raster& band, int row, int col, const PipelineConfig& config,
               std::span<double> out);

/// range(x - y) = max(x - y) - min(x - y).
double span_norm(std::span<const double> x, std::span<const double> y);

/// concat(pooled, readout) for one band, from a fresh per-tile device run.
std::vector<double> extract_features(const netgen::DeviceGraph& graph, std::span<const double> pooled,
                                     const dynamics::DynParams& params);
std::vector<double> extract_features(dynamics::DeviceSimulator& sim, std::span<const double> pooled);

struct TileFeature {
  int row = 0;
  int col = 0;
  std::array<std::vector<double>, 2> pooled;   // per band, B8A then B12
  std::array<std::vector<double>, 2> feature;  // pooled followed by readout
  double distance = 0.0;
  bool predicted = false;
};

struct EventMap {
  std::string granule_id;
  int rows = 0;
  int cols = 0;
  double threshold = 0.0;
  std::vector<double> distance;  // row-major
  std::vector<std::uint8_t> predicted;
  nlohmann::json config;  // resolved run configuration, echoed verbatim

  double distance_at(int r, int c) const { return distance[static_cast<std::size_t>(r * cols + c)]; }
  bool predicted_at(int r, int c) const { return predicted[static_cast<std::size_t>(r * cols + c)] != 0; }
  /// Re-thresholds the stored distances (strict >).
  void apply_threshold(double t);
};

nlohmann::json event_map_to_json(const EventMap& map);
EventMap event_map_from_json(const nlohmann::json& j);
/// Stable textual form (used for byte-identity checks and files).
std::string serialize_event_map(const EventMap& map);
void write_event_map(const EventMap& map, const std::filesystem::path& path);
EventMap read_event_map(const std::filesystem::path& path);
/// rows*cols little-endian f64 distances, row-major.
void write_distance_blob(const EventMap& map, const std::filesystem::path& path);

struct Detection {
  EventMap map;
  std::vector<TileFeature> tiles;  // row-major; empty unless requested
};

/// Runs the two-band flow over granules with a fixed device. Holds one
/// simulator per worker so repeated calls reuse factorizations and buffers.
///
/// Under per-tile reset every (tile, band) job starts from a fresh junction
/// state, so results do not depend on the worker count or on job order.
/// Under persistent reset each band keeps its own state across tiles in
/// row-major order, starting from zero at every granule; the two bands may
/// still run concurrently.
class Detector {
 public:
  Detector(const netgen::DeviceGraph& graph, dynamics::DynParams dyn, PipelineConfig config,
           int workers = 1, dynamics::SimulatorOptions options = {});
  ~Detector();
  Detector(const Detector&) = delete;
  Detector& operator=(const Detector&) = delete;

  Detection detect(const Granule& granule, bool keep_tiles = false);
  const PipelineConfig& config() const { return config_; }
  int workers() const { return workers_; }

 private:
  void run_jobs(std::size_t count, const std::function<void(int worker, std::size_t job)>& fn);

  const netgen::DeviceGraph* graph_;
  dynamics::DynParams dyn_;
  PipelineConfig config_;
  int workers_;
  std::vector<std::unique_ptr<dynamics::DeviceSimulator>> sims_;
};

/// One-shot detection through a temporary Detector.
Detection detect_granule(const Granule& granule, const netgen::DeviceGraph& graph,
                         const dynamics::DynParams& dyn, const PipelineConfig& config,
                         int workers = 1, bool keep_tiles = false);

}  // namespace nwn::pipeline
