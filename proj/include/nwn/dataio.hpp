// Portable dataset files and the synthetic granule generator.
//
// A granule is `<name>.granule.json` (header) next to `<name>.granule.bin`
// (little-endian f32, row-major, bands concatenated in header order). Labels
// live in `<name>.labels.json`; a directory of pairs is indexed by
// `manifest.json`.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "nwn/granule.hpp"
#include "nwn/pipeline.hpp"

namespace nwn::dataio {

enum class DataErrorCode {
  length_mismatch,
  unknown_dtype,
  missing_band,
  dims_mismatch,
  hotspot_overflow,
  invalid_params,
  io,
  parse,
};

std::string_view error_code_name(DataErrorCode code);

class DataError : public std::runtime_error {
 public:
  DataError(DataErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  DataErrorCode code() const { return code_; }

 private:
  DataErrorCode code_;
};

/// `dir/name.granule.json` -> `dir/name.granule.bin`.
std::filesystem::path blob_path_for(const std::filesystem::path& header);

/// Writes header and blob. The granule must hold B8A and B12 with the
/// declared dimensions.
void save_granule(const Granule& granule, const std::filesystem::path& header);
Granule load_granule(const std::filesystem::path& header);

/// Per-tile ground truth.
struct LabelMask {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> grid;  // row-major, 1 = event
  std::optional<std::vector<int>> event_pixel_counts;

  LabelMask() = default;
  LabelMask(int r, int c) : rows(r), cols(c), grid(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), 0) {}
  bool at(int r, int c) const { return grid[static_cast<std::size_t>(r * cols + c)] != 0; }
  int event_count() const;
  bool operator==(const LabelMask&) const = default;
};

nlohmann::json labels_to_json(const LabelMask& mask);
LabelMask labels_from_json(const nlohmann::json& j);
void write_labels(const LabelMask& mask, const std::filesystem::path& path);
LabelMask load_labels(const std::filesystem::path& path);
/// Throws dims_mismatch unless the mask matches the tiling of a granule.
void check_label_dims(const LabelMask& mask, const pipeline::TileGrid& grid);

/// Filled disk: pixel (r, c) belongs to it iff (r - row)^2 + (c - col)^2 <=
/// radius^2, with pixel centres at integer coordinates.
struct Hotspot {
  double row = 0.0;
  double col = 0.0;
  double radius = 0.0;
};

struct BandNoise {
  double mean = 0.0;
  double std = 0.0;
};

struct SynthParams {
  int height = 1152;
  int width = 1296;
  Level level = Level::raw;
  BandNoise b8a{1500.0, 50.0};
  BandNoise b12{1000.0, 100.0};
  int hotspot_count = 0;
  double radius_min = 2.0;  // px
  double radius_max = 6.0;  // px
  double b12_amplitude = 500.0;  // raw units added inside a hotspot
  double b8a_amplitude = 75.0;
  int tile_size = 128;  // labelling grid
  int min_event_pixels = 9;
  /// Explicit geometry; when set, hotspot_count and random placement are
  /// ignored.
  std::optional<std::vector<Hotspot>> hotspots;
  std::uint64_t seed = 0;

  /// Throws DataError(invalid_params) or DataError(hotspot_overflow).
  void validate() const;
};

/// Noise and amplitude defaults scaled to the level's normalization range.
SynthParams synth_defaults(Level level);

nlohmann::json synth_params_to_json(const SynthParams& p);
SynthParams synth_params_from_json(const nlohmann::json& j, const SynthParams& base = {});

/// Drop-policy label grid for hotspots: a tile is an event iff at least
/// min_event_pixels disk pixels fall inside it.
LabelMask labels_from_hotspots(const std::vector<Hotspot>& hotspots, int height, int width, int tile_size,
                               int min_event_pixels);

struct SynthResult {
  Granule granule;
  LabelMask labels;
  std::vector<Hotspot> hotspots;
};

/// Clipped Gaussian background per band plus flat disks raising B12 by
/// b12_amplitude and B8A by b8a_amplitude. Random hotspots sit wholly
/// inside distinct tiles. Geometry is stored in the granule metadata.
SynthResult synth_granule(const SynthParams& params);

/// Re-derives the label mask from a synthetic granule's stored geometry.
LabelMask labels_from_metadata(const Granule& granule, int tile_size);

struct ManifestEntry {
  std::filesystem::path granule;  // header path
  std::filesystem::path labels;
  Level level = Level::raw;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  long long event_tiles = 0;
  long long non_event_tiles = 0;
  double event_fraction() const;
};

/// Paths are stored relative to the manifest's directory.
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
/// Resolves paths against the manifest's directory and checks they exist.
Manifest load_manifest(const std::filesystem::path& path);

/// Writes `count` granule/label pairs plus manifest.json into out_dir.
/// Exactly round(target_event_fraction * count * tiles_per_granule) hotspots
/// are spread over the granules; granule i uses seed base.seed + i.
Manifest synth_dataset(const SynthParams& base, int count, double target_event_fraction,
                       const std::filesystem::path& out_dir);

}  // namespace nwn::dataio
