// Raster and granule value types shared by the detection pipeline and the
// dataset I/O layer.
#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace nwn {

/// Row-major 2D array of 32-bit reals.
struct Raster {
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Raster() = default;
  Raster(int h, int w, float fill = 0.0f)
      : height(h), width(w), data(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill) {
    if (h < 0 || w < 0) throw std::invalid_argument("raster dimensions must be non-negative");
  }

  float& at(int r, int c) { return data[index(r, c)]; }
  float at(int r, int c) const { return data[index(r, c)]; }
  std::size_t size() const { return data.size(); }
  bool operator==(const Raster&) const = default;

 private:
  std::size_t index(int r, int c) const {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(width) + static_cast<std::size_t>(c);
  }
};

enum class BandId { b8a, b12 };
inline constexpr BandId kBands[] = {BandId::b8a, BandId::b12};

std::string_view band_name(BandId band);
/// Accepts "B8A" / "B12"; nullopt otherwise.
std::optional<BandId> band_from_name(std::string_view name);

enum class Level { raw, l1c };
std::string_view level_name(Level level);
std::optional<Level> level_from_name(std::string_view name);

/// One acquisition: raw-unit rasters per band plus free-form metadata.
struct Granule {
  std::string id;
  Level level = Level::raw;
  int height = 0;
  int width = 0;
  std::map<BandId, Raster> bands;
  nlohmann::json metadata = nlohmann::json::object();

  /// nullptr when the band is absent.
  const Raster* find(BandId band) const {
    auto it = bands.find(band);
    return it == bands.end() ? nullptr : &it->second;
  }
};

}  // namespace nwn
