// Helpers shared by the test binaries: hand-built geometry, small random
// devices, brute-force oracles and scratch directories.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nwn/netgen.hpp"

namespace nwn::testing {

inline netgen::Wire segment(int id, netgen::Point a, netgen::Point b) {
  netgen::Wire w;
  w.id = id;
  w.a = a;
  w.b = b;
  w.center = {0.5 * (a.x + b.x), 0.5 * (a.y + b.y)};
  w.length = std::hypot(b.x - a.x, b.y - a.y);
  double theta = std::atan2(b.y - a.y, b.x - a.x);
  if (theta < 0.0) theta += std::acos(-1.0);
  w.orientation = theta;
  return w;
}

inline netgen::Electrode electrode(int id, netgen::Point c, double radius, netgen::ElectrodeRole role) {
  netgen::Electrode e;
  e.id = id;
  e.center = c;
  e.radius = radius;
  e.role = role;
  return e;
}

/// Real generator at a scale that keeps the node count at or below 200.
inline netgen::GenParams small_params(std::uint64_t seed) {
  std::mt19937_64 rng(seed * 7919 + 13);
  netgen::GenParams p;
  p.wire_count = std::uniform_int_distribution<int>(20, 180)(rng);
  p.plane_width = p.plane_height = std::uniform_real_distribution<double>(40.0, 70.0)(rng);
  p.center_dist_scale = 0.5 * p.plane_width;
  p.length_mean = 14.0;
  p.length_std = 3.0;
  p.grid_n = 4;
  p.electrode_diameter = 6.0;
  p.electrode_pitch = 8.0;
  p.seed = seed;
  return p;
}

/// Dense Gaussian elimination with partial pivoting; a is n x n row-major.
inline std::vector<double> dense_solve(std::vector<double> a, std::vector<double> rhs) {
  const std::size_t n = rhs.size();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(a[i * n + k]) > std::abs(a[p * n + k])) p = i;
    if (p != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a[k * n + j], a[p * n + j]);
      std::swap(rhs[k], rhs[p]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a[i * n + k] / a[k * n + k];
      if (f == 0.0) continue;
      for (std::size_t j = k; j < n; ++j) a[i * n + j] -= f * a[k * n + j];
      rhs[i] -= f * rhs[k];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = rhs[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= a[i * n + j] * x[j];
    x[i] = s / a[i * n + i];
  }
  return x;
}

/// Node voltages from a dense nodal system: driven rows are identity, nodes
/// in components without a driven node are pinned to 0, every other row is
/// Kirchhoff's current law.
inline std::vector<double> dense_node_voltages(const netgen::DeviceGraph& g, const std::vector<double>& cond,
                                               const std::vector<double>& drive) {
  const auto n = static_cast<std::size_t>(g.node_count());
  std::vector<char> energized(static_cast<std::size_t>(g.component_count), 0);
  for (int id : g.input_node_ids) energized[static_cast<std::size_t>(g.component[id])] = 1;
  std::vector<double> a(n * n, 0.0), rhs(n, 0.0);
  std::vector<int> driven(n, -1);
  for (std::size_t k = 0; k < g.input_node_ids.size(); ++k) driven[g.input_node_ids[k]] = static_cast<int>(k);
  for (std::size_t i = 0; i < n; ++i) {
    if (driven[i] >= 0) {
      a[i * n + i] = 1.0;
      rhs[i] = drive[static_cast<std::size_t>(driven[i])];
    } else if (!energized[static_cast<std::size_t>(g.component[i])]) {
      a[i * n + i] = 1.0;
    }
  }
  for (std::size_t e = 0; e < g.junctions.size(); ++e) {
    const auto ia = static_cast<std::size_t>(g.junctions[e].node_a);
    const auto ib = static_cast<std::size_t>(g.junctions[e].node_b);
    for (auto [r, o] : {std::pair{ia, ib}, std::pair{ib, ia}}) {
      if (driven[r] >= 0 || !energized[static_cast<std::size_t>(g.component[r])]) continue;
      a[r * n + r] += cond[e];
      a[r * n + o] -= cond[e];
    }
  }
  return dense_solve(std::move(a), std::move(rhs));
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("nwn-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace nwn::testing
