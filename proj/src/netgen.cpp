#include "nwn/netgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <utility>

#include <nlohmann/json.hpp>

namespace nwn::netgen {

namespace {

Point operator+(Point p, Point q) { return {p.x + q.x, p.y + q.y}; }
Point operator-(Point p, Point q) { return {p.x - q.x, p.y - q.y}; }
Point operator*(double s, Point p) { return {s * p.x, s * p.y}; }
double dot(Point p, Point q) { return p.x * q.x + p.y * q.y; }
double cross(Point p, Point q) { return p.x * q.y - p.y * q.x; }

// Generalized normal with density proportional to exp(-(|x - mu| / scale)^beta).
// |x - mu| / scale is distributed as Gamma(1/beta, 1)^(1/beta).
class GeneralizedNormal {
 public:
  GeneralizedNormal(double mu, double scale, double beta)
      : mu_(mu), scale_(scale), inv_beta_(1.0 / beta), gamma_(1.0 / beta, 1.0) {}

  template <class Rng>
  double operator()(Rng& rng) {
    const double magnitude = std::pow(gamma_(rng), inv_beta_) * scale_;
    return coin_(rng) ? mu_ + magnitude : mu_ - magnitude;
  }

 private:
  double mu_;
  double scale_;
  double inv_beta_;
  std::gamma_distribution<double> gamma_;
  std::bernoulli_distribution coin_{0.5};
};

// Contact point of two segments, if any. Collinear overlaps report the
// midpoint of the shared interval.
std::optional<Point> segment_contact(Point p, Point p2, Point q, Point q2) {
  const Point r = p2 - p;
  const Point s = q2 - q;
  const Point qp = q - p;
  const double denom = cross(r, s);
  const double rr = dot(r, r);
  const double scale = std::sqrt(rr * dot(s, s));

  if (std::abs(denom) > 1e-14 * scale) {
    const double t = cross(qp, s) / denom;
    const double u = cross(qp, r) / denom;
    if (t < 0.0 || t > 1.0 || u < 0.0 || u > 1.0) return std::nullopt;
    return p + t * r;
  }
  // Parallel. Only collinear pairs can touch.
  if (std::abs(cross(qp, r)) > 1e-12 * rr) return std::nullopt;
  double t0 = dot(qp, r) / rr;
  double t1 = dot(q2 - p, r) / rr;
  if (t0 > t1) std::swap(t0, t1);
  const double lo = std::max(0.0, t0);
  const double hi = std::min(1.0, t1);
  if (lo > hi) return std::nullopt;
  return p + (0.5 * (lo + hi)) * r;
}

// Midpoint of the chord a segment cuts through a disk, if they overlap.
std::optional<Point> segment_disk_contact(Point a, Point b, Point c, double radius) {
  const Point d = b - a;
  const Point f = a - c;
  const double dd = dot(d, d);
  // |f + t d|^2 = radius^2
  const double half_b = dot(f, d);
  const double cc = dot(f, f) - radius * radius;
  const double disc = half_b * half_b - dd * cc;
  if (disc < 0.0) return std::nullopt;
  const double root = std::sqrt(disc);
  const double lo = std::max(0.0, (-half_b - root) / dd);
  const double hi = std::min(1.0, (-half_b + root) / dd);
  if (lo > hi) return std::nullopt;
  return a + (0.5 * (lo + hi)) * d;
}

// Uniform bucket grid over the bounding box of all wires.
class BucketGrid {
 public:
  BucketGrid(const std::vector<Wire>& wires, double cell) : cell_(cell) {
    min_x_ = min_y_ = std::numeric_limits<double>::max();
    double max_x = std::numeric_limits<double>::lowest();
    double max_y = max_x;
    for (const auto& w : wires) {
      min_x_ = std::min({min_x_, w.a.x, w.b.x});
      min_y_ = std::min({min_y_, w.a.y, w.b.y});
      max_x = std::max({max_x, w.a.x, w.b.x});
      max_y = std::max({max_y, w.a.y, w.b.y});
    }
    nx_ = std::max(1, static_cast<int>((max_x - min_x_) / cell_) + 1);
    ny_ = std::max(1, static_cast<int>((max_y - min_y_) / cell_) + 1);
    cells_.resize(static_cast<std::size_t>(nx_) * ny_);
    for (const auto& w : wires) {
      visit(std::min(w.a.x, w.b.x), std::min(w.a.y, w.b.y), std::max(w.a.x, w.b.x),
            std::max(w.a.y, w.b.y), [&](std::vector<int>& bucket) { bucket.push_back(w.id); });
    }
  }

  template <class Fn>
  void visit(double x0, double y0, double x1, double y1, Fn&& fn) {
    const int i0 = clamp_x(x0), i1 = clamp_x(x1);
    const int j0 = clamp_y(y0), j1 = clamp_y(y1);
    for (int j = j0; j <= j1; ++j)
      for (int i = i0; i <= i1; ++i) fn(cells_[static_cast<std::size_t>(j) * nx_ + i]);
  }

  const std::vector<std::vector<int>>& cells() const { return cells_; }

 private:
  int clamp_x(double x) const {
    return std::clamp(static_cast<int>(std::floor((x - min_x_) / cell_)), 0, nx_ - 1);
  }
  int clamp_y(double y) const {
    return std::clamp(static_cast<int>(std::floor((y - min_y_) / cell_)), 0, ny_ - 1);
  }

  double cell_;
  double min_x_, min_y_;
  int nx_ = 1, ny_ = 1;
  std::vector<std::vector<int>> cells_;
};

}  // namespace

void GenParams::validate() const {
  if (wire_count <= 0) throw NetgenError("wire_count must be positive");
  if (!(plane_width > 0.0) || !(plane_height > 0.0))
    throw NetgenError("plane size must be positive");
  if (!(center_dist_beta > 0.0)) throw NetgenError("center_dist_beta must be positive");
  if (!(center_dist_scale > 0.0)) throw NetgenError("center_dist_scale must be positive");
  if (!(length_mean > 0.0)) throw NetgenError("length_mean must be positive");
  if (!(length_std >= 0.0)) throw NetgenError("length_std must be non-negative");
  if (grid_n <= 0) throw NetgenError("grid_n must be positive");
  if (grid_n % 2 != 0)
    throw NetgenError("grid_n must be divisible by 2 for the input sub-grid, got " +
                      std::to_string(grid_n));
  if (!(electrode_diameter > 0.0)) throw NetgenError("electrode_diameter must be positive");
  if (!(electrode_pitch > 0.0)) throw NetgenError("electrode_pitch must be positive");
  const double extent = electrode_pitch * (grid_n - 1) + electrode_diameter;
  if (extent > plane_width || extent > plane_height)
    throw NetgenError("electrode grid (" + std::to_string(extent) + " um) does not fit the plane");
}

std::vector<Wire> sample_wires(const GenParams& params) {
  params.validate();
  std::mt19937_64 rng(params.seed);
  GeneralizedNormal gx(0.5 * params.plane_width, params.center_dist_scale, params.center_dist_beta);
  GeneralizedNormal gy(0.5 * params.plane_height, params.center_dist_scale, params.center_dist_beta);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::normal_distribution<double> length(params.length_mean, params.length_std);

  std::vector<Wire> wires;
  wires.reserve(static_cast<std::size_t>(params.wire_count));
  // All draws for one wire happen before the next, so a longer run shares
  // its prefix with a shorter one under the same seed.
  for (int i = 0; i < params.wire_count; ++i) {
    Wire w;
    w.id = i;
    do {
      w.center.x = gx(rng);
    } while (w.center.x < 0.0 || w.center.x > params.plane_width);
    do {
      w.center.y = gy(rng);
    } while (w.center.y < 0.0 || w.center.y > params.plane_height);
    do {
      w.orientation = angle(rng);
    } while (w.orientation >= std::numbers::pi);
    if (params.length_std == 0.0) {
      w.length = params.length_mean;
    } else {
      do {
        w.length = length(rng);
      } while (w.length < kMinWireLength);
    }
    const Point half{0.5 * w.length * std::cos(w.orientation),
                     0.5 * w.length * std::sin(w.orientation)};
    w.a = w.center - half;
    w.b = w.center + half;
    wires.push_back(w);
  }
  return wires;
}

std::vector<Electrode> place_electrodes(const GenParams& params) {
  params.validate();
  const int n = params.grid_n;
  const double offset = 0.5 * (n - 1) * params.electrode_pitch;
  std::vector<Electrode> out;
  out.reserve(static_cast<std::size_t>(n) * n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      Electrode e;
      e.id = r * n + c;
      e.row = r;
      e.col = c;
      e.center = {0.5 * params.plane_width - offset + c * params.electrode_pitch,
                  0.5 * params.plane_height - offset + r * params.electrode_pitch};
      e.radius = 0.5 * params.electrode_diameter;
      e.role = (r % 2 == 0 && c % 2 == 0) ? ElectrodeRole::input : ElectrodeRole::readout;
      out.push_back(e);
    }
  }
  return out;
}

std::vector<Junction> detect_junctions(const std::vector<Wire>& wires,
                                       const std::vector<Electrode>& electrodes) {
  std::vector<Junction> out;
  if (wires.empty()) return out;

  double max_len = 0.0;
  for (const auto& w : wires) max_len = std::max(max_len, w.length);
  // Cells around a third of the longest wire keep buckets small without
  // each wire landing in too many cells.
  BucketGrid grid(wires, std::max(max_len / 3.0, 1.0));

  std::vector<std::pair<int, int>> candidates;
  for (const auto& bucket : grid.cells()) {
    for (std::size_t i = 0; i < bucket.size(); ++i)
      for (std::size_t j = i + 1; j < bucket.size(); ++j)
        candidates.emplace_back(std::min(bucket[i], bucket[j]), std::max(bucket[i], bucket[j]));
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  for (auto [i, j] : candidates) {
    const Wire& u = wires[static_cast<std::size_t>(i)];
    const Wire& v = wires[static_cast<std::size_t>(j)];
    if (auto p = segment_contact(u.a, u.b, v.a, v.b)) {
      out.push_back({0, JunctionKind::wire_wire, i, j, *p});
    }
  }

  const int wire_nodes = static_cast<int>(wires.size());
  std::vector<int> hits;
  for (const auto& e : electrodes) {
    hits.clear();
    grid.visit(e.center.x - e.radius, e.center.y - e.radius, e.center.x + e.radius,
               e.center.y + e.radius,
               [&](std::vector<int>& bucket) { hits.insert(hits.end(), bucket.begin(), bucket.end()); });
    std::sort(hits.begin(), hits.end());
    hits.erase(std::unique(hits.begin(), hits.end()), hits.end());
    for (int wid : hits) {
      const Wire& w = wires[static_cast<std::size_t>(wid)];
      if (auto p = segment_disk_contact(w.a, w.b, e.center, e.radius)) {
        out.push_back({0, JunctionKind::wire_electrode, wid, wire_nodes + e.id, *p});
      }
    }
  }

  std::sort(out.begin(), out.end(), [](const Junction& x, const Junction& y) {
    return std::pair(x.node_a, x.node_b) < std::pair(y.node_a, y.node_b);
  });
  for (std::size_t k = 0; k < out.size(); ++k) out[k].id = static_cast<int>(k);
  return out;
}

DeviceGraph build_graph(std::vector<Wire> wires, std::vector<Electrode> electrodes,
                        std::vector<Junction> junctions, const GenParams& params) {
  DeviceGraph g;
  g.params = params;
  const int nodes = static_cast<int>(wires.size() + electrodes.size());
  for (std::size_t k = 0; k < junctions.size(); ++k) {
    const auto& j = junctions[k];
    if (j.node_a < 0 || j.node_a >= nodes || j.node_b < 0 || j.node_b >= nodes)
      throw NetgenError("junction " + std::to_string(j.id) + " references a missing node");
    if (j.node_a == j.node_b)
      throw NetgenError("junction " + std::to_string(j.id) + " is a self-edge");
  }

  g.adj_offsets.assign(static_cast<std::size_t>(nodes) + 1, 0);
  for (const auto& j : junctions) {
    ++g.adj_offsets[static_cast<std::size_t>(j.node_a) + 1];
    ++g.adj_offsets[static_cast<std::size_t>(j.node_b) + 1];
  }
  for (int n = 0; n < nodes; ++n) g.adj_offsets[n + 1] += g.adj_offsets[n];
  g.adj_nodes.resize(2 * junctions.size());
  g.adj_edges.resize(2 * junctions.size());
  std::vector<int> fill(g.adj_offsets.begin(), g.adj_offsets.end() - 1);
  for (std::size_t k = 0; k < junctions.size(); ++k) {
    const auto& j = junctions[k];
    g.adj_nodes[fill[j.node_a]] = j.node_b;
    g.adj_edges[fill[j.node_a]++] = static_cast<int>(k);
    g.adj_nodes[fill[j.node_b]] = j.node_a;
    g.adj_edges[fill[j.node_b]++] = static_cast<int>(k);
  }

  // Components by BFS in node order, so labels are deterministic.
  g.component.assign(static_cast<std::size_t>(nodes), -1);
  std::vector<int> queue;
  for (int s = 0; s < nodes; ++s) {
    if (g.component[s] >= 0) continue;
    const int label = g.component_count++;
    g.component[s] = label;
    queue.assign(1, s);
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const int n = queue[head];
      for (int k = g.adj_offsets[n]; k < g.adj_offsets[n + 1]; ++k) {
        const int m = g.adj_nodes[k];
        if (g.component[m] < 0) {
          g.component[m] = label;
          queue.push_back(m);
        }
      }
    }
  }

  const int wire_nodes = static_cast<int>(wires.size());
  for (const auto& e : electrodes) {
    (e.role == ElectrodeRole::input ? g.input_node_ids : g.readout_node_ids)
        .push_back(wire_nodes + e.id);
  }
  g.wires = std::move(wires);
  g.electrodes = std::move(electrodes);
  g.junctions = std::move(junctions);
  return g;
}

DeviceGraph generate_device(const GenParams& params) {
  auto wires = sample_wires(params);
  auto electrodes = place_electrodes(params);
  auto junctions = detect_junctions(wires, electrodes);
  return build_graph(std::move(wires), std::move(electrodes), std::move(junctions), params);
}

double point_segment_distance(Point p, Point a, Point b) {
  const Point d = b - a;
  const double dd = dot(d, d);
  const double t = dd > 0.0 ? std::clamp(dot(p - a, d) / dd, 0.0, 1.0) : 0.0;
  const Point q = a + t * d - p;
  return std::sqrt(dot(q, q));
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

nlohmann::json pt(Point p) { return nlohmann::json::array({p.x, p.y}); }
Point pt(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

}  // namespace

nlohmann::json params_to_json(const GenParams& p) {
  return {{"wire_count", p.wire_count},
          {"plane_width", p.plane_width},
          {"plane_height", p.plane_height},
          {"center_dist_beta", p.center_dist_beta},
          {"center_dist_scale", p.center_dist_scale},
          {"length_mean", p.length_mean},
          {"length_std", p.length_std},
          {"grid_n", p.grid_n},
          {"electrode_diameter", p.electrode_diameter},
          {"electrode_pitch", p.electrode_pitch},
          {"seed", p.seed}};
}

GenParams params_from_json(const nlohmann::json& j) {
  GenParams p;
  p.wire_count = j.value("wire_count", p.wire_count);
  p.plane_width = j.value("plane_width", p.plane_width);
  p.plane_height = j.value("plane_height", p.plane_height);
  p.center_dist_beta = j.value("center_dist_beta", p.center_dist_beta);
  p.center_dist_scale = j.value("center_dist_scale", p.center_dist_scale);
  p.length_mean = j.value("length_mean", p.length_mean);
  p.length_std = j.value("length_std", p.length_std);
  p.grid_n = j.value("grid_n", p.grid_n);
  p.electrode_diameter = j.value("electrode_diameter", p.electrode_diameter);
  p.electrode_pitch = j.value("electrode_pitch", p.electrode_pitch);
  p.seed = j.value("seed", p.seed);
  return p;
}

nlohmann::json device_to_json(const DeviceGraph& g) {
  nlohmann::json wires = nlohmann::json::array();
  for (const auto& w : g.wires) {
    wires.push_back({{"id", w.id},
                     {"center", pt(w.center)},
                     {"orientation", w.orientation},
                     {"length", w.length},
                     {"endpoints", {pt(w.a), pt(w.b)}}});
  }
  nlohmann::json electrodes = nlohmann::json::array();
  for (const auto& e : g.electrodes) {
    electrodes.push_back({{"id", e.id},
                          {"row", e.row},
                          {"col", e.col},
                          {"center", pt(e.center)},
                          {"radius", e.radius},
                          {"role", e.role == ElectrodeRole::input ? "input" : "readout"}});
  }
  nlohmann::json junctions = nlohmann::json::array();
  for (const auto& j : g.junctions) {
    junctions.push_back({{"id", j.id},
                         {"kind", j.kind == JunctionKind::wire_wire ? "wire-wire" : "wire-electrode"},
                         {"node_a", j.node_a},
                         {"node_b", j.node_b},
                         {"position", pt(j.position)}});
  }
  return {{"version", kDeviceFormatVersion},
          {"params", params_to_json(g.params)},
          {"wires", std::move(wires)},
          {"electrodes", std::move(electrodes)},
          {"junctions", std::move(junctions)}};
}

DeviceGraph device_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != kDeviceFormatVersion)
      throw NetgenError("unsupported device format version");
    const GenParams params = params_from_json(j.at("params"));
    std::vector<Wire> wires;
    for (const auto& jw : j.at("wires")) {
      Wire w;
      w.id = jw.at("id").get<int>();
      w.center = pt(jw.at("center"));
      w.orientation = jw.at("orientation").get<double>();
      w.length = jw.at("length").get<double>();
      w.a = pt(jw.at("endpoints").at(0));
      w.b = pt(jw.at("endpoints").at(1));
      if (w.id != static_cast<int>(wires.size())) throw NetgenError("wire ids must be dense");
      wires.push_back(w);
    }
    std::vector<Electrode> electrodes;
    for (const auto& je : j.at("electrodes")) {
      Electrode e;
      e.id = je.at("id").get<int>();
      e.row = je.at("row").get<int>();
      e.col = je.at("col").get<int>();
      e.center = pt(je.at("center"));
      e.radius = je.at("radius").get<double>();
      const auto role = je.at("role").get<std::string>();
      if (role != "input" && role != "readout") throw NetgenError("unknown electrode role " + role);
      e.role = role == "input" ? ElectrodeRole::input : ElectrodeRole::readout;
      if (e.id != static_cast<int>(electrodes.size()))
        throw NetgenError("electrode ids must be dense");
      electrodes.push_back(e);
    }
    std::vector<Junction> junctions;
    for (const auto& jj : j.at("junctions")) {
      Junction k;
      k.id = jj.at("id").get<int>();
      const auto kind = jj.at("kind").get<std::string>();
      if (kind != "wire-wire" && kind != "wire-electrode")
        throw NetgenError("unknown junction kind " + kind);
      k.kind = kind == "wire-wire" ? JunctionKind::wire_wire : JunctionKind::wire_electrode;
      k.node_a = jj.at("node_a").get<int>();
      k.node_b = jj.at("node_b").get<int>();
      k.position = pt(jj.at("position"));
      junctions.push_back(k);
    }
    return build_graph(std::move(wires), std::move(electrodes), std::move(junctions), params);
  } catch (const nlohmann::json::exception& e) {
    throw NetgenError(std::string("malformed device document: ") + e.what());
  }
}

std::string serialize_device(const DeviceGraph& graph) { return device_to_json(graph).dump(1); }

void write_device(const DeviceGraph& graph, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << serialize_device(graph) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

DeviceGraph read_device(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open device file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw NetgenError("device file " + path.string() + " is not valid JSON: " + e.what());
  }
  return device_from_json(j);
}

}  // namespace nwn::netgen
