// Procedural generation of a planar nanowire network device: wire segments,
// a square electrode grid, the junctions where they touch, and the
// node/edge graph the circuit solver works on.
//
// Node numbering: wires occupy ids [0, wire_count), electrodes follow at
// [wire_count, wire_count + grid_n^2). Electrodes are numbered row-major
// over the grid (row = y index, column = x index).
#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace nwn::netgen {

class NetgenError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct GenParams {
  int wire_count = 1520;
  double plane_width = 250.0;   // µm
  double plane_height = 250.0;  // µm
  double center_dist_beta = 5.0;
  double center_dist_scale = 125.0;  // µm, per axis
  double length_mean = 30.0;         // µm
  double length_std = 6.0;           // µm
  int grid_n = 16;
  double electrode_diameter = 8.0;  // µm
  double electrode_pitch = 8.0;     // µm, centre to centre
  std::uint64_t seed = 0;

  /// Throws NetgenError describing the first violated constraint.
  void validate() const;
};

/// Lengths below this are resampled.
inline constexpr double kMinWireLength = 0.1;

struct Wire {
  int id = 0;
  Point center;
  double orientation = 0.0;  // radians in [0, pi)
  double length = 0.0;
  Point a;  // center - length/2 * (cos, sin)
  Point b;  // center + length/2 * (cos, sin)
};

enum class ElectrodeRole { input, readout };

struct Electrode {
  int id = 0;  // index in the grid, row-major
  int row = 0;
  int col = 0;
  Point center;
  double radius = 0.0;
  ElectrodeRole role = ElectrodeRole::readout;
};

enum class JunctionKind { wire_wire, wire_electrode };

struct Junction {
  int id = 0;
  JunctionKind kind = JunctionKind::wire_wire;
  int node_a = 0;  // always a wire
  int node_b = 0;  // wire or electrode node id, node_a < node_b
  Point position;
};

struct DeviceGraph {
  GenParams params;
  std::vector<Wire> wires;
  std::vector<Electrode> electrodes;
  std::vector<Junction> junctions;  // edge i == junctions[i]

  // CSR adjacency: neighbours of node n are adj_nodes[adj_offsets[n] ..
  // adj_offsets[n+1]), reached through edge adj_edges[...].
  std::vector<int> adj_offsets;
  std::vector<int> adj_nodes;
  std::vector<int> adj_edges;

  std::vector<int> component;  // per node, labels 0..component_count-1
  int component_count = 0;

  std::vector<int> input_node_ids;    // row-major over the input sub-grid
  std::vector<int> readout_node_ids;  // row-major over the remaining grid

  int node_count() const { return static_cast<int>(adj_offsets.size()) - 1; }
  int edge_count() const { return static_cast<int>(junctions.size()); }
  int wire_node(int wire_id) const { return wire_id; }
  int electrode_node(int electrode_id) const {
    return static_cast<int>(wires.size()) + electrode_id;
  }
};

std::vector<Wire> sample_wires(const GenParams& params);
std::vector<Electrode> place_electrodes(const GenParams& params);

/// Wire-wire and wire-electrode contacts, sorted by (node_a, node_b) with
/// ids assigned in that order. Wire node ids are wire ids; electrode node
/// ids are wires.size() + electrode id.
std::vector<Junction> detect_junctions(const std::vector<Wire>& wires,
                                       const std::vector<Electrode>& electrodes);

DeviceGraph build_graph(std::vector<Wire> wires,
                        std::vector<Electrode> electrodes,
                        std::vector<Junction> junctions,
                        const GenParams& params = {});

/// sample_wires + place_electrodes + detect_junctions + build_graph.
DeviceGraph generate_device(const GenParams& params);

// Segment helpers, exposed for tests.
double point_segment_distance(Point p, Point a, Point b);

// JSON serialization of the device. Reading rebuilds the graph and
// validates every junction reference.
inline constexpr int kDeviceFormatVersion = 1;
nlohmann::json params_to_json(const GenParams& params);
GenParams params_from_json(const nlohmann::json& j);
nlohmann::json device_to_json(const DeviceGraph& graph);
DeviceGraph device_from_json(const nlohmann::json& j);
std::string serialize_device(const DeviceGraph& graph);
void write_device(const DeviceGraph& graph, const std::filesystem::path& path);
DeviceGraph read_device(const std::filesystem::path& path);

}  // namespace nwn::netgen
