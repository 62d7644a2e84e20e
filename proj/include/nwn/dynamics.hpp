// Memristive junction dynamics over a DeviceGraph.
//
// Each junction carries a filament state lambda (volt-seconds). Its
// conductance is a linear map of |lambda| between g_off and g_on. Every
// timestep the node voltages are found from Kirchhoff's current law with the
// input electrodes held at their drive voltages, then lambda is advanced by
// one forward-Euler step of the threshold equation of state.
#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "nwn/netgen.hpp"

namespace nwn::dynamics {

class DynamicsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ResetPolicy { per_tile, persistent };

struct DynParams {
  double v_set = 1e-2;        // V
  double v_reset = 5e-3;      // V
  double lambda_max = 1.5e-2; // V s
  double b = 10.0;            // decay rate
  double dt = 1e-4;           // s
  int steps_per_tile = 14;
  double g_off = 7.75e-8;  // S
  double g_on = 7.75e-5;   // S
  ResetPolicy reset_policy = ResetPolicy::per_tile;

  void validate() const;
  double simulated_seconds_per_tile() const { return steps_per_tile * dt; }
};

nlohmann::json params_to_json(const DynParams& p);
DynParams params_from_json(const nlohmann::json& j);

/// G = g_off + (g_on - g_off) * min(|lambda|, lambda_max) / lambda_max.
double conductance(double lambda, const DynParams& params);
void conductance(std::span<const double> lambda, const DynParams& params, std::span<double> out);
std::vector<double> conductance(std::span<const double> lambda, const DynParams& params);

/// d lambda / dt for one junction at drop `voltage` and state `lambda`,
/// before the saturation hold and the no-overshoot clamp are applied.
double state_rate(double voltage, double lambda, const DynParams& params);

/// One forward-Euler update of a single junction.
double step_junction(double lambda, double voltage, const DynParams& params);

/// Junction voltage drops v(node_a) - v(node_b), edge order.
void junction_voltages(const netgen::DeviceGraph& graph, std::span<const double> node_voltages,
                       std::span<double> out);

/// Advances every junction by one timestep. Returns true if any lambda
/// changed.
bool step_state(std::span<double> lambda, std::span<const double> node_voltages,
                const netgen::DeviceGraph& graph, const DynParams& params);
std::vector<double> step_state(std::span<const double> lambda,
                               std::span<const double> node_voltages,
                               const netgen::DeviceGraph& graph, const DynParams& params);

/// Kirchhoff solver for one device. Nodes are split into driven (input
/// electrodes), free (everything else sharing a component with an input)
/// and grounded (components without an input, pinned to 0 V). The free
/// block of the weighted Laplacian is factorized with a sparse LDL^T whose
/// symbolic analysis is done once at construction.
///
/// set_conductances mutates; the const solves may run concurrently.
class CircuitSolver {
 public:
  explicit CircuitSolver(const netgen::DeviceGraph& graph);
  ~CircuitSolver();
  CircuitSolver(CircuitSolver&&) noexcept;
  CircuitSolver& operator=(CircuitSolver&&) noexcept;
  CircuitSolver(const CircuitSolver& other);

  /// Refactorizes for new edge conductances.
  void set_conductances(std::span<const double> g);
  bool factorized() const;
  /// Node voltages for the factorized conductances. drive is aligned to
  /// graph.input_node_ids.
  void solve(std::span<const double> drive, std::span<double> node_voltages) const;
  /// Conjugate gradients for conductances g, preconditioned by the current
  /// factorization. node_voltages holds the starting guess on entry. Stops
  /// when ||r|| <= rel_tol * ||b||. Returns the iteration count, or -1 if
  /// max_iter was reached (node_voltages is then left untouched).
  int solve_preconditioned(std::span<const double> g, std::span<const double> drive,
                           std::span<double> node_voltages, double rel_tol, int max_iter) const;

  int free_count() const;
  int node_count() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// One-shot solve (builds a CircuitSolver).
std::vector<double> solve_network(const netgen::DeviceGraph& graph, std::span<const double> g,
                                  std::span<const double> drive);

/// Per-node Kirchhoff residual sum_m G_nm (v_n - v_m); zero at free nodes
/// for an exact solution.
std::vector<double> current_residuals(const netgen::DeviceGraph& graph, std::span<const double> g,
                                      std::span<const double> node_voltages);

struct TileResult {
  std::vector<double> readout;  // graph.readout_node_ids order
  std::vector<double> state;    // lambda after the tile
};

/// Simulates one tile: drive held for steps_per_tile steps, alternating
/// solve and state update, then a final solve on the updated state whose
/// readout-electrode voltages are returned. Under per_tile reset the
/// incoming state is ignored and lambda starts at zero. Every solve is a
/// direct factorization.
TileResult run_tile(const netgen::DeviceGraph& graph, std::span<const double> pooled,
                    const DynParams& params, std::span<const double> state_in);

/// Optional per-step trace of (step, junction, lambda, V).
struct TraceSink {
  virtual ~TraceSink() = default;
  virtual void record(int step, int junction, double lambda, double voltage) = 0;
};

enum class SolveMode {
  direct,     // refactorize after every state update
  iterative,  // PCG preconditioned by a recent factorization
};

struct SimulatorOptions {
  SolveMode mode = SolveMode::iterative;
  double rel_tol = 1e-10;
  int max_iterations = 400;
  // A solve needing more iterations than this triggers a refactorization
  // on the following step, which then serves as the preconditioner.
  int refresh_iterations = 30;
};

/// Reusable tile simulator owning solver buffers and junction state. The
/// factorization of the all-off device is shared between copies (read only);
/// everything mutable is per copy, so one copy per worker is enough for
/// parallel use.
class DeviceSimulator {
 public:
  DeviceSimulator(const netgen::DeviceGraph& graph, DynParams params,
                  SimulatorOptions options = {});

  /// Runs one tile and returns the readout voltages (valid until the next
  /// call).
  std::span<const double> run_tile(std::span<const double> pooled);

  std::span<const double> state() const { return lambda_; }
  void reset_state();
  /// Replaces lambda (used by the persistent policy to resume a run).
  void set_state(std::span<const double> lambda);
  void set_trace(TraceSink* sink) { trace_ = sink; }
  const DynParams& params() const { return params_; }
  const netgen::DeviceGraph& graph() const { return *graph_; }
  std::size_t input_count() const { return graph_->input_node_ids.size(); }
  std::size_t readout_count() const { return graph_->readout_node_ids.size(); }
  /// Node voltages from the last solve of the last tile.
  std::span<const double> node_voltages() const { return voltages_; }
  /// CG iterations spent in the last tile.
  int last_iterations() const { return last_iterations_; }

 private:
  bool at_fresh_state() const;
  void solve_exact(std::span<const double> drive);

  const netgen::DeviceGraph* graph_;
  DynParams params_;
  SimulatorOptions options_;
  CircuitSolver solver_;
  // Factorization at lambda == 0, shared by every per-tile reset.
  std::shared_ptr<const CircuitSolver> fresh_solver_;
  bool precondition_with_own_ = false;
  std::vector<double> lambda_;
  std::vector<double> g_;
  std::vector<double> voltages_;
  std::vector<double> previous_;
  std::vector<double> guess_;
  std::vector<double> readout_;
  int last_iterations_ = 0;
  TraceSink* trace_ = nullptr;
};

}  // namespace nwn::dynamics
