#include "nwn/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <nlohmann/json.hpp>

namespace nwn::dynamics {

using netgen::DeviceGraph;

void DynParams::validate() const {
  if (!(v_reset > 0.0) || !(v_reset < v_set))
    throw DynamicsError("dynamics parameters require 0 < v_reset < v_set");
  if (!(lambda_max > 0.0)) throw DynamicsError("lambda_max must be positive");
  if (!(b >= 0.0)) throw DynamicsError("decay rate b must be non-negative");
  if (!(dt > 0.0)) throw DynamicsError("dt must be positive");
  if (steps_per_tile < 1) throw DynamicsError("steps_per_tile must be at least 1");
  if (!(g_off > 0.0) || !(g_on > g_off))
    throw DynamicsError("conductances require g_on > g_off > 0");
}

nlohmann::json params_to_json(const DynParams& p) {
  return {{"v_set", p.v_set},
          {"v_reset", p.v_reset},
          {"lambda_max", p.lambda_max},
          {"b", p.b},
          {"dt", p.dt},
          {"steps_per_tile", p.steps_per_tile},
          {"g_off", p.g_off},
          {"g_on", p.g_on},
          {"reset_policy", p.reset_policy == ResetPolicy::per_tile ? "per-tile" : "persistent"}};
}

DynParams params_from_json(const nlohmann::json& j) {
  DynParams p;
  p.v_set = j.value("v_set", p.v_set);
  p.v_reset = j.value("v_reset", p.v_reset);
  p.lambda_max = j.value("lambda_max", p.lambda_max);
  p.b = j.value("b", p.b);
  p.dt = j.value("dt", p.dt);
  p.steps_per_tile = j.value("steps_per_tile", p.steps_per_tile);
  p.g_off = j.value("g_off", p.g_off);
  p.g_on = j.value("g_on", p.g_on);
  const auto policy = j.value("reset_policy", std::string("per-tile"));
  if (policy == "per-tile") {
    p.reset_policy = ResetPolicy::per_tile;
  } else if (policy == "persistent") {
    p.reset_policy = ResetPolicy::persistent;
  } else {
    throw DynamicsError("unknown reset_policy '" + policy + "'");
  }
  return p;
}

double conductance(double lambda, const DynParams& p) {
  const double frac = std::min(std::abs(lambda), p.lambda_max) / p.lambda_max;
  return p.g_off + (p.g_on - p.g_off) * frac;
}

void conductance(std::span<const double> lambda, const DynParams& p, std::span<double> out) {
  for (std::size_t i = 0; i < lambda.size(); ++i) out[i] = conductance(lambda[i], p);
}

std::vector<double> conductance(std::span<const double> lambda, const DynParams& p) {
  std::vector<double> out(lambda.size());
  conductance(lambda, p, out);
  return out;
}

namespace {
double sgn(double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); }
}  // namespace

double state_rate(double voltage, double lambda, const DynParams& p) {
  const double mag = std::abs(voltage);
  if (mag > p.v_set) return (mag - p.v_set) * sgn(voltage);
  if (mag < p.v_reset) return p.b * (mag - p.v_reset) * sgn(lambda);
  // Dead zone, including both boundaries.
  return 0.0;
}

double step_junction(double lambda, double voltage, const DynParams& p) {
  const double rate = state_rate(voltage, lambda, p);
  if (rate == 0.0) return lambda;
  // Saturated filaments do not grow further.
  if (std::abs(lambda) >= p.lambda_max && sgn(rate) == sgn(lambda)) return lambda;
  double next = lambda + rate * p.dt;
  if (std::abs(voltage) < p.v_reset && sgn(next) != sgn(lambda)) next = 0.0;
  return std::clamp(next, -p.lambda_max, p.lambda_max);
}

void junction_voltages(const DeviceGraph& graph, std::span<const double> v, std::span<double> out) {
  for (std::size_t k = 0; k < graph.junctions.size(); ++k) {
    const auto& j = graph.junctions[k];
    out[k] = v[static_cast<std::size_t>(j.node_a)] - v[static_cast<std::size_t>(j.node_b)];
  }
}

bool step_state(std::span<double> lambda, std::span<const double> v, const DeviceGraph& graph,
                const DynParams& params) {
  bool changed = false;
  for (std::size_t k = 0; k < graph.junctions.size(); ++k) {
    const auto& j = graph.junctions[k];
    const double drop = v[static_cast<std::size_t>(j.node_a)] - v[static_cast<std::size_t>(j.node_b)];
    const double next = step_junction(lambda[k], drop, params);
    changed |= next != lambda[k];
    lambda[k] = next;
  }
  return changed;
}

std::vector<double> step_state(std::span<const double> lambda, std::span<const double> v,
                               const DeviceGraph& graph, const DynParams& params) {
  std::vector<double> out(lambda.begin(), lambda.end());
  step_state(std::span<double>(out), v, graph, params);
  return out;
}

// ---------------------------------------------------------------------------
// CircuitSolver

namespace {
constexpr int kDriven = -1;
constexpr int kGrounded = -2;
}  // namespace

struct CircuitSolver::Impl {
  using Matrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

  const DeviceGraph* graph = nullptr;
  std::vector<int> free_index;   // >= 0 free, kDriven, kGrounded
  std::vector<int> drive_index;  // position in input_node_ids, or -1
  std::vector<int> free_nodes;

  // Per edge: free indices of both ends (negative when not free) and the
  // offsets into matrix.valuePtr() the edge contributes to, or -1.
  struct EdgeMap {
    int fa = -1;
    int fb = -1;
    int diag_a = -1;
    int diag_b = -1;
    int off = -1;
  };
  std::vector<EdgeMap> edges;

  // Edges linking a free node to a driven one feed the right-hand side.
  struct Coupling {
    int free;
    int drive;
    int edge;
  };
  std::vector<Coupling> couplings;

  Matrix matrix;  // lower triangle of the free block
  Eigen::SimplicialLDLT<Matrix, Eigen::Lower> ldlt;
  std::vector<double> g;
  bool factorized = false;

  // Flat copy of the factor P A P^T = L D L^T: L strictly lower, column
  // major. Substitution over these arrays is several times cheaper than the
  // generic sparse triangular solver, which matters because every CG
  // iteration applies it once.
  std::vector<int> perm;  // y[perm[i]] = b[i]
  std::vector<int> l_start;
  std::vector<int> l_row;
  std::vector<double> l_val;
  std::vector<double> d_inv;

  explicit Impl(const DeviceGraph& gr) : graph(&gr) {
    const int n = gr.node_count();
    drive_index.assign(static_cast<std::size_t>(n), -1);
    for (std::size_t i = 0; i < gr.input_node_ids.size(); ++i)
      drive_index[static_cast<std::size_t>(gr.input_node_ids[i])] = static_cast<int>(i);

    std::vector<char> energized(static_cast<std::size_t>(gr.component_count), 0);
    for (int node : gr.input_node_ids) energized[static_cast<std::size_t>(gr.component[node])] = 1;

    free_index.assign(static_cast<std::size_t>(n), kGrounded);
    for (int node = 0; node < n; ++node) {
      if (drive_index[node] >= 0) {
        free_index[node] = kDriven;
      } else if (energized[static_cast<std::size_t>(gr.component[node])]) {
        free_index[node] = static_cast<int>(free_nodes.size());
        free_nodes.push_back(node);
      }
    }

    const int nf = static_cast<int>(free_nodes.size());
    std::vector<Eigen::Triplet<double, int>> triplets;
    triplets.reserve(free_nodes.size() + gr.junctions.size());
    for (int f = 0; f < nf; ++f) triplets.emplace_back(f, f, 1.0);
    for (const auto& j : gr.junctions) {
      const int fa = free_index[static_cast<std::size_t>(j.node_a)];
      const int fb = free_index[static_cast<std::size_t>(j.node_b)];
      if (fa >= 0 && fb >= 0) triplets.emplace_back(std::max(fa, fb), std::min(fa, fb), 1.0);
    }
    matrix.resize(nf, nf);
    matrix.setFromTriplets(triplets.begin(), triplets.end());
    matrix.makeCompressed();

    const double* base = matrix.valuePtr();
    auto slot = [&](int row, int col) {
      return static_cast<int>(&matrix.coeffRef(row, col) - base);
    };
    edges.resize(gr.junctions.size());
    for (std::size_t k = 0; k < gr.junctions.size(); ++k) {
      const auto& j = gr.junctions[k];
      EdgeMap& e = edges[k];
      e.fa = free_index[static_cast<std::size_t>(j.node_a)];
      e.fb = free_index[static_cast<std::size_t>(j.node_b)];
      if (e.fa >= 0) e.diag_a = slot(e.fa, e.fa);
      if (e.fb >= 0) e.diag_b = slot(e.fb, e.fb);
      if (e.fa >= 0 && e.fb >= 0) e.off = slot(std::max(e.fa, e.fb), std::min(e.fa, e.fb));
      if (e.fa >= 0 && e.fb == kDriven)
        couplings.push_back({e.fa, drive_index[static_cast<std::size_t>(j.node_b)], static_cast<int>(k)});
      if (e.fb >= 0 && e.fa == kDriven)
        couplings.push_back({e.fb, drive_index[static_cast<std::size_t>(j.node_a)], static_cast<int>(k)});
    }
    if (nf > 0) ldlt.analyzePattern(matrix);
  }

  void check_conductances(std::span<const double> gs) const {
    if (gs.size() != graph->junctions.size())
      throw DynamicsError("conductance vector length does not match the junction count");
  }

  void check_io(std::span<const double> drive, std::span<double> v) const {
    if (drive.size() != graph->input_node_ids.size())
      throw DynamicsError("drive length " + std::to_string(drive.size()) + " does not match " +
                          std::to_string(graph->input_node_ids.size()) + " input electrodes");
    if (v.size() != free_index.size()) throw DynamicsError("node voltage buffer has wrong size");
  }

  void factorize(std::span<const double> gnew) {
    check_conductances(gnew);
    g.assign(gnew.begin(), gnew.end());
    double* values = matrix.valuePtr();
    std::fill(values, values + matrix.nonZeros(), 0.0);
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const double gk = g[k];
      const EdgeMap& e = edges[k];
      if (e.diag_a >= 0) values[e.diag_a] += gk;
      if (e.diag_b >= 0) values[e.diag_b] += gk;
      if (e.off >= 0) values[e.off] -= gk;
    }
    if (matrix.rows() > 0) {
      ldlt.factorize(matrix);
      if (ldlt.info() != Eigen::Success) throw DynamicsError(diagnose());
      flatten();
    }
    factorized = true;
  }

  void flatten() {
    const auto n = static_cast<std::size_t>(matrix.rows());
    const auto& indices = ldlt.permutationP().indices();
    perm.assign(indices.data(), indices.data() + n);
    const Matrix& l = ldlt.matrixL().nestedExpression();
    l_start.assign(n + 1, 0);
    l_row.clear();
    l_val.clear();
    l_row.reserve(static_cast<std::size_t>(l.nonZeros()));
    l_val.reserve(static_cast<std::size_t>(l.nonZeros()));
    for (Eigen::Index col = 0; col < l.outerSize(); ++col) {
      for (Matrix::InnerIterator it(l, col); it; ++it) {
        if (it.row() <= col) continue;
        l_row.push_back(static_cast<int>(it.row()));
        l_val.push_back(it.value());
      }
      l_start[static_cast<std::size_t>(col) + 1] = static_cast<int>(l_row.size());
    }
    const auto& d = ldlt.vectorD();
    d_inv.resize(n);
    for (std::size_t i = 0; i < n; ++i) d_inv[i] = 1.0 / d[static_cast<Eigen::Index>(i)];
  }

  // z = A_factored^-1 r. `work` has free_count entries.
  void apply_inverse(const double* r, double* z, double* work) const {
    const std::size_t n = perm.size();
    for (std::size_t i = 0; i < n; ++i) work[perm[i]] = r[i];
    for (std::size_t j = 0; j < n; ++j) {
      const double yj = work[j];
      if (yj == 0.0) continue;
      for (int p = l_start[j]; p < l_start[j + 1]; ++p) work[l_row[p]] -= l_val[p] * yj;
    }
    for (std::size_t j = 0; j < n; ++j) work[j] *= d_inv[j];
    for (std::size_t j = n; j-- > 0;) {
      double s = work[j];
      for (int p = l_start[j]; p < l_start[j + 1]; ++p) s -= l_val[p] * work[l_row[p]];
      work[j] = s;
    }
    for (std::size_t i = 0; i < n; ++i) z[i] = work[perm[i]];
  }

  std::string diagnose() const {
    std::ostringstream os;
    os << "singular Kirchhoff system: " << free_nodes.size() << " free nodes across "
       << graph->component_count << " components";
    std::vector<int> free_per_component(static_cast<std::size_t>(graph->component_count), 0);
    for (int node : free_nodes) ++free_per_component[static_cast<std::size_t>(graph->component[node])];
    for (int c = 0; c < graph->component_count; ++c) {
      if (free_per_component[c] > 0)
        os << "; component " << c << " has " << free_per_component[c] << " free nodes";
    }
    return os.str();
  }

  Eigen::VectorXd rhs(std::span<const double> gs, std::span<const double> drive) const {
    Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(free_nodes.size()));
    for (const auto& c : couplings) b[c.free] += gs[static_cast<std::size_t>(c.edge)] * drive[c.drive];
    return b;
  }

  // y = A(gs) x over the free block.
  void apply(std::span<const double> gs, const Eigen::VectorXd& x, Eigen::VectorXd& y) const {
    y.setZero();
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const EdgeMap& e = edges[k];
      const double gk = gs[k];
      if (e.fa >= 0 && e.fb >= 0) {
        const double i = gk * (x[e.fa] - x[e.fb]);
        y[e.fa] += i;
        y[e.fb] -= i;
      } else if (e.fa >= 0) {
        y[e.fa] += gk * x[e.fa];
      } else if (e.fb >= 0) {
        y[e.fb] += gk * x[e.fb];
      }
    }
  }

  void scatter(const Eigen::VectorXd& x, std::span<const double> drive, std::span<double> v) const {
    for (std::size_t node = 0; node < free_index.size(); ++node) {
      const int f = free_index[node];
      if (f >= 0) {
        v[node] = x[f];
      } else if (f == kDriven) {
        v[node] = drive[static_cast<std::size_t>(drive_index[node])];
      } else {
        v[node] = 0.0;
      }
    }
  }

  void solve(std::span<const double> drive, std::span<double> v) const {
    if (!factorized) throw DynamicsError("solve called before set_conductances");
    check_io(drive, v);
    const Eigen::VectorXd b = rhs(g, drive);
    Eigen::VectorXd x(b.size());
    Eigen::VectorXd work(b.size());
    if (b.size() > 0) apply_inverse(b.data(), x.data(), work.data());
    scatter(x, drive, v);
  }

  int pcg(std::span<const double> gs, std::span<const double> drive, std::span<double> v,
          double rel_tol, int max_iter) const {
    if (!factorized) throw DynamicsError("preconditioner used before set_conductances");
    check_conductances(gs);
    check_io(drive, v);
    const auto nf = static_cast<Eigen::Index>(free_nodes.size());
    Eigen::VectorXd x(nf);
    for (Eigen::Index f = 0; f < nf; ++f) x[f] = v[static_cast<std::size_t>(free_nodes[f])];

    const Eigen::VectorXd b = rhs(gs, drive);
    const double tol = rel_tol * b.norm();
    Eigen::VectorXd ap(nf);
    apply(gs, x, ap);
    Eigen::VectorXd r = b - ap;
    Eigen::VectorXd work(nf);
    int iterations = 0;
    if (r.norm() > tol) {
      Eigen::VectorXd z(nf);
      apply_inverse(r.data(), z.data(), work.data());
      Eigen::VectorXd p = z;
      double rz = r.dot(z);
      while (true) {
        if (iterations == max_iter) return -1;
        ++iterations;
        apply(gs, p, ap);
        const double alpha = rz / p.dot(ap);
        x += alpha * p;
        r -= alpha * ap;
        if (r.norm() <= tol) break;
        apply_inverse(r.data(), z.data(), work.data());
        const double rz_next = r.dot(z);
        p = z + (rz_next / rz) * p;
        rz = rz_next;
      }
    }
    scatter(x, drive, v);
    return iterations;
  }
};

CircuitSolver::CircuitSolver(const DeviceGraph& graph) : impl_(std::make_unique<Impl>(graph)) {}
CircuitSolver::~CircuitSolver() = default;
CircuitSolver::CircuitSolver(CircuitSolver&&) noexcept = default;
CircuitSolver& CircuitSolver::operator=(CircuitSolver&&) noexcept = default;
CircuitSolver::CircuitSolver(const CircuitSolver& other)
    : impl_(std::make_unique<Impl>(*other.impl_->graph)) {
  if (other.impl_->factorized) impl_->factorize(other.impl_->g);
}

void CircuitSolver::set_conductances(std::span<const double> g) { impl_->factorize(g); }
bool CircuitSolver::factorized() const { return impl_->factorized; }
void CircuitSolver::solve(std::span<const double> drive, std::span<double> v) const {
  impl_->solve(drive, v);
}
int CircuitSolver::solve_preconditioned(std::span<const double> g, std::span<const double> drive,
                                        std::span<double> v, double rel_tol, int max_iter) const {
  return impl_->pcg(g, drive, v, rel_tol, max_iter);
}
int CircuitSolver::free_count() const { return static_cast<int>(impl_->free_nodes.size()); }
int CircuitSolver::node_count() const { return static_cast<int>(impl_->free_index.size()); }

std::vector<double> solve_network(const DeviceGraph& graph, std::span<const double> g,
                                  std::span<const double> drive) {
  CircuitSolver solver(graph);
  solver.set_conductances(g);
  std::vector<double> v(static_cast<std::size_t>(graph.node_count()));
  solver.solve(drive, v);
  return v;
}

std::vector<double> current_residuals(const DeviceGraph& graph, std::span<const double> g,
                                      std::span<const double> v) {
  std::vector<double> r(static_cast<std::size_t>(graph.node_count()), 0.0);
  for (std::size_t k = 0; k < graph.junctions.size(); ++k) {
    const auto& j = graph.junctions[k];
    const double i = g[k] * (v[static_cast<std::size_t>(j.node_a)] - v[static_cast<std::size_t>(j.node_b)]);
    r[static_cast<std::size_t>(j.node_a)] += i;
    r[static_cast<std::size_t>(j.node_b)] -= i;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Tile simulation

DeviceSimulator::DeviceSimulator(const DeviceGraph& graph, DynParams params, SimulatorOptions options)
    : graph_(&graph), params_(params), options_(options), solver_(graph) {
  params_.validate();
  lambda_.assign(graph.junctions.size(), 0.0);
  g_.assign(graph.junctions.size(), params_.g_off);
  voltages_.assign(static_cast<std::size_t>(graph.node_count()), 0.0);
  previous_.assign(voltages_.size(), 0.0);
  guess_.assign(voltages_.size(), 0.0);
  readout_.assign(graph.readout_node_ids.size(), 0.0);
  auto fresh = std::make_shared<CircuitSolver>(graph);
  fresh->set_conductances(g_);
  fresh_solver_ = std::move(fresh);
}

void DeviceSimulator::reset_state() {
  std::fill(lambda_.begin(), lambda_.end(), 0.0);
  std::fill(g_.begin(), g_.end(), params_.g_off);
}

void DeviceSimulator::set_state(std::span<const double> lambda) {
  if (lambda.size() != lambda_.size())
    throw DynamicsError("state has " + std::to_string(lambda.size()) + " entries, device has " +
                        std::to_string(lambda_.size()) + " junctions");
  for (double l : lambda) {
    if (!std::isfinite(l) || std::abs(l) > params_.lambda_max)
      throw DynamicsError("state entry outside [-lambda_max, lambda_max]");
  }
  std::copy(lambda.begin(), lambda.end(), lambda_.begin());
  conductance(lambda_, params_, g_);
}

bool DeviceSimulator::at_fresh_state() const {
  return std::all_of(lambda_.begin(), lambda_.end(), [](double l) { return l == 0.0; });
}

void DeviceSimulator::solve_exact(std::span<const double> drive) {
  if (at_fresh_state()) {
    fresh_solver_->solve(drive, voltages_);
    precondition_with_own_ = false;
  } else {
    solver_.set_conductances(g_);
    solver_.solve(drive, voltages_);
    precondition_with_own_ = true;
  }
}

std::span<const double> DeviceSimulator::run_tile(std::span<const double> pooled) {
  if (pooled.size() != graph_->input_node_ids.size())
    throw DynamicsError("pooled input has " + std::to_string(pooled.size()) + " values, device has " +
                        std::to_string(graph_->input_node_ids.size()) + " input electrodes");
  if (params_.reset_policy == ResetPolicy::per_tile) reset_state();

  last_iterations_ = 0;
  solve_exact(pooled);
  bool have_previous = false;
  bool refresh = false;

  for (int step = 0; step < params_.steps_per_tile; ++step) {
    if (trace_) {
      for (std::size_t k = 0; k < graph_->junctions.size(); ++k) {
        const auto& j = graph_->junctions[k];
        trace_->record(step, static_cast<int>(k), lambda_[k],
                       voltages_[static_cast<std::size_t>(j.node_a)] -
                           voltages_[static_cast<std::size_t>(j.node_b)]);
      }
    }
    // An unchanged state reproduces the same voltages, so later steps are
    // no-ops as well.
    if (!step_state(std::span<double>(lambda_), voltages_, *graph_, params_)) {
      if (trace_) continue;
      break;
    }
    conductance(lambda_, params_, g_);

    if (options_.mode == SolveMode::direct || refresh) {
      previous_.swap(voltages_);
      solve_exact(pooled);
      refresh = false;
    } else {
      // Linear extrapolation of the last two solutions as the starting guess.
      for (std::size_t n = 0; n < voltages_.size(); ++n)
        guess_[n] = have_previous ? 2.0 * voltages_[n] - previous_[n] : voltages_[n];
      const CircuitSolver& pre = precondition_with_own_ ? solver_ : *fresh_solver_;
      const int its = pre.solve_preconditioned(g_, pooled, guess_, options_.rel_tol,
                                               options_.max_iterations);
      previous_.swap(voltages_);
      if (its < 0) {
        solve_exact(pooled);
      } else {
        voltages_.swap(guess_);
        last_iterations_ += its;
        refresh = its > options_.refresh_iterations;
      }
    }
    have_previous = true;
  }

  for (std::size_t i = 0; i < graph_->readout_node_ids.size(); ++i)
    readout_[i] = voltages_[static_cast<std::size_t>(graph_->readout_node_ids[i])];
  return readout_;
}

TileResult run_tile(const DeviceGraph& graph, std::span<const double> pooled,
                    const DynParams& params, std::span<const double> state_in) {
  DeviceSimulator sim(graph, params, {.mode = SolveMode::direct});
  if (params.reset_policy == ResetPolicy::persistent) sim.set_state(state_in);
  auto readout = sim.run_tile(pooled);
  return {std::vector<double>(readout.begin(), readout.end()),
          std::vector<double>(sim.state().begin(), sim.state().end())};
}

}  // namespace nwn::dynamics
