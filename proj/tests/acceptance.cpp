// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.
//
// NWN_THRAWS_MANIFEST may name a manifest of real granules; detection is then
// scored at the level default thresholds and reported without a verdict.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "nwn/benchmark.hpp"
#include "nwn/dataio.hpp"
#include "nwn/dynamics.hpp"
#include "nwn/metrics.hpp"
#include "nwn/netgen.hpp"
#include "nwn/pipeline.hpp"
#include "support.hpp"

using namespace nwn;

namespace {

/// Collects failed expectations for one criterion.
class Verdict {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok && failures_.size() < 8) failures_.push_back(what);
    if (!ok) ++failed_;
  }
  void note(const std::string& s) { notes_ << (notes_.tellp() > 0 ? "; " : "") << s; }
  bool ok() const { return failed_ == 0; }
  std::string detail() const {
    std::string out = notes_.str();
    for (const auto& f : failures_) out += (out.empty() ? "" : "; ") + std::string("failed: ") + f;
    if (failed_ > static_cast<long>(failures_.size()))
      out += "; (" + std::to_string(failed_ - static_cast<long>(failures_.size())) + " more)";
    return out;
  }

 private:
  std::vector<std::string> failures_;
  long failed_ = 0;
  std::ostringstream notes_;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

int worker_count() { return std::max(2, static_cast<int>(std::thread::hardware_concurrency())); }

netgen::DeviceGraph default_device() {
  netgen::GenParams p;
  p.seed = 1;
  return netgen::generate_device(p);
}

void mcc_oracle(Verdict& v) {
  const metrics::ConfusionMatrix c{383, 20889, 119, 59};
  const double m = metrics::mcc(c);
  const auto p = metrics::precision(c);
  const auto r = metrics::recall(c);
  v.note("mcc " + fmt("%.4f", m) + ", precision " + fmt("%.4f", p.value) + ", recall " + fmt("%.4f", r.value));
  v.expect(std::abs(m - 0.809) <= 1e-3, "mcc");
  v.expect(p.defined && std::abs(p.value - 0.763) <= 1e-3, "precision");
  v.expect(r.defined && std::abs(r.value - 0.867) <= 1e-3, "recall");
}

void device_scale(Verdict& v) {
  constexpr int kSeeds = 50;
  constexpr double kReferenceJunctions = 12736.0;
  double sum = 0.0;
  for (int s = 0; s < kSeeds; ++s) {
    netgen::GenParams p;
    p.seed = static_cast<std::uint64_t>(s);
    const auto g = netgen::generate_device(p);
    sum += g.edge_count();
    v.expect(g.input_node_ids.size() == 64 && g.readout_node_ids.size() == 192,
             "64/192 electrodes at seed " + std::to_string(s));
  }
  const double mean = sum / kSeeds;
  v.note("mean junctions " + fmt("%.1f", mean) + " over 50 seeds (reference 12736, ratio " +
         fmt("%.3f", mean / kReferenceJunctions) + ")");
  v.expect(std::abs(mean / kReferenceJunctions - 1.0) <= 0.2, "junction count within 20%");
}

void circuit_oracle(Verdict& v) {
  std::mt19937_64 rng(77);
  const dynamics::DynParams dp;
  std::uniform_real_distribution<double> lam(-dp.lambda_max, dp.lambda_max), volt(-0.4, 0.8);
  double worst_rel = 0.0, worst_res = 0.0;
  int devices = 0;
  for (std::uint64_t seed = 1000; devices < 100; ++seed) {
    const auto g = netgen::generate_device(testing::small_params(seed));
    if (g.node_count() > 200) continue;
    ++devices;
    std::vector<double> state(g.junctions.size());
    for (auto& x : state) x = lam(rng);
    const auto cond = dynamics::conductance(state, dp);
    std::vector<double> drive(g.input_node_ids.size());
    for (auto& x : drive) x = volt(rng);
    const auto sol = dynamics::solve_network(g, cond, drive);
    const auto ref = testing::dense_node_voltages(g, cond, drive);
    double err = 0.0;
    for (std::size_t i = 0; i < sol.size(); ++i) err = std::max(err, std::abs(sol[i] - ref[i]));
    const double rel = err / std::max(1e-300, max_abs(ref));
    worst_rel = std::max(worst_rel, rel);
    v.expect(rel <= 1e-9, "dense agreement, seed " + std::to_string(seed));

    // Residual relative to the current scale at each node.
    const auto res = dynamics::current_residuals(g, cond, sol);
    std::vector<char> driven(sol.size(), 0);
    for (int id : g.input_node_ids) driven[static_cast<std::size_t>(id)] = 1;
    const double vmax = max_abs(sol);
    for (int n = 0; n < g.node_count(); ++n) {
      if (driven[static_cast<std::size_t>(n)]) continue;
      double gsum = 0.0;
      for (int k = g.adj_offsets[n]; k < g.adj_offsets[n + 1]; ++k) gsum += cond[static_cast<std::size_t>(g.adj_edges[k])];
      if (gsum == 0.0 || vmax == 0.0) continue;
      const double r = std::abs(res[static_cast<std::size_t>(n)]) / (gsum * vmax);
      worst_res = std::max(worst_res, r);
      v.expect(r <= 1e-12, "residual at node " + std::to_string(n) + ", seed " + std::to_string(seed));
    }
  }
  v.note(std::to_string(devices) + " devices, worst relative error " + fmt("%.2e", worst_rel) +
         ", worst residual " + fmt("%.2e", worst_res));
}

void state_equation(Verdict& v) {
  const dynamics::DynParams p;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> lam(-p.lambda_max, p.lambda_max), drive(-2.0, 2.0);
  for (int i = 0; i < 100000; ++i) {
    const double y = dynamics::step_junction(lam(rng), drive(rng), p);
    if (std::abs(y) > p.lambda_max) {
      v.expect(false, "clamp");
      break;
    }
  }
  // Long saturating runs stay clamped too.
  double up = 0.0, down = 0.0;
  for (int i = 0; i < 5000; ++i) {
    up = dynamics::step_junction(up, 3.0, p);
    down = dynamics::step_junction(down, -3.0, p);
    v.expect(std::abs(up) <= p.lambda_max && std::abs(down) <= p.lambda_max, "clamp under sustained drive");
  }
  v.expect(up == p.lambda_max && down == -p.lambda_max, "saturation reached");

  // Dead zone: v_reset <= |V| <= v_set leaves lambda untouched.
  for (double l0 : {0.0, 4e-3, -9e-3, p.lambda_max}) {
    for (double volt : {p.v_reset, -p.v_reset, p.v_set, -p.v_set, 7.5e-3, -6e-3}) {
      double x = l0;
      for (int i = 0; i < 100; ++i) x = dynamics::step_junction(x, volt, p);
      v.expect(x == l0, "dead zone");
    }
  }

  // Decay below v_reset never overshoots zero.
  std::uniform_real_distribution<double> small(-p.v_reset * 0.999, p.v_reset * 0.999);
  for (int i = 0; i < 100000; ++i) {
    const double x = lam(rng);
    const double y = dynamics::step_junction(x, small(rng), p);
    if (!(std::abs(y) <= std::abs(x) && y * x >= 0.0)) {
      v.expect(false, "no overshoot");
      break;
    }
  }
  v.expect(dynamics::step_junction(1e-9, 0.0, p) == 0.0, "tiny state decays to exactly zero");

  // Closed forms at dt = 1e-3.
  dynamics::DynParams q = p;
  q.dt = 1e-3;
  double x = 0.0;
  for (int i = 0; i < 1000; ++i) x = dynamics::step_junction(x, 2e-2, q);
  v.expect(std::abs(x - 1.0e-2) <= 1e-12, "set trajectory");
  const double decay = dynamics::step_junction(1e-2, 0.0, q);
  v.expect(std::abs(decay - 9.95e-3) <= 1e-12, "decay step");
  v.note("set trajectory " + fmt("%.15g", x) + ", decay step " + fmt("%.15g", decay));
}

void pipeline_algebra(Verdict& v, const netgen::DeviceGraph& device) {
  const pipeline::PipelineConfig cfg;
  v.expect(pipeline::normalize_value(0.0, 3000.0) == -0.4, "normalize(0)");
  v.expect(std::abs(pipeline::normalize_value(3000.0, 3000.0) - 0.8) <= 1e-15, "normalize(max)");
  v.expect(std::abs(pipeline::normalize_value(4.0, 4.0) - 0.8) <= 1e-15, "normalize(max) at L1C");

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<float> px(0.0f, 3000.0f);
  Raster tile(128, 128);
  for (auto& x : tile.data) x = px(rng);
  const auto pooled = pipeline::max_pool(tile, 16, 16);
  v.expect(pooled.height == 8 && pooled.width == 8, "pooled shape");
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) {
      float m = -1.0f;
      for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j) m = std::max(m, tile.at(r * 16 + i, c * 16 + j));
      v.expect(pooled.at(r, c) == m, "max pool cell");
    }

  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> a(256), b(256);
    for (auto& x : a) x = u(rng);
    for (auto& x : b) x = u(rng);
    const double d = pipeline::span_norm(a, b);
    v.expect(d >= 0.0, "non-negative");
    v.expect(d == pipeline::span_norm(b, a), "symmetric");
    const double off = u(rng);
    auto a2 = a, b2 = b;
    for (auto& x : a2) x += off;
    for (auto& x : b2) x += off;
    v.expect(std::abs(pipeline::span_norm(a2, b2) - d) <= 1e-12, "offset invariant");
    auto shifted = a;
    const double k = 0.25 * u(rng);
    for (auto& x : shifted) x += k;
    v.expect(std::abs(pipeline::span_norm(a, shifted)) <= 1e-15, "constant difference gives zero");
    v.expect(d > 0.0, "non-constant difference gives positive");
  }

  const auto grid = pipeline::tile_grid(1152, 1296, cfg);
  v.expect(grid.count() == 90 && grid.rows == 9 && grid.cols == 10, "90 tiles");

  std::vector<double> in(64);
  std::uniform_real_distribution<double> drive(-0.4, 0.8);
  for (auto& x : in) x = drive(rng);
  const auto f = pipeline::extract_features(device, in, dynamics::DynParams{});
  v.expect(f.size() == 256, "feature length");
  v.expect(std::equal(in.begin(), in.end(), f.begin()), "feature prefix is the pooled input");
  v.note("90 tiles, feature length " + std::to_string(f.size()));
}

void end_to_end(Verdict& v, const netgen::DeviceGraph& device) {
  testing::ScratchDir dir("acceptance");
  dataio::SynthParams sp = dataio::synth_defaults(Level::raw);
  sp.seed = 20260101;
  const auto manifest = dataio::synth_dataset(sp, 100, 0.02, dir.path() / "dataset");
  v.note("100 granules, " + std::to_string(manifest.event_tiles) + " event tiles (" +
         fmt("%.2f%%", 100.0 * manifest.event_fraction()) + ")");

  const dynamics::DynParams dyn;
  pipeline::Detector detector(device, dyn, pipeline::defaults_for(Level::raw), worker_count());
  std::vector<double> distances;
  std::vector<std::uint8_t> labels;
  int single = 0, single_hit = 0;
  for (const auto& e : manifest.entries) {
    const auto g = dataio::load_granule(e.granule);
    const auto mask = dataio::load_labels(e.labels);
    const auto det = detector.detect(g);
    distances.insert(distances.end(), det.map.distance.begin(), det.map.distance.end());
    labels.insert(labels.end(), mask.grid.begin(), mask.grid.end());
    if (mask.event_count() == 1) {
      ++single;
      const auto argmax = std::max_element(det.map.distance.begin(), det.map.distance.end()) - det.map.distance.begin();
      if (mask.grid[static_cast<std::size_t>(argmax)]) ++single_hit;
    }
  }

  const auto grid = metrics::default_grid(distances);
  const auto sw = metrics::sweep(distances, labels, grid);

  // Baseline: best sweep MCC over shuffled labels.
  double baseline = -1.0;
  std::mt19937_64 rng(31);
  for (int k = 0; k < 20; ++k) {
    auto shuffled = labels;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    baseline = std::max(baseline, metrics::sweep(distances, shuffled, grid).max_mcc());
  }
  const double hit = single ? static_cast<double>(single_hit) / single : 0.0;
  v.note("argmax MCC " + fmt("%.4f", sw.max_mcc()) + " at threshold " + fmt("%.4f", sw.argmax_mcc_threshold) +
         ", best permuted-label MCC " + fmt("%.4f", baseline) + ", argmax tile hit " +
         std::to_string(single_hit) + "/" + std::to_string(single));
  v.expect(sw.max_mcc() > 0.0, "argmax MCC > 0");
  v.expect(sw.max_mcc() > baseline, "argmax MCC beats permuted labels");
  v.expect(single > 0, "dataset has single-hotspot granules");
  v.expect(hit >= 0.95, "argmax tile hit rate >= 95%");
}

void real_granules(const char* manifest_path, const netgen::DeviceGraph& device) {
  const auto manifest = dataio::load_manifest(manifest_path);
  metrics::ConfusionMatrix raw, l1c;
  const dynamics::DynParams dyn;
  for (const auto& e : manifest.entries) {
    const auto g = dataio::load_granule(e.granule);
    const auto det = pipeline::detect_granule(g, device, dyn, pipeline::defaults_for(g.level), worker_count());
    (g.level == Level::raw ? raw : l1c) += metrics::confusion(det.map, dataio::load_labels(e.labels));
  }
  for (auto [name, c, t] : {std::tuple{"raw", raw, 1.68}, std::tuple{"L1C", l1c, 0.92}}) {
    if (c.total() == 0) continue;
    std::cout << "  real granules (" << name << ", threshold " << t << "): tiles " << c.total()
              << ", MCC " << fmt("%.4f", metrics::mcc(c)) << " (reported, no bound)\n";
  }
}

void latency(Verdict& v, const netgen::DeviceGraph& device) {
  std::vector<Granule> granules;
  for (int i = 0; i < 2; ++i) {
    auto sp = dataio::synth_defaults(Level::raw);
    sp.hotspot_count = 2;
    sp.seed = 500 + static_cast<std::uint64_t>(i);
    granules.push_back(dataio::synth_granule(sp).granule);
  }
  metrics::BenchOptions opt;
  opt.runs = 5;
  opt.workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const auto rep = metrics::benchmark(granules, device, dynamics::DynParams{}, pipeline::defaults_for(Level::raw), opt);
  v.note("mean " + fmt("%.3f", rep.mean_seconds) + " s +- " + fmt("%.3f", rep.sem_seconds) +
         " s (SEM) per 1152x1296 granule over 5 runs, " + std::to_string(opt.workers) +
         " worker(s); target machine has 16 cores; peak RSS " + fmt("%.1f MiB", rep.peak_rss_bytes / 1048576.0));
  v.expect(rep.deterministic, "identical distances across runs");
  v.expect(rep.mean_seconds < 3.6, "mean below 3.6 s");
}

void projection(Verdict& v) {
  const auto e = metrics::project_hardware({});
  v.note(fmt("%.6f s", e.seconds) + ", " + fmt("%.4f uJ", e.joules * 1e6));
  v.expect(std::abs(e.seconds - 0.129) <= 1e-3, "seconds");
  v.expect(std::abs(e.joules * 1e6 - 3.225) <= 1e-2, "energy");
}

void reproducibility(Verdict& v, const netgen::DeviceGraph& device) {
  const int n = worker_count();
  for (std::uint64_t seed : {11u, 12u}) {
    auto sp = dataio::synth_defaults(Level::raw);
    sp.height = 512;
    sp.width = 640;
    sp.hotspot_count = 3;
    sp.seed = seed;
    const auto g = dataio::synth_granule(sp).granule;
    for (auto policy : {dynamics::ResetPolicy::per_tile, dynamics::ResetPolicy::persistent}) {
      dynamics::DynParams dyn;
      dyn.reset_policy = policy;
      const auto one = pipeline::detect_granule(g, device, dyn, pipeline::PipelineConfig{}, 1);
      const auto many = pipeline::detect_granule(g, device, dyn, pipeline::PipelineConfig{}, n);
      v.expect(pipeline::serialize_event_map(one.map) == pipeline::serialize_event_map(many.map),
               "event maps at 1 and " + std::to_string(n) + " workers");
    }
  }
  for (std::uint64_t seed : {3u, 4u}) {
    netgen::GenParams p;
    p.seed = seed;
    v.expect(netgen::serialize_device(netgen::generate_device(p)) == netgen::serialize_device(netgen::generate_device(p)),
             "device files for seed " + std::to_string(seed));
  }
  v.note("workers 1 vs " + std::to_string(n) + ", both reset policies");
}

}  // namespace

int main() {
  const auto device = default_device();
  const std::vector<std::pair<std::string, std::function<void(Verdict&)>>> criteria = {
      {"MCC oracle", mcc_oracle},
      {"device scale", device_scale},
      {"circuit oracle", circuit_oracle},
      {"state equation", state_equation},
      {"pipeline algebra", [&](Verdict& v) { pipeline_algebra(v, device); }},
      {"end-to-end synthetic detection", [&](Verdict& v) { end_to_end(v, device); }},
      {"latency envelope", [&](Verdict& v) { latency(v, device); }},
      {"hardware projection", projection},
      {"reproducibility", [&](Verdict& v) { reproducibility(v, device); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      criteria[i].second(v);
    } catch (const std::exception& e) {
      v.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (v.ok() ? "PASS" : "FAIL") << "  " << (i + 1) << ". " << criteria[i].first << "  ["
              << fmt("%.1f s", secs) << "]  " << v.detail() << std::endl;
    if (i == 5) {
      if (const char* m = std::getenv("NWN_THRAWS_MANIFEST")) {
        try {
          real_granules(m, device);
        } catch (const std::exception& e) {
          std::cout << "  real granules: " << e.what() << "\n";
        }
      }
    }
    if (!v.ok()) ++failed;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
