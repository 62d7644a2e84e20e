#include "nwn/benchmark.hpp"

#include <sys/resource.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

namespace nwn::metrics {

std::int64_t peak_rss_bytes() {
  rusage usage{};
  if (getrusage(RUSAGE_SELF, &usage) != 0) return 0;
  return static_cast<std::int64_t>(usage.ru_maxrss) * 1024;  // kilobytes on Linux
}

std::int64_t current_rss_bytes() {
  std::ifstream statm("/proc/self/statm");
  long long pages_total = 0;
  long long pages_resident = 0;
  if (!(statm >> pages_total >> pages_resident)) return 0;
  return static_cast<std::int64_t>(pages_resident) * sysconf(_SC_PAGESIZE);
}

BenchReport benchmark(const std::vector<Granule>& granules, const netgen::DeviceGraph& graph,
                      const dynamics::DynParams& dyn, const pipeline::PipelineConfig& pipe,
                      const BenchOptions& options, const HardwareProjection& projection) {
  if (options.runs < 2) throw MetricsError("benchmark needs at least 2 runs, got " + std::to_string(options.runs));
  if (granules.empty()) throw MetricsError("benchmark needs at least one granule");

  BenchReport report;
  report.runs = options.runs;
  report.workers = options.workers;
  report.projection = projection;
  report.hardware = project_hardware(projection);
  report.baseline_rss_bytes = current_rss_bytes();
  for (const auto& g : granules) report.granule_ids.push_back(g.id);

  pipeline::Detector detector(graph, dyn, pipe, options.workers, options.simulator);
  std::vector<std::vector<double>> first_distances;
  using clock = std::chrono::steady_clock;
  for (int run = 0; run < options.runs; ++run) {
    std::vector<double> seconds;
    for (std::size_t i = 0; i < granules.size(); ++i) {
      const auto start = clock::now();
      const auto detection = detector.detect(granules[i]);
      seconds.push_back(std::chrono::duration<double>(clock::now() - start).count());
      if (run == 0) {
        first_distances.push_back(detection.map.distance);
      } else if (detection.map.distance != first_distances[i]) {
        report.deterministic = false;
      }
    }
    report.run_seconds.push_back(std::move(seconds));
  }

  const auto n = static_cast<double>(granules.size());
  report.per_granule_seconds.assign(granules.size(), 0.0);
  std::vector<double> run_means;
  for (const auto& run : report.run_seconds) {
    for (std::size_t i = 0; i < run.size(); ++i) report.per_granule_seconds[i] += run[i] / options.runs;
    run_means.push_back(std::accumulate(run.begin(), run.end(), 0.0) / n);
  }
  const double r = options.runs;
  report.mean_seconds = std::accumulate(run_means.begin(), run_means.end(), 0.0) / r;
  double ss = 0.0;
  for (double m : run_means) ss += (m - report.mean_seconds) * (m - report.mean_seconds);
  report.sem_seconds = std::sqrt(ss / (r - 1.0)) / std::sqrt(r);
  report.peak_rss_bytes = peak_rss_bytes();
  return report;
}

BenchReport benchmark(const dataio::Manifest& manifest, const netgen::DeviceGraph& graph,
                      const dynamics::DynParams& dyn, const pipeline::PipelineConfig& pipe,
                      const BenchOptions& options, const HardwareProjection& projection) {
  if (options.runs < 2) throw MetricsError("benchmark needs at least 2 runs, got " + std::to_string(options.runs));
  std::vector<Granule> granules;
  for (const auto& e : manifest.entries) granules.push_back(dataio::load_granule(e.granule));
  return benchmark(granules, graph, dyn, pipe, options, projection);
}

nlohmann::json bench_to_json(const BenchReport& r) {
  nlohmann::json per_granule = nlohmann::json::array();
  for (std::size_t i = 0; i < r.granule_ids.size(); ++i)
    per_granule.push_back({{"granule_id", r.granule_ids[i]}, {"mean_seconds", r.per_granule_seconds[i]}});
  return {{"runs", r.runs},
          {"workers", r.workers},
          {"time_seconds_per_granule", {{"mean", r.mean_seconds}, {"sem", r.sem_seconds}}},
          {"per_granule", per_granule},
          {"run_seconds", r.run_seconds},
          {"memory",
           {{"baseline_rss_bytes", r.baseline_rss_bytes},
            {"peak_rss_bytes", r.peak_rss_bytes},
            {"peak_rss_gibibits", r.peak_rss_gibibits()},
            {"peak_rss_gibibytes", r.peak_rss_gibibytes()}}},
          {"deterministic_distances", r.deterministic},
          {"hardware_projection", projection_to_json(r.projection, r.hardware)}};
}

}  // namespace nwn::metrics
