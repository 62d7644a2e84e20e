// Wall-clock and peak-memory measurement of granule detection.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "nwn/dataio.hpp"
#include "nwn/dynamics.hpp"
#include "nwn/metrics.hpp"
#include "nwn/netgen.hpp"
#include "nwn/pipeline.hpp"

namespace nwn::metrics {

/// Peak resident set size of this process so far, in bytes.
std::int64_t peak_rss_bytes();
/// Current resident set size, in bytes (0 if unavailable).
std::int64_t current_rss_bytes();

struct BenchOptions {
  int runs = 5;
  int workers = 1;
  dynamics::SimulatorOptions simulator;
};

struct BenchReport {
  int runs = 0;
  int workers = 0;
  std::vector<std::string> granule_ids;
  std::vector<std::vector<double>> run_seconds;  // [run][granule]
  std::vector<double> per_granule_seconds;       // mean over runs
  double mean_seconds = 0.0;  // mean of the per-run granule means
  double sem_seconds = 0.0;   // standard error of those per-run means
  std::int64_t baseline_rss_bytes = 0;
  std::int64_t peak_rss_bytes = 0;
  bool deterministic = true;  // distances identical in every run
  HardwareEstimate hardware;
  HardwareProjection projection;

  double peak_rss_gibibits() const { return static_cast<double>(peak_rss_bytes) * 8.0 / 1073741824.0; }
  double peak_rss_gibibytes() const { return static_cast<double>(peak_rss_bytes) / 1073741824.0; }
};

/// Loads every granule in the manifest once, then times `runs` serial passes
/// of detection over all of them. Device setup and file loading are outside
/// the timed region.
BenchReport benchmark(const dataio::Manifest& manifest, const netgen::DeviceGraph& graph,
                      const dynamics::DynParams& dyn, const pipeline::PipelineConfig& pipe,
                      const BenchOptions& options, const HardwareProjection& projection = {});

/// Same measurement over granules already in memory.
BenchReport benchmark(const std::vector<Granule>& granules, const netgen::DeviceGraph& graph,
                      const dynamics::DynParams& dyn, const pipeline::PipelineConfig& pipe,
                      const BenchOptions& options, const HardwareProjection& projection = {});

nlohmann::json bench_to_json(const BenchReport& report);

}  // namespace nwn::metrics
