// Run configuration: one JSON document holding every tunable of a run.
// Keys absent from the file keep their defaults, so a config may be sparse.
#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "nwn/dataio.hpp"
#include "nwn/dynamics.hpp"
#include "nwn/metrics.hpp"
#include "nwn/netgen.hpp"
#include "nwn/pipeline.hpp"

namespace nwn {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunPaths {
  std::filesystem::path input;   // granule header or manifest
  std::filesystem::path net;     // device file
  std::filesystem::path output;  // file or directory, per command
};

struct RunConfig {
  Level level = Level::raw;
  netgen::GenParams gen;
  dynamics::DynParams dyn;
  pipeline::PipelineConfig pipe;  // defaults follow `level`
  dynamics::SimulatorOptions solver;
  dataio::SynthParams synth;
  int synth_count = 5;
  double synth_event_fraction = 0.02;
  metrics::HardwareProjection hardware;
  RunPaths paths;
  int workers = 1;

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
};

nlohmann::json run_config_to_json(const RunConfig& c);
/// Overlays the document on defaults. Unknown top-level keys are rejected so
/// typos do not silently fall back to defaults.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace nwn
