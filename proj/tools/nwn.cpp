// nwn: device generation, dataset synthesis, detection, threshold sweeps,
// benchmarking and scoring from one resolved run configuration.
//
// stdout carries one JSON summary per command; diagnostics go to stderr.
// Exit codes:
//   0 success            4 empty manifest
//   1 runtime failure    5 fewer than 2 bench runs
//   2 invalid parameters 6 granule band missing
//   3 unwritable output  7 device file missing

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "nwn/benchmark.hpp"
#include "nwn/config.hpp"
#include "nwn/dataio.hpp"
#include "nwn/metrics.hpp"
#include "nwn/netgen.hpp"
#include "nwn/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nwn;

namespace {

enum Exit : int {
  kOk = 0,
  kFailure = 1,
  kInvalidParams = 2,
  kUnwritable = 3,
  kEmptyManifest = 4,
  kTooFewRuns = 5,
  kMissingBand = 6,
  kMissingNet = 7,
};

struct CliExit {
  int code;
  std::string message;
};

[[noreturn]] void bail(int code, const std::string& message) { throw CliExit{code, message}; }

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("nwn");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("NWN_LOG");
  spdlog::set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) bail(kUnwritable, "cannot create output directory " + dir.string());
  const fs::path probe = dir / ".nwn-write-probe";
  {
    std::ofstream out(probe);
    if (!out) bail(kUnwritable, "output directory " + dir.string() + " is not writable");
  }
  fs::remove(probe, ec);
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) bail(kUnwritable, "cannot write " + path.string());
  out << text;
  if (!out) bail(kUnwritable, "failed writing " + path.string());
}

void emit(const json& summary) { std::cout << summary.dump() << std::endl; }

// `dir/g0001.granule.json` -> `g0001`.
std::string granule_stem(const fs::path& header) {
  std::string name = header.filename().string();
  for (const std::string suffix : {".granule.json", ".json"}) {
    if (name.size() > suffix.size() && name.ends_with(suffix)) return name.substr(0, name.size() - suffix.size());
  }
  return name;
}

netgen::DeviceGraph load_device(const RunConfig& cfg) {
  if (cfg.paths.net.empty()) {
    spdlog::info("no device file given; generating from gen params (seed {})", cfg.gen.seed);
    return netgen::generate_device(cfg.gen);
  }
  if (!fs::exists(cfg.paths.net)) bail(kMissingNet, "device file " + cfg.paths.net.string() + " does not exist");
  return netgen::read_device(cfg.paths.net);
}

dataio::Manifest load_manifest_or_bail(const fs::path& path) {
  if (path.empty()) bail(kInvalidParams, "no manifest given (--input)");
  if (!fs::exists(path)) bail(kInvalidParams, "manifest " + path.string() + " does not exist");
  auto m = dataio::load_manifest(path);
  if (m.entries.empty()) bail(kEmptyManifest, "manifest " + path.string() + " lists no granules");
  return m;
}

bool is_single_granule(const fs::path& input) { return input.filename().string().ends_with(".granule.json"); }

Granule load_granule_or_bail(const fs::path& header) {
  try {
    return dataio::load_granule(header);
  } catch (const dataio::DataError& e) {
    if (e.code() == dataio::DataErrorCode::missing_band) bail(kMissingBand, e.what());
    throw;
  }
}

// Distances for every manifest entry, plus the matching label grids.
struct Scored {
  std::vector<double> distances;
  std::vector<std::uint8_t> labels;
  std::vector<pipeline::EventMap> maps;
  std::vector<std::string> stems;
};

Scored score_manifest(const dataio::Manifest& m, const netgen::DeviceGraph& graph, const RunConfig& cfg,
                      const json& echo) {
  pipeline::Detector detector(graph, cfg.dyn, cfg.pipe, cfg.workers, cfg.solver);
  Scored s;
  for (const auto& e : m.entries) {
    const Granule g = load_granule_or_bail(e.granule);
    auto det = detector.detect(g);
    det.map.config = echo;
    const auto labels = dataio::load_labels(e.labels);
    dataio::check_label_dims(labels, {det.map.rows, det.map.cols});
    s.distances.insert(s.distances.end(), det.map.distance.begin(), det.map.distance.end());
    s.labels.insert(s.labels.end(), labels.grid.begin(), labels.grid.end());
    s.stems.push_back(granule_stem(e.granule));
    s.maps.push_back(std::move(det.map));
    spdlog::info("scored {}", s.stems.back());
  }
  return s;
}

// ---------------------------------------------------------------------------

int cmd_gen_net(const RunConfig& cfg) {
  const fs::path out = cfg.paths.output.empty() ? fs::path("device.json") : cfg.paths.output;
  const auto graph = netgen::generate_device(cfg.gen);
  write_file(out, netgen::serialize_device(graph));
  long long ww = 0;
  for (const auto& j : graph.junctions) ww += j.kind == netgen::JunctionKind::wire_wire;
  emit({{"path", out.generic_string()},
        {"wires", graph.wires.size()},
        {"electrodes", graph.electrodes.size()},
        {"inputs", graph.input_node_ids.size()},
        {"readouts", graph.readout_node_ids.size()},
        {"nodes", graph.node_count()},
        {"edges", graph.edge_count()},
        {"junctions", graph.junctions.size()},
        {"wire_wire_junctions", ww},
        {"wire_electrode_junctions", static_cast<long long>(graph.junctions.size()) - ww},
        {"components", graph.component_count}});
  return kOk;
}

int cmd_synth(const RunConfig& cfg) {
  const fs::path dir = cfg.paths.output.empty() ? fs::path("dataset") : cfg.paths.output;
  ensure_dir(dir);
  dataio::SynthParams params = cfg.synth;
  params.level = cfg.level;
  const auto m = dataio::synth_dataset(params, cfg.synth_count, cfg.synth_event_fraction, dir);
  emit({{"manifest", (dir / "manifest.json").generic_string()},
        {"count", m.entries.size()},
        {"event_tiles", m.event_tiles},
        {"non_event_tiles", m.non_event_tiles},
        {"event_fraction", m.event_fraction()}});
  return kOk;
}

int cmd_detect(const RunConfig& cfg, const json& echo, bool distance_blob) {
  if (cfg.paths.input.empty()) bail(kInvalidParams, "no input given (--input granule or manifest)");
  const fs::path dir = cfg.paths.output.empty() ? fs::path("events") : cfg.paths.output;
  std::vector<fs::path> headers;
  if (is_single_granule(cfg.paths.input)) {
    if (!fs::exists(cfg.paths.input)) bail(kInvalidParams, "granule " + cfg.paths.input.string() + " does not exist");
    headers.push_back(cfg.paths.input);
  } else {
    for (const auto& e : load_manifest_or_bail(cfg.paths.input).entries) headers.push_back(e.granule);
  }
  const auto graph = load_device(cfg);
  ensure_dir(dir);
  pipeline::Detector detector(graph, cfg.dyn, cfg.pipe, cfg.workers, cfg.solver);
  json written = json::array();
  long long events = 0;
  for (const auto& h : headers) {
    const Granule g = load_granule_or_bail(h);
    auto det = detector.detect(g);
    det.map.config = echo;
    const std::string stem = granule_stem(h);
    const fs::path path = dir / (stem + ".events.json");
    write_file(path, pipeline::serialize_event_map(det.map));
    if (distance_blob) pipeline::write_distance_blob(det.map, dir / (stem + ".distances.f64"));
    for (auto p : det.map.predicted) events += p;
    written.push_back(path.generic_string());
    spdlog::info("{}: {}x{} tiles", stem, det.map.rows, det.map.cols);
  }
  emit({{"event_maps", written}, {"predicted_events", events}});
  return kOk;
}

int cmd_sweep(const RunConfig& cfg, const json& echo, const std::vector<double>& explicit_grid, int grid_count) {
  const auto m = load_manifest_or_bail(cfg.paths.input);
  const auto graph = load_device(cfg);
  const fs::path dir = cfg.paths.output.empty() ? fs::path("sweep") : cfg.paths.output;
  ensure_dir(dir);
  const Scored s = score_manifest(m, graph, cfg, echo);
  const std::vector<double> grid = explicit_grid.empty() ? metrics::default_grid(s.distances, grid_count) : explicit_grid;
  const auto result = metrics::sweep(s.distances, s.labels, grid);
  json doc = {{"config", echo},
              {"granules", s.stems},
              {"tiles", s.distances.size()},
              {"event_tiles", std::count(s.labels.begin(), s.labels.end(), std::uint8_t{1})},
              {"sweep", metrics::sweep_to_json(result)}};
  write_file(dir / "sweep.json", doc.dump(1) + "\n");
  write_file(dir / "sweep.csv", metrics::sweep_to_csv(result));
  emit({{"sweep", (dir / "sweep.json").generic_string()},
        {"argmax_mcc_threshold", result.argmax_mcc_threshold},
        {"max_mcc", result.max_mcc()}});
  return kOk;
}

int cmd_bench(const RunConfig& cfg, const json& echo, int runs) {
  if (runs < 2) bail(kTooFewRuns, "bench needs --runs >= 2, got " + std::to_string(runs));
  const auto m = load_manifest_or_bail(cfg.paths.input);
  const auto graph = load_device(cfg);
  const fs::path out = cfg.paths.output.empty() ? fs::path("bench.json") : cfg.paths.output;
  if (out.has_parent_path()) ensure_dir(out.parent_path());
  std::vector<Granule> granules;
  for (const auto& e : m.entries) granules.push_back(load_granule_or_bail(e.granule));
  metrics::BenchOptions options{runs, cfg.workers, cfg.solver};
  const auto report = metrics::benchmark(granules, graph, cfg.dyn, cfg.pipe, options, cfg.hardware);

  // The same projection with the tile duration implied by the dynamics
  // parameters and the actual tiling.
  metrics::HardwareProjection from_dyn = cfg.hardware;
  from_dyn.simulated_seconds_per_tile = cfg.dyn.simulated_seconds_per_tile();
  const auto grid = pipeline::tile_grid(granules[0].height, granules[0].width, cfg.pipe);
  from_dyn.tiles_per_granule = grid.count();

  json doc = metrics::bench_to_json(report);
  doc["hardware_projection_from_dyn"] = metrics::projection_to_json(from_dyn, metrics::project_hardware(from_dyn));
  doc["config"] = echo;
  write_file(out, doc.dump(1) + "\n");
  emit({{"report", out.generic_string()},
        {"mean_seconds_per_granule", report.mean_seconds},
        {"sem_seconds", report.sem_seconds},
        {"peak_rss_bytes", report.peak_rss_bytes},
        {"hardware_seconds_per_granule", report.hardware.seconds},
        {"hardware_joules_per_granule", report.hardware.joules}});
  return kOk;
}

int cmd_eval(const RunConfig& cfg, const fs::path& events, const fs::path& labels, const fs::path& events_dir) {
  metrics::ConfusionMatrix total;
  json per_granule = json::array();
  auto score = [&](const fs::path& ev, const fs::path& lab, const std::string& name) {
    if (!fs::exists(ev)) bail(kInvalidParams, "event map " + ev.string() + " does not exist");
    const auto map = pipeline::read_event_map(ev);
    const auto mask = dataio::load_labels(lab);
    const auto c = metrics::confusion(map, mask);
    total += c;
    json entry = metrics::scores_to_json(c);
    entry["granule"] = name;
    per_granule.push_back(std::move(entry));
  };
  if (!events.empty()) {
    if (labels.empty()) bail(kInvalidParams, "--events needs --labels");
    score(events, labels, events.filename().string());
  } else {
    const auto m = load_manifest_or_bail(cfg.paths.input);
    if (events_dir.empty()) bail(kInvalidParams, "manifest evaluation needs --events-dir");
    for (const auto& e : m.entries) {
      const std::string stem = granule_stem(e.granule);
      score(events_dir / (stem + ".events.json"), e.labels, stem);
    }
  }
  json doc = metrics::scores_to_json(total);
  doc["granules"] = per_granule;
  if (!cfg.paths.output.empty()) write_file(cfg.paths.output, doc.dump(1) + "\n");
  json summary = metrics::scores_to_json(total);
  emit(summary);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Nanowire-network thermal anomaly detection toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string out;
  std::string input;
  std::string net;
  std::optional<std::string> level;
  app.add_option("--config", config_path, "Run configuration JSON")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Seed for device generation and synthesis");
  app.add_option("--workers", workers, "Worker threads for detection");
  app.add_option("--out", out, "Output file or directory");
  app.add_option("--level", level, "Data level: raw or l1c");

  auto* gen = app.add_subcommand("gen-net", "Generate a device and write its JSON description");

  auto* synth = app.add_subcommand("synth", "Write a labelled synthetic dataset and manifest");
  std::optional<int> count;
  std::optional<double> fraction;
  synth->add_option("--count", count, "Number of granules");
  synth->add_option("--event-fraction", fraction, "Target fraction of event tiles");

  auto* detect = app.add_subcommand("detect", "Write an event map per granule");
  bool blob = false;
  detect->add_option("--input", input, "Granule header (*.granule.json) or manifest");
  detect->add_option("--net", net, "Device file from gen-net");
  detect->add_flag("--distance-blob", blob, "Also write raw f64 distance matrices");

  auto* sweep = app.add_subcommand("sweep", "Sweep thresholds over a labelled dataset");
  std::vector<double> thresholds;
  int grid_count = 200;
  sweep->add_option("--input", input, "Manifest");
  sweep->add_option("--net", net, "Device file from gen-net");
  sweep->add_option("--thresholds", thresholds, "Explicit ascending threshold grid")->delimiter(',');
  sweep->add_option("--grid-count", grid_count, "Thresholds in the default grid")->check(CLI::PositiveNumber);

  auto* bench = app.add_subcommand("bench", "Time detection over a dataset");
  int runs = 5;
  bench->add_option("--input", input, "Manifest");
  bench->add_option("--net", net, "Device file from gen-net");
  bench->add_option("--runs", runs, "Timed passes over the dataset (>= 2)");

  auto* eval = app.add_subcommand("eval", "Score existing event maps against labels");
  std::string events;
  std::string labels;
  std::string events_dir;
  eval->add_option("--events", events, "Single event map");
  eval->add_option("--labels", labels, "Label mask for --events");
  eval->add_option("--input", input, "Manifest (with --events-dir)");
  eval->add_option("--events-dir", events_dir, "Directory of <stem>.events.json files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalidParams;
  }

  try {
    json doc = json::object();
    if (!config_path.empty()) {
      std::ifstream in(config_path, std::ios::binary);
      try {
        doc = json::parse(in);
      } catch (const json::exception& e) {
        throw ConfigError(config_path + ": " + e.what());
      }
    }
    // Level-dependent defaults apply to every field the file leaves out.
    if (level) doc["level"] = *level;
    RunConfig cfg = run_config_from_json(doc);
    if (seed) {
      cfg.gen.seed = *seed;
      cfg.synth.seed = *seed;
    }
    if (workers) cfg.workers = *workers;
    if (!out.empty()) cfg.paths.output = out;
    if (!input.empty()) cfg.paths.input = input;
    if (!net.empty()) cfg.paths.net = net;
    if (count) cfg.synth_count = *count;
    if (fraction) cfg.synth_event_fraction = *fraction;
    cfg.validate();

    // Outputs carry the resolved configuration minus paths, so identical
    // runs into different directories stay byte-identical.
    json echo = run_config_to_json(cfg);
    echo.erase("paths");
    echo.erase("workers");

    if (*gen) return cmd_gen_net(cfg);
    if (*synth) return cmd_synth(cfg);
    if (*detect) return cmd_detect(cfg, echo, blob);
    if (*sweep) return cmd_sweep(cfg, echo, thresholds, grid_count);
    if (*bench) return cmd_bench(cfg, echo, runs);
    if (*eval) return cmd_eval(cfg, events, labels, events_dir);
    return kInvalidParams;
  } catch (const CliExit& e) {
    spdlog::error("{}", e.message);
    return e.code;
  } catch (const ConfigError& e) {
    spdlog::error("invalid parameters: {}", e.what());
    return kInvalidParams;
  } catch (const dataio::DataError& e) {
    spdlog::error("{}", e.what());
    switch (e.code()) {
      case dataio::DataErrorCode::missing_band: return kMissingBand;
      case dataio::DataErrorCode::invalid_params:
      case dataio::DataErrorCode::hotspot_overflow: return kInvalidParams;
      default: return kFailure;
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kFailure;
  }
}
