#include "nwn/config.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

namespace nwn {

using nlohmann::json;

void RunConfig::validate() const {
  auto check = [](const char* section, auto&& f) {
    try {
      f();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(std::string(section) + ": " + e.what());
    }
  };
  check("gen", [&] { gen.validate(); });
  check("dyn", [&] { dyn.validate(); });
  check("pipe", [&] { pipe.validate(); });
  check("solver", [&] {
    if (!(solver.rel_tol > 0.0)) throw ConfigError("rel_tol must be positive");
    if (solver.max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
    if (solver.refresh_iterations < 0) throw ConfigError("refresh_iterations must be >= 0");
  });
  check("synth", [&] {
    dataio::SynthParams s = synth;
    s.level = level;
    s.validate();
    if (synth_count < 0) throw ConfigError("count must be non-negative");
    if (!(synth_event_fraction >= 0.0) || synth_event_fraction > 1.0)
      throw ConfigError("event_fraction must lie in [0, 1]");
  });
  check("hardware", [&] { hardware.validate(); });
  if (workers < 1) throw ConfigError("workers must be >= 1, got " + std::to_string(workers));
}

namespace {

json solver_to_json(const dynamics::SimulatorOptions& s) {
  return {{"mode", s.mode == dynamics::SolveMode::direct ? "direct" : "iterative"},
          {"rel_tol", s.rel_tol},
          {"max_iterations", s.max_iterations},
          {"refresh_iterations", s.refresh_iterations}};
}

dynamics::SimulatorOptions solver_from_json(const json& j) {
  dynamics::SimulatorOptions s;
  const auto mode = j.value("mode", std::string("iterative"));
  if (mode == "direct") {
    s.mode = dynamics::SolveMode::direct;
  } else if (mode != "iterative") {
    throw ConfigError("solver.mode must be 'direct' or 'iterative', got '" + mode + "'");
  }
  s.rel_tol = j.value("rel_tol", s.rel_tol);
  s.max_iterations = j.value("max_iterations", s.max_iterations);
  s.refresh_iterations = j.value("refresh_iterations", s.refresh_iterations);
  return s;
}

}  // namespace

json run_config_to_json(const RunConfig& c) {
  json synth = dataio::synth_params_to_json(c.synth);
  synth.erase("level");
  synth["count"] = c.synth_count;
  synth["event_fraction"] = c.synth_event_fraction;
  return {{"level", level_name(c.level)},
          {"gen", netgen::params_to_json(c.gen)},
          {"dyn", dynamics::params_to_json(c.dyn)},
          {"pipe", pipeline::config_to_json(c.pipe)},
          {"solver", solver_to_json(c.solver)},
          {"synth", synth},
          {"hardware",
           {{"simulated_seconds_per_tile", c.hardware.simulated_seconds_per_tile},
            {"tiles_per_granule", c.hardware.tiles_per_granule},
            {"device_power", c.hardware.device_power}}},
          {"paths",
           {{"input", c.paths.input.generic_string()},
            {"net", c.paths.net.generic_string()},
            {"output", c.paths.output.generic_string()}}},
          {"workers", c.workers}};
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  static const std::set<std::string> known = {"level", "gen",      "dyn",   "pipe",   "solver",
                                              "synth", "hardware", "paths", "workers"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  try {
    RunConfig c;
    if (j.contains("level")) {
      const auto name = j.at("level").get<std::string>();
      const auto level = level_from_name(name);
      if (!level) throw ConfigError("level must be 'raw' or 'l1c', got '" + name + "'");
      c.level = *level;
    }
    c.pipe = pipeline::defaults_for(c.level);
    c.synth = dataio::synth_defaults(c.level);
    const json empty = json::object();
    auto section = [&](const char* key) -> const json& { return j.contains(key) ? j.at(key) : empty; };
    c.gen = netgen::params_from_json(section("gen"));
    c.dyn = dynamics::params_from_json(section("dyn"));
    c.pipe = pipeline::config_from_json(section("pipe"), c.pipe);
    c.solver = solver_from_json(section("solver"));
    const json& synth = section("synth");
    c.synth = dataio::synth_params_from_json(synth, c.synth);
    c.synth.level = c.level;
    c.synth_count = synth.value("count", c.synth_count);
    c.synth_event_fraction = synth.value("event_fraction", c.synth_event_fraction);
    const json& hw = section("hardware");
    c.hardware.simulated_seconds_per_tile = hw.value("simulated_seconds_per_tile", c.hardware.simulated_seconds_per_tile);
    c.hardware.tiles_per_granule = hw.value("tiles_per_granule", c.hardware.tiles_per_granule);
    c.hardware.device_power = hw.value("device_power", c.hardware.device_power);
    const json& paths = section("paths");
    c.paths.input = paths.value("input", std::string());
    c.paths.net = paths.value("net", std::string());
    c.paths.output = paths.value("output", std::string());
    c.workers = j.value("workers", c.workers);
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed run config: ") + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace nwn
