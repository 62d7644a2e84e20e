#include <doctest.h>

#include <fstream>

#include <nlohmann/json.hpp>

#include "nwn/config.hpp"
#include "support.hpp"

using namespace nwn;
using nlohmann::json;

TEST_SUITE("config") {
  TEST_CASE("defaults are valid and round trip") {
    const RunConfig c;
    CHECK_NOTHROW(c.validate());
    const auto j = run_config_to_json(c);
    for (const char* key : {"level", "gen", "dyn", "pipe", "solver", "synth", "hardware", "paths", "workers"})
      CHECK(j.contains(key));
    CHECK(run_config_to_json(run_config_from_json(j)) == j);
    CHECK(run_config_to_json(run_config_from_json(json::object())) == j);
  }

  TEST_CASE("sparse documents overlay defaults") {
    const auto c = run_config_from_json(json{{"gen", {{"seed", 9}}}, {"dyn", {{"steps_per_tile", 3}}}, {"workers", 4}});
    CHECK(c.gen.seed == 9);
    CHECK(c.gen.wire_count == 1520);
    CHECK(c.dyn.steps_per_tile == 3);
    CHECK(c.dyn.dt == 1e-4);
    CHECK(c.workers == 4);
    CHECK(c.pipe.threshold == 1.68);
  }

  TEST_CASE("level selects pipeline and synthesis defaults") {
    const auto c = run_config_from_json(json{{"level", "l1c"}});
    CHECK(c.level == Level::l1c);
    CHECK(c.pipe.threshold == 0.92);
    CHECK(c.pipe.band(BandId::b8a).norm_max == 4.0);
    CHECK(c.synth.level == Level::l1c);
    CHECK(c.synth.b12.mean < 2.0);
    CHECK_NOTHROW(c.validate());
    const auto o = run_config_from_json(json{{"level", "l1c"}, {"pipe", {{"threshold", 0.5}}}});
    CHECK(o.pipe.threshold == 0.5);
    CHECK(o.pipe.band(BandId::b12).norm_max == 2.0);
  }

  TEST_CASE("invalid documents") {
    CHECK_THROWS_AS(run_config_from_json(json{{"gen", {{"seed", 1}}}, {"pipes", json::object()}}), ConfigError);
    CHECK_THROWS_AS(run_config_from_json(json{{"level", "l2a"}}), ConfigError);
    CHECK_THROWS_AS(run_config_from_json(json{{"gen", {{"wire_count", "many"}}}}), ConfigError);
    CHECK_THROWS_AS(run_config_from_json(json::array()), ConfigError);
    CHECK_THROWS_AS(run_config_from_json(json{{"solver", {{"mode", "magic"}}}}), ConfigError);

    auto c = run_config_from_json(json{{"gen", {{"grid_n", 15}}}});
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("divisible"), ConfigError);
    c = RunConfig{};
    c.workers = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = RunConfig{};
    c.dyn.v_reset = 1.0;
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("dyn"), ConfigError);
    c = RunConfig{};
    c.synth_event_fraction = 2.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = RunConfig{};
    c.hardware.device_power = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("config files") {
    testing::ScratchDir dir("config");
    std::ofstream(dir / "run.json") << R"({"level": "raw", "pipe": {"tile_size": 64, "pool_size": 8, "pool_stride": 8}})";
    const auto c = load_run_config(dir / "run.json");
    CHECK(c.pipe.tile_size == 64);
    CHECK(c.pipe.pooled_side() == 8);
    std::ofstream(dir / "bad.json") << "{";
    CHECK_THROWS_AS(load_run_config(dir / "bad.json"), ConfigError);
    CHECK_THROWS_AS(load_run_config(dir / "none.json"), ConfigError);
  }
}
