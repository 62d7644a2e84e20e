#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "nwn/dataio.hpp"
#include "support.hpp"

using namespace nwn;
using namespace nwn::dataio;
namespace fs = std::filesystem;

namespace {

template <class F>
DataErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const DataError& e) {
    return e.code();
  }
  FAIL("expected a DataError");
  return DataErrorCode::io;
}

Granule small_granule() {
  Granule g;
  g.id = "tiny";
  g.level = Level::l1c;
  g.height = 3;
  g.width = 5;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0.0f, 2.0f);
  for (BandId b : kBands) {
    Raster r(3, 5);
    for (auto& v : r.data) v = u(rng);
    g.bands[b] = r;
  }
  g.bands[BandId::b12].data[4] = 1.0f / 3.0f;
  g.bands[BandId::b8a].data[0] = 0.0f;
  g.metadata = {{"source", "unit"}};
  return g;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(testing::read_file(p)); }

void write_json(const fs::path& p, const nlohmann::json& j) { std::ofstream(p) << j.dump(); }

}  // namespace

TEST_SUITE("dataio") {
  TEST_CASE("granule round trip is bit exact") {
    testing::ScratchDir dir("dataio");
    const auto g = small_granule();
    const auto header = dir / "tiny.granule.json";
    save_granule(g, header);
    CHECK(fs::exists(dir / "tiny.granule.bin"));
    CHECK(blob_path_for(header) == dir / "tiny.granule.bin");
    CHECK(fs::file_size(dir / "tiny.granule.bin") == 2 * 15 * 4);
    const auto back = load_granule(header);
    CHECK(back.id == "tiny");
    CHECK(back.level == Level::l1c);
    CHECK(back.height == 3);
    CHECK(back.width == 5);
    CHECK(back.bands == g.bands);
    CHECK(back.metadata == g.metadata);

    const auto h = read_json(header);
    REQUIRE(h.at("bands").size() == 2);
    CHECK(h.at("bands")[0].at("dtype") == "f32le");
    CHECK(h.at("bands")[0].at("offset") == 0);
    CHECK(h.at("bands")[1].at("offset") == 60);
    CHECK(h.at("bands")[1].at("byte_length") == 60);
    // Little-endian f32 row-major: read the first B8A pixel back by hand.
    const auto blob = testing::read_file(dir / "tiny.granule.bin");
    const std::string first_band = h.at("bands")[0].at("band_id");
    const auto& ref = g.bands.at(*band_from_name(first_band));
    float v = 0.0f;
    const unsigned char* bytes = reinterpret_cast<const unsigned char*>(blob.data()) + 4 * 7;
    std::uint32_t bits = bytes[0] | (bytes[1] << 8) | (bytes[2] << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
    std::memcpy(&v, &bits, 4);
    CHECK(v == ref.at(1, 2));
  }

  TEST_CASE("granule loading errors carry distinct codes") {
    testing::ScratchDir dir("dataio");
    const auto header = dir / "x.granule.json";
    save_granule(small_granule(), header);
    const auto blob = dir / "x.granule.bin";
    const auto original = read_json(header);

    fs::resize_file(blob, fs::file_size(blob) - 1);
    CHECK(code_of([&] { load_granule(header); }) == DataErrorCode::length_mismatch);
    save_granule(small_granule(), header);

    auto h = original;
    h["bands"][1]["dtype"] = "f16be";
    write_json(header, h);
    CHECK(code_of([&] { load_granule(header); }) == DataErrorCode::unknown_dtype);

    h = original;
    h["bands"].erase(1);
    write_json(header, h);
    CHECK(code_of([&] { load_granule(header); }) == DataErrorCode::missing_band);

    h = original;
    h["bands"][0]["byte_length"] = 56;
    write_json(header, h);
    CHECK(code_of([&] { load_granule(header); }) == DataErrorCode::length_mismatch);

    CHECK(code_of([&] { load_granule(dir / "absent.granule.json"); }) == DataErrorCode::io);
    std::ofstream(header) << "{ not json";
    CHECK(code_of([&] { load_granule(header); }) == DataErrorCode::parse);

    auto g = small_granule();
    g.bands.erase(BandId::b8a);
    CHECK(code_of([&] { save_granule(g, header); }) == DataErrorCode::missing_band);
    g = small_granule();
    g.bands[BandId::b12] = Raster(2, 5);
    CHECK(code_of([&] { save_granule(g, header); }) == DataErrorCode::dims_mismatch);
  }

  TEST_CASE("negative or non-finite pixels are rejected on load") {
    testing::ScratchDir dir("dataio");
    auto g = small_granule();
    g.bands[BandId::b12].data[2] = -1.0f;
    const auto header = dir / "neg.granule.json";
    save_granule(g, header);
    CHECK_THROWS_AS(load_granule(header), DataError);
    g.bands[BandId::b12].data[2] = NAN;
    save_granule(g, header);
    CHECK_THROWS_AS(load_granule(header), DataError);
  }

  TEST_CASE("labels round trip and dimension checks") {
    testing::ScratchDir dir("dataio");
    LabelMask zero(9, 10);
    write_labels(zero, dir / "z.labels.json");
    CHECK(load_labels(dir / "z.labels.json") == zero);

    LabelMask m(9, 10);
    m.grid[13] = 1;
    m.grid[89] = 1;
    m.event_pixel_counts = std::vector<int>(90, 0);
    (*m.event_pixel_counts)[13] = 40;
    (*m.event_pixel_counts)[89] = 9;
    write_labels(m, dir / "m.labels.json");
    const auto back = load_labels(dir / "m.labels.json");
    CHECK(back == m);
    CHECK(back.event_count() == 2);
    CHECK(back.at(1, 3));

    const pipeline::TileGrid grid = pipeline::tile_grid(1152, 1296, pipeline::PipelineConfig{});
    CHECK_NOTHROW(check_label_dims(back, grid));
    CHECK(code_of([&] { check_label_dims(LabelMask(8, 10), grid); }) == DataErrorCode::dims_mismatch);

    auto j = labels_to_json(m);
    j["rows"] = 8;
    CHECK(code_of([&] { labels_from_json(j); }) == DataErrorCode::dims_mismatch);
    j = labels_to_json(m);
    j["grid"][0][0] = 2;
    CHECK(code_of([&] { labels_from_json(j); }) == DataErrorCode::parse);
  }

  TEST_CASE("labelling follows the nine pixel rule") {
    // Radius 10 disk: 317 pixels, all inside tile (3, 4).
    const auto mask = labels_from_hotspots({{3 * 128 + 60.0, 4 * 128 + 70.0, 10.0}}, 1152, 1296, 128, 9);
    CHECK(mask.rows == 9);
    CHECK(mask.cols == 10);
    CHECK(mask.event_count() == 1);
    CHECK(mask.at(3, 4));
    CHECK((*mask.event_pixel_counts)[34] == 317);

    // A radius 1.5 disk holds 9 pixels; radius 1.4 holds 5.
    CHECK(labels_from_hotspots({{200.0, 200.0, 1.5}}, 1152, 1296, 128, 9).event_count() == 1);
    CHECK(labels_from_hotspots({{200.0, 200.0, 1.4}}, 1152, 1296, 128, 9).event_count() == 0);

    // A disk straddling a tile border counts pixels per tile.
    const auto split = labels_from_hotspots({{64.0, 128.0, 3.0}}, 1152, 1296, 128, 9);
    CHECK((*split.event_pixel_counts)[0] == 11);
    CHECK((*split.event_pixel_counts)[1] == 18);
    CHECK(split.at(0, 0));
    CHECK(split.at(0, 1));
  }

  TEST_CASE("synthetic granules") {
    SynthParams p;
    p.seed = 3;
    const auto none = synth_granule(p);
    CHECK(none.labels.event_count() == 0);
    CHECK(none.granule.height == 1152);
    CHECK(none.granule.bands.size() == 2);

    p.hotspots = std::vector<Hotspot>{{3 * 128 + 64.0, 4 * 128 + 64.0, 10.0}};
    const auto one = synth_granule(p);
    CHECK(one.labels.event_count() == 1);
    CHECK(one.labels.at(3, 4));
    // Hotspot pixels sit above background by the configured amplitude.
    const auto& b12 = one.granule.bands.at(BandId::b12);
    const auto& bg = none.granule.bands.at(BandId::b12);
    CHECK(b12.at(3 * 128 + 64, 4 * 128 + 64) == doctest::Approx(bg.at(3 * 128 + 64, 4 * 128 + 64) + 500.0f));
    CHECK(b12.at(0, 0) == bg.at(0, 0));
    CHECK(labels_from_metadata(one.granule, 128) == one.labels);

    p.hotspots.reset();
    p.hotspot_count = 7;
    const auto seven = synth_granule(p);
    CHECK(seven.hotspots.size() == 7);
    CHECK(seven.labels.event_count() == 7);
    CHECK(labels_from_metadata(seven.granule, 128) == seven.labels);
    const auto again = synth_granule(p);
    CHECK(again.granule.bands == seven.granule.bands);
  }

  TEST_CASE("background moments match the noise model for every seed") {
    SynthParams p;
    p.height = 256;
    p.width = 256;
    std::vector<float> first;
    for (std::uint64_t seed : {1u, 2u}) {
      p.seed = seed;
      const auto s = synth_granule(p);
      for (BandId b : kBands) {
        const auto& noise = b == BandId::b8a ? p.b8a : p.b12;
        const auto& d = s.granule.bands.at(b).data;
        double sum = 0, sq = 0;
        for (float v : d) {
          sum += v;
          sq += static_cast<double>(v) * v;
        }
        const double mean = sum / d.size();
        const double sd = std::sqrt(sq / d.size() - mean * mean);
        CHECK(std::abs(mean - noise.mean) <= 4.0 * noise.std / 256.0);
        CHECK(std::abs(sd / noise.std - 1.0) <= 0.02);
      }
      if (first.empty()) {
        first = s.granule.bands.at(BandId::b12).data;
      } else {
        CHECK(first != s.granule.bands.at(BandId::b12).data);
      }
    }
  }

  TEST_CASE("synthesis parameter checks") {
    SynthParams p;
    p.hotspots = std::vector<Hotspot>{{2.0, 2.0, 5.0}};
    CHECK(code_of([&] { p.validate(); }) == DataErrorCode::hotspot_overflow);
    p.hotspots.reset();
    p.hotspot_count = 91;
    CHECK(code_of([&] { p.validate(); }) == DataErrorCode::hotspot_overflow);
    p = {};
    p.b12_amplitude = 2500.0;  // 1000 + 2500 > 3000
    CHECK(code_of([&] { p.validate(); }) == DataErrorCode::invalid_params);
    p = {};
    p.radius_min = 0.0;
    CHECK(code_of([&] { p.validate(); }) == DataErrorCode::invalid_params);
    p = synth_defaults(Level::l1c);
    CHECK_NOTHROW(p.validate());
    CHECK(p.b12_amplitude == doctest::Approx(5.0 * p.b12.std));
    CHECK(p.b8a_amplitude == doctest::Approx(1.5 * p.b8a.std));
    p.b12_amplitude = 2.0;
    CHECK(code_of([&] { p.validate(); }) == DataErrorCode::invalid_params);
    const auto raw = synth_defaults(Level::raw);
    CHECK(raw.b12_amplitude == doctest::Approx(5.0 * raw.b12.std));
    CHECK(raw.b8a_amplitude == doctest::Approx(1.5 * raw.b8a.std));

    auto j = synth_params_to_json(raw);
    CHECK(synth_params_to_json(synth_params_from_json(j)) == j);
  }

  TEST_CASE("datasets and manifests") {
    testing::ScratchDir dir("dataio");
    SynthParams p;
    p.height = 256;
    p.width = 384;
    p.seed = 40;
    const auto m = synth_dataset(p, 4, 0.25, dir / "ds");
    REQUIRE(m.entries.size() == 4);
    CHECK(m.event_tiles + m.non_event_tiles == 24);
    CHECK(m.event_tiles == 6);
    CHECK(m.event_fraction() == doctest::Approx(0.25));
    const auto loaded = load_manifest(dir / "ds" / "manifest.json");
    REQUIRE(loaded.entries.size() == 4);
    CHECK(loaded.event_tiles == 6);
    for (const auto& e : loaded.entries) {
      CHECK(fs::exists(e.granule));
      const auto g = load_granule(e.granule);
      CHECK(labels_from_metadata(g, 128) == load_labels(e.labels));
    }
    CHECK(load_granule(loaded.entries[2].granule).id == "g0002");
    const auto doc = read_json(dir / "ds" / "manifest.json");
    CHECK(fs::path(doc.at("entries")[0].at("granule").get<std::string>()).is_relative());

    // Same base seed, same bytes.
    synth_dataset(p, 4, 0.25, dir / "again");
    CHECK(testing::read_file(dir / "ds" / "g0001.granule.bin") == testing::read_file(dir / "again" / "g0001.granule.bin"));

    const auto empty = synth_dataset(p, 0, 0.02, dir / "empty");
    CHECK(empty.entries.empty());
    CHECK(load_manifest(dir / "empty" / "manifest.json").entries.empty());

    fs::remove(dir / "ds" / "g0003.labels.json");
    CHECK(code_of([&] { load_manifest(dir / "ds" / "manifest.json"); }) == DataErrorCode::io);
    CHECK(code_of([&] { synth_dataset(p, -1, 0.02, dir / "bad"); }) == DataErrorCode::invalid_params);
    CHECK(code_of([&] { synth_dataset(p, 2, 1.5, dir / "bad"); }) == DataErrorCode::invalid_params);
  }

  TEST_CASE("event fraction control over 100 granules") {
    // A 16 px labelling tile keeps the 9 x 10 grid while the files stay small.
    SynthParams p;
    p.height = 16 * 9;
    p.width = 16 * 10;
    p.tile_size = 16;
    for (double target : {0.02, 0.05}) {
      testing::ScratchDir dir("frac");
      const auto m = synth_dataset(p, 100, target, dir.path());
      CHECK(m.event_tiles + m.non_event_tiles == 9000);
      CHECK(std::abs(m.event_fraction() - target) <= 0.005);
    }
  }
}
