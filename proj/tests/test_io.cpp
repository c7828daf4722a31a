#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <fstream>
#include <limits>

#include "dsvt/config_io.hpp"
#include "dsvt/errors.hpp"
#include "dsvt/point_io.hpp"
#include "test_helpers.hpp"

using namespace dsvt;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "dsvt_test_io";
  fs::create_directories(dir);
  return dir / name;
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string config_error(const nlohmann::json& j) {
  try {
    config_from_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("point clouds round trip through csv and binary") {
  auto pc = synth_scene(dsvt::testing::small_scene(1));
  pc.data[0] = 0.1f;
  pc.data[1] = -1e-7f;
  for (const char* name : {"points.csv", "points.bin"}) {
    const auto path = scratch(name);
    write_points(pc, path);
    const auto back = read_points(path, 1);
    CHECK(back.extra_dims == 1);
    CHECK(back.data == pc.data);
  }
}

TEST_CASE("csv header decides the attribute count") {
  const auto path = scratch("two_extras.csv");
  write_text(path, "x,y,z,a0,a1\n1,2,3,0.5,0.25\n-1,0,0.5,1,0\n");
  const auto pc = read_points(path, 0);
  CHECK(pc.extra_dims == 2);
  CHECK(pc.size() == 2);
  CHECK(pc.point(1)[2] == 0.5f);
}

TEST_CASE("malformed point files") {
  SUBCASE("bad header") {
    const auto path = scratch("bad_header.csv");
    write_text(path, "a,b,c\n1,2,3\n");
    CHECK_THROWS_AS(read_points(path, 0), InputError);
  }
  SUBCASE("short row") {
    const auto path = scratch("short.csv");
    write_text(path, "x,y,z\n1,2\n");
    CHECK_THROWS_AS(read_points(path, 0), InputError);
  }
  SUBCASE("not a number") {
    const auto path = scratch("nan_text.csv");
    write_text(path, "x,y,z\n1,2,abc\n");
    CHECK_THROWS_AS(read_points(path, 0), InputError);
  }
  SUBCASE("non-finite value") {
    PointCloud pc;
    pc.extra_dims = 0;
    pc.add(std::vector<float>{0, std::numeric_limits<float>::infinity(), 0});
    CHECK_THROWS_AS(validate_points(pc), InputError);
  }
  SUBCASE("truncated binary") {
    const auto path = scratch("truncated.bin");
    write_text(path, std::string(10, '\0'));
    CHECK_THROWS_AS(read_points(path, 1), InputError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(read_points(scratch("absent.bin"), 1), InputError);
  }
}

TEST_CASE("config json round trip") {
  for (const auto& name : {"dsvt-p", "dsvt-v", "dsvt-nus"}) {
    auto cfg = preset_by_name(name);
    cfg.partition = PartitionStrategy::Random;
    cfg.partition_seed = 77;
    cfg.pool = PoolVariant::LinearPool;
    const auto back = config_from_json(config_to_json(cfg));
    CHECK(config_to_json(back) == config_to_json(cfg));
    CHECK(back.grid.dims().x == cfg.grid.dims().x);
  }
  const auto path = scratch("config.json");
  write_json(config_to_json(dsvt_voxel_preset()), path);
  CHECK(config_to_json(load_config(path)) == config_to_json(dsvt_voxel_preset()));
}

TEST_CASE("config errors name the field") {
  auto j = config_to_json(dsvt_pillar_preset());
  j["grid"].erase("voxel_size");
  CHECK(config_error(j).find("grid.voxel_size") != std::string::npos);

  j = config_to_json(dsvt_pillar_preset());
  j["tau"] = "many";
  CHECK(config_error(j).find("tau") != std::string::npos);

  j = config_to_json(dsvt_pillar_preset());
  j["tau"] = 0;
  CHECK(config_error(j).find("tau") != std::string::npos);

  j = config_to_json(dsvt_pillar_preset());
  j["heads"] = 7;
  CHECK(config_error(j).find("heads") != std::string::npos);

  j = config_to_json(dsvt_voxel_preset());
  j["z_windows"] = {32, 8, 2};
  CHECK(config_error(j).find("z_windows") != std::string::npos);
}

TEST_CASE("preset overrides") {
  const auto cfg = config_from_json({{"preset", "dsvt-p"}, {"tau", 24}, {"channels", 96}, {"ffn_channels", 192}});
  CHECK(cfg.tau == 24);
  CHECK(cfg.channels == 96);
  CHECK(cfg.window_a == dsvt_pillar_preset().window_a);
  CHECK(config_error({{"preset", "dsvt-x"}}).find("preset") != std::string::npos);
}

TEST_CASE("weights save and load") {
  auto cfg = dsvt_voxel_preset();
  cfg.channels = 12;
  cfg.heads = 2;
  cfg.ffn_channels = 24;
  const auto weights = BackboneWeights::random(cfg, 5);
  const auto path = scratch("weights.bin");
  save_weights(weights, path);
  CHECK(fs::exists(path.string() + ".json"));
  auto loaded = load_weights(cfg, path);
  auto original = weights;
  const auto a = named_tensors(original), b = named_tensors(loaded);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(*a[i].tensor == *b[i].tensor);
  }

  auto wider = cfg;
  wider.channels = 24;
  wider.ffn_channels = 48;
  try {
    load_weights(wider, path);
    FAIL("expected a shape mismatch");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("expected") != std::string::npos);
    CHECK(msg.find("found") != std::string::npos);
  }
}

TEST_CASE("float blob") {
  const std::vector<float> values{1.5f, -0.0f, 3e-30f};
  const auto path = scratch("blob.bin");
  write_f32_blob(values, path);
  CHECK(fs::file_size(path) == 12);
  CHECK(read_f32_blob(path) == values);
}
