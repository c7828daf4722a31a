#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <set>

#include "dsvt/backbone.hpp"
#include "dsvt/errors.hpp"
#include "dsvt/parallel.hpp"
#include "dsvt/reference.hpp"
#include "test_helpers.hpp"

using namespace dsvt;
using dsvt::testing::max_abs_diff;

namespace {

BackboneConfig small_pillar() {
  auto cfg = dsvt_pillar_preset();
  cfg.grid = dsvt::testing::small_pillar_grid();
  cfg.channels = 24;
  cfg.heads = 4;
  cfg.ffn_channels = 48;
  cfg.tau = 12;
  cfg.blocks_per_stage = {2};
  return cfg;
}

BackboneConfig small_voxel() {
  auto cfg = dsvt_voxel_preset();
  cfg.grid = dsvt::testing::small_pillar_grid();
  cfg.grid.voxel_size[2] = 0.1875;
  cfg.channels = 24;
  cfg.heads = 4;
  cfg.ffn_channels = 48;
  cfg.tau = 16;
  return cfg;
}

PointCloud scene(std::uint64_t seed) { return synth_scene(dsvt::testing::small_scene(seed)); }

SparseVoxelGrid embedded(const BackboneConfig& cfg, const PointCloud& pc, std::uint64_t seed) {
  ParamRng rng(seed);
  return voxelize(pc, cfg.grid, random_embed(rng, cfg.point_extra_dims, cfg.channels));
}

std::set<std::pair<int, int>> bev_cells(const std::vector<VoxelCoord>& coords) {
  std::set<std::pair<int, int>> cells;
  for (auto v : coords) cells.insert({v.x, v.y});
  return cells;
}

}  // namespace

TEST_CASE("a single-voxel grid passes through one layer") {
  const auto cfg = small_pillar();
  const auto grid = embedded(cfg, dsvt::testing::cloud({{1.0f, 2.0f, 0.5f, 0.3f}}, 1), 1);
  REQUIRE(grid.size() == 1);
  ParamRng rng(2);
  const auto params = AttentionParams::random(rng, 24, 4, 48);
  const WindowSpec window{{12, 12, 1}, {0, 0, 0}};
  LayerStats stats;
  const auto out = dsvt_layer(grid, assign_windows(grid, window), SortStrategy::x_major(), 12, params, &stats);
  CHECK(out.coords == grid.coords);
  CHECK(out.features.all_finite());
  CHECK(stats.windows == 1);
  CHECK(stats.sets == 1);
  CHECK(stats.valid_slots == 1);
  const auto ref = reference::dsvt_layer(grid, window, SortStrategy::x_major(), 12, params);
  CHECK(max_abs_diff(out.features, ref.features) <= 1e-5);
}

TEST_CASE("batched layer agrees with the per-set oracle") {
  const auto cfg = small_pillar();
  const auto grid = embedded(cfg, scene(3), 3);
  ParamRng rng(4);
  const auto params = AttentionParams::random(rng, 24, 4, 48);
  for (const WindowSpec window : {WindowSpec{{12, 12, 1}, {0, 0, 0}}, WindowSpec{{24, 24, 1}, {12, 12, 0}}}) {
    const auto a = assign_windows(grid, window);
    for (auto strategy : {SortStrategy::x_major(), SortStrategy::y_major(), SortStrategy::random(9),
                          SortStrategy::sparse(), SortStrategy::regional()}) {
      LayerStats stats;
      const auto out = dsvt_layer(grid, a, strategy, 12, params, &stats);
      const auto ref = reference::dsvt_layer(grid, window, strategy, 12, params);
      CHECK(out.coords == grid.coords);
      CHECK(max_abs_diff(out.features, ref.features) <= 1e-5);
      CHECK(stats.valid_slots == grid.size());
      CHECK(stats.attention_invocations == 1);
      CHECK(stats.slots - stats.valid_slots < stats.windows * 12);
    }
  }
}

TEST_CASE("one set per window makes x and y ordering equivalent") {
  const auto cfg = small_pillar();
  const auto grid = embedded(cfg, scene(5), 5);
  ParamRng rng(6);
  const auto params = AttentionParams::random(rng, 24, 4, 48);
  const WindowSpec window{{4, 4, 1}, {0, 0, 0}};
  const auto a = assign_windows(grid, window);
  const auto x = dsvt_layer(grid, a, SortStrategy::x_major(), 16, params);
  const auto y = dsvt_layer(grid, a, SortStrategy::y_major(), 16, params);
  CHECK(max_abs_diff(x.features, y.features) <= 1e-5);
}

TEST_CASE("regional ordering is x-major") {
  const auto cfg = small_pillar();
  const auto grid = embedded(cfg, scene(7), 7);
  ParamRng rng(8);
  const auto params = AttentionParams::random(rng, 24, 4, 48);
  const auto a = assign_windows(grid, WindowSpec{{12, 12, 1}, {0, 0, 0}});
  CHECK(dsvt_layer(grid, a, SortStrategy::regional(), 12, params).features ==
        dsvt_layer(grid, a, SortStrategy::x_major(), 12, params).features);
}

TEST_CASE("layer sort schedule") {
  auto cfg = small_pillar();
  CHECK(layer_sort_strategy(cfg, 0, 0).kind == SortKind::XMajor);
  CHECK(layer_sort_strategy(cfg, 0, 1).kind == SortKind::YMajor);
  CHECK(layer_sort_strategy(cfg, 1, 1).kind == SortKind::YMajor);
  cfg.partition = PartitionStrategy::Random;
  cfg.partition_seed = 3;
  const auto a = layer_sort_strategy(cfg, 0, 0), b = layer_sort_strategy(cfg, 0, 1);
  CHECK(a.kind == SortKind::Random);
  CHECK(a.seed != b.seed);
  CHECK(layer_sort_strategy(cfg, 0, 0).seed == a.seed);
  cfg.partition = PartitionStrategy::Sparse;
  CHECK(layer_sort_strategy(cfg, 1, 0).kind == SortKind::Sparse);
}

TEST_CASE("pillar forward matches the serial pipeline") {
  const auto cfg = small_pillar();
  const auto weights = BackboneWeights::random(cfg, 11);
  const auto pc = scene(12);
  const auto result = forward(pc, cfg, weights);
  const auto dims = cfg.grid.dims();
  CHECK(result.bev.shape() == Shape{24, std::size_t(dims.y), std::size_t(dims.x)});
  CHECK(max_abs_diff(result.bev, reference::forward(pc, cfg, weights)) <= 1e-4);
  CHECK(result.layer_stats.size() == 4);
  for (const auto& s : result.layer_stats) {
    CHECK(s.attention_invocations == 1);
    CHECK(s.valid_slots == result.final_coords.size());
  }
}

TEST_CASE("voxel forward matches the serial pipeline") {
  const auto cfg = small_voxel();
  const auto weights = BackboneWeights::random(cfg, 13);
  const auto pc = scene(14);
  const auto result = forward(pc, cfg, weights);
  CHECK(result.stage_z_extents == std::vector<int>{32, 8, 2, 1});
  CHECK(max_abs_diff(result.bev, reference::forward(pc, cfg, weights)) <= 1e-4);
}

TEST_CASE("pool variants all run end to end") {
  auto cfg = small_voxel();
  const auto pc = scene(15);
  for (auto variant : {PoolVariant::AttnPool, PoolVariant::AttnPoolMasked, PoolVariant::MaxPoolOnly,
                       PoolVariant::LinearPool}) {
    cfg.pool = variant;
    const auto result = forward(pc, cfg, BackboneWeights::random(cfg, 16));
    CHECK(result.bev.all_finite());
  }
}

TEST_CASE("pillar and voxel variants occupy the same BEV cells") {
  const auto pc = scene(17);
  const auto p = forward(pc, small_pillar(), BackboneWeights::random(small_pillar(), 1));
  const auto v = forward(pc, small_voxel(), BackboneWeights::random(small_voxel(), 1));
  CHECK(p.bev.shape() == v.bev.shape());
  CHECK(bev_cells(p.final_coords) == bev_cells(v.final_coords));
  for (auto c : v.final_coords) CHECK(c.z == 0);
  // zero outside occupied cells
  const auto cells = bev_cells(v.final_coords);
  const std::size_t gy = v.bev.dim(1), gx = v.bev.dim(2);
  std::size_t nonzero_cells = 0;
  for (std::size_t y = 0; y < gy; ++y)
    for (std::size_t x = 0; x < gx; ++x) {
      bool any = false;
      for (std::size_t c = 0; c < v.bev.dim(0) && !any; ++c) any = v.bev[(c * gy + y) * gx + x] != 0.0f;
      if (any) {
        ++nonzero_cells;
        CHECK(cells.count({int(x), int(y)}) == 1);
      }
    }
  CHECK(nonzero_cells == cells.size());
}

TEST_CASE("forward is bitwise stable across runs and thread counts") {
  for (const auto& cfg : {small_pillar(), small_voxel()}) {
    const auto weights = BackboneWeights::random(cfg, 21);
    const auto pc = scene(22);
    const Backbone backbone(cfg, weights);
    const auto base = backbone.forward(pc).bev;
    CHECK(backbone.forward(pc).bev == base);
    for (int t : {1, 2, 4}) {
      ThreadScope scope(t);
      CHECK(backbone.forward(pc).bev == base);
    }
  }
}

TEST_CASE("point order does not change the output") {
  const auto cfg = small_pillar();
  const auto weights = BackboneWeights::random(cfg, 23);
  const auto pc = scene(24);
  PointCloud reversed;
  reversed.extra_dims = pc.extra_dims;
  for (std::size_t i = pc.size(); i-- > 0;) {
    const auto p = pc.point(i);
    reversed.add(std::vector<float>(p.begin(), p.end()));
  }
  CHECK(forward(pc, cfg, weights).bev == forward(reversed, cfg, weights).bev);
}

TEST_CASE("an empty scene yields a zero BEV map") {
  for (const auto& cfg : {small_pillar(), small_voxel()}) {
    PointCloud empty;
    empty.extra_dims = 1;
    const auto result = forward(empty, cfg, BackboneWeights::random(cfg, 1));
    const auto dims = cfg.grid.dims();
    CHECK(result.bev.shape() == Shape{24, std::size_t(dims.y), std::size_t(dims.x)});
    CHECK(std::all_of(result.bev.values().begin(), result.bev.values().end(), [](float v) { return v == 0.0f; }));
    CHECK(result.final_coords.empty());
  }
}

TEST_CASE("weights must fit the config") {
  const auto cfg = small_pillar();
  auto weights = BackboneWeights::random(cfg, 1);
  CHECK_NOTHROW(check_weights(cfg, weights));
  weights.layers.pop_back();
  CHECK_THROWS_AS(Backbone(cfg, weights), ConfigError);
  auto other = small_pillar();
  other.channels = 48;
  other.ffn_channels = 96;
  CHECK_THROWS_AS(check_weights(other, BackboneWeights::random(cfg, 1)), ConfigError);
}

TEST_CASE("preset grid extents") {
  const auto p = dsvt_pillar_preset();
  const auto pd = p.grid.dims();
  CHECK(pd.x == 469);
  CHECK(pd.y == 469);
  CHECK(pd.z == 1);
  const auto v = dsvt_voxel_preset();
  CHECK(v.grid.dims().z == 32);
  CHECK(v.stage_z_extents() == std::vector<int>{32, 8, 2, 1});
  CHECK(p.stage_z_extents() == std::vector<int>{1});
  CHECK_NOTHROW(dsvt_nuscenes_preset().validate());
}
