#include "dsvt/backbone.hpp"

#include <sstream>

#include "dsvt/config_io.hpp"
#include "dsvt/errors.hpp"

namespace dsvt {

PoolRegionSpec stage_pool_region(const BackboneConfig& cfg, std::size_t stage) {
  require(stage < cfg.pool_strides.size(), "stage_pool_region: no pooling after this stage");
  return {{1, 1, cfg.pool_strides[stage]}};
}

BackboneWeights BackboneWeights::random(const BackboneConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamRng rng(seed);
  BackboneWeights w;
  w.embed = random_embed(rng, cfg.point_extra_dims, cfg.channels);
  for (std::size_t i = 0; i < 2 * cfg.num_blocks(); ++i)
    w.layers.push_back(AttentionParams::random(rng, cfg.channels, cfg.heads, cfg.ffn_channels));
  for (std::size_t s = 0; s < cfg.pool_strides.size(); ++s)
    w.pools.push_back(
        PoolParams::random(rng, cfg.pool, cfg.channels, cfg.heads, stage_pool_region(cfg, s)));
  return w;
}

SortStrategy layer_sort_strategy(const BackboneConfig& cfg, std::size_t block, std::size_t layer) {
  switch (cfg.partition) {
    case PartitionStrategy::Rotate:
      return layer % 2 == 0 ? SortStrategy::x_major() : SortStrategy::y_major();
    case PartitionStrategy::Regional:
      return SortStrategy::regional();
    case PartitionStrategy::Sparse:
      return SortStrategy::sparse();
    case PartitionStrategy::Random:
      return SortStrategy::random(ParamRng(cfg.partition_seed + 2 * block + layer).next_u64());
  }
  return SortStrategy::x_major();
}

SparseVoxelGrid dsvt_layer(const SparseVoxelGrid& grid, const WindowAssignment& assignment,
                           SortStrategy strategy, std::uint32_t tau,
                           const AttentionParams& params, LayerStats* stats) {
  require(assignment.num_voxels() == grid.size(), "dsvt_layer: assignment built for another grid");
  SparseVoxelGrid out = grid;
  if (grid.size() == 0) {
    if (stats) *stats = {};
    return out;
  }
  const SetPartition partition = build_partition(assignment, strategy, tau);
  const SetBatch batch = gather_sets(grid.features, assignment, partition);
  const auto& size = assignment.spec.size;
  const FeatureTensor pos = positional_encoding(
      batch.coords,
      {static_cast<float>(size[0]), static_cast<float>(size[1]), static_cast<float>(size[2])},
      params.channels);
  const FeatureTensor result = transformer_layer(batch.features, batch.key_mask, pos, params);
  scatter_sets(result, partition, out.features);

  if (stats) {
    stats->windows = assignment.num_windows();
    stats->sets = partition.total_sets;
    stats->slots = partition.total_slots();
    stats->valid_slots = 0;
    for (auto v : partition.slot_valid) stats->valid_slots += v;
    stats->attention_invocations = 1;
  }
  return out;
}

SparseVoxelGrid dsvt_block(const SparseVoxelGrid& grid, const WindowSpec& window,
                           SortStrategy first, SortStrategy second, std::uint32_t tau,
                           const AttentionParams& first_params,
                           const AttentionParams& second_params,
                           std::vector<LayerStats>* stats) {
  const WindowAssignment assignment = assign_windows(grid, window);
  LayerStats s1, s2;
  SparseVoxelGrid mid = dsvt_layer(grid, assignment, first, tau, first_params, &s1);
  SparseVoxelGrid out = dsvt_layer(mid, assignment, second, tau, second_params, &s2);
  if (stats) {
    stats->push_back(s1);
    stats->push_back(s2);
  }
  return out;
}

void check_weights(const BackboneConfig& cfg, const BackboneWeights& weights) {
  BackboneWeights expected = BackboneWeights::random(cfg, 0);
  BackboneWeights found = weights;
  const auto want = named_tensors(expected);
  const auto have = named_tensors(found);
  std::ostringstream diff;
  std::size_t i = 0;
  for (; i < want.size() && i < have.size(); ++i) {
    if (want[i].name != have[i].name || want[i].tensor->shape() != have[i].tensor->shape())
      diff << "\n  " << want[i].name << ": expected " << shape_str(want[i].tensor->shape())
           << ", found " << have[i].name << " " << shape_str(have[i].tensor->shape());
  }
  for (; i < want.size(); ++i)
    diff << "\n  " << want[i].name << ": expected " << shape_str(want[i].tensor->shape())
         << ", found nothing";
  for (; i < have.size(); ++i)
    diff << "\n  unexpected tensor " << have[i].name << " " << shape_str(have[i].tensor->shape());
  if (!diff.str().empty()) throw ConfigError("weights do not match the config:" + diff.str());
}

Backbone::Backbone(BackboneConfig cfg, BackboneWeights weights)
    : cfg_(std::move(cfg)), weights_(std::move(weights)) {
  cfg_.validate();
  check_weights(cfg_, weights_);
  schedule_ = make_schedule(cfg_);
}

ForwardResult Backbone::forward(const PointCloud& pc) const {
  ForwardResult result;
  result.stage_z_extents = cfg_.stage_z_extents();
  SparseVoxelGrid grid = voxelize(pc, cfg_.grid, weights_.embed);
  const auto tau = static_cast<std::uint32_t>(cfg_.tau);

  for (std::size_t b = 0; b < schedule_.blocks.size(); ++b) {
    const ScheduledBlock& blk = schedule_.blocks[b];
    grid = dsvt_block(grid, blk.window, layer_sort_strategy(cfg_, b, 0),
                      layer_sort_strategy(cfg_, b, 1), tau, weights_.layers[2 * b],
                      weights_.layers[2 * b + 1], &result.layer_stats);
    const bool stage_ends = b + 1 == schedule_.blocks.size() ||
                            schedule_.blocks[b + 1].stage != blk.stage;
    if (stage_ends && blk.stage < cfg_.pool_strides.size())
      grid = pool_grid(grid, stage_pool_region(cfg_, blk.stage), weights_.pools[blk.stage]);
  }
  result.bev = dense_bev_scatter(grid);
  result.final_coords = grid.coords;
  return result;
}

}  // namespace dsvt
