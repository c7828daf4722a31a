#pragma once

#include <cstdint>
#include <vector>

#include "dsvt/attention.hpp"
#include "dsvt/config.hpp"
#include "dsvt/pooling.hpp"
#include "dsvt/set_partition.hpp"
#include "dsvt/voxel_grid.hpp"
#include "dsvt/window.hpp"

namespace dsvt {

// Parameters owned by one backbone; nothing is shared between blocks.
struct BackboneWeights {
  EmbedParams embed;
  std::vector<AttentionParams> layers;  // two per block
  std::vector<PoolParams> pools;        // one per stage transition (voxel variant)

  static BackboneWeights random(const BackboneConfig& cfg, std::uint64_t seed);
};

// Pooling region between stage s and s + 1.
PoolRegionSpec stage_pool_region(const BackboneConfig& cfg, std::size_t stage);

// Sort order of layer `layer` (0 or 1) in block `block`.
SortStrategy layer_sort_strategy(const BackboneConfig& cfg, std::size_t block, std::size_t layer);

struct LayerStats {
  std::size_t windows = 0;
  std::size_t sets = 0;
  std::size_t slots = 0;
  std::size_t valid_slots = 0;
  std::size_t attention_invocations = 0;
};

// One attention layer: sort, partition, gather, a single batched transformer
// layer over every set of every window, scatter back.
SparseVoxelGrid dsvt_layer(const SparseVoxelGrid& grid, const WindowAssignment& assignment,
                           SortStrategy strategy, std::uint32_t tau,
                           const AttentionParams& params, LayerStats* stats = nullptr);

// Two layers sharing one window assignment.
SparseVoxelGrid dsvt_block(const SparseVoxelGrid& grid, const WindowSpec& window,
                           SortStrategy first, SortStrategy second, std::uint32_t tau,
                           const AttentionParams& first_params,
                           const AttentionParams& second_params,
                           std::vector<LayerStats>* stats = nullptr);

struct ForwardResult {
  FeatureTensor bev;                  // (C, Gy, Gx)
  std::vector<int> stage_z_extents;
  std::vector<VoxelCoord> final_coords;
  std::vector<LayerStats> layer_stats;
};

// Immutable after construction; forward() is safe to call concurrently.
class Backbone {
 public:
  Backbone(BackboneConfig cfg, BackboneWeights weights);

  const BackboneConfig& config() const { return cfg_; }
  const BackboneWeights& weights() const { return weights_; }
  const BlockSchedule& schedule() const { return schedule_; }

  ForwardResult forward(const PointCloud& pc) const;

 private:
  BackboneConfig cfg_;
  BackboneWeights weights_;
  BlockSchedule schedule_;
};

// Throws ConfigError when the weights do not fit the config.
void check_weights(const BackboneConfig& cfg, const BackboneWeights& weights);

inline ForwardResult forward(const PointCloud& pc, const BackboneConfig& cfg,
                             const BackboneWeights& weights) {
  return Backbone(cfg, weights).forward(pc);
}

}  // namespace dsvt
