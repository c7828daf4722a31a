#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dsvt/voxel_grid.hpp"

namespace dsvt {

using Extent3 = std::array<std::int32_t, 3>;

enum class Variant { Pillar, Voxel };

// How each layer of a block orders the voxels of a window before splitting
// them into sets. Rotate alternates X-major and Y-major; the others are the
// ablation baselines.
enum class PartitionStrategy { Rotate, Random, Sparse, Regional };

enum class PoolVariant { AttnPool, AttnPoolMasked, MaxPoolOnly, LinearPool };

std::string to_string(Variant v);
std::string to_string(PartitionStrategy s);
std::string to_string(PoolVariant p);
Variant parse_variant(const std::string& s);
PartitionStrategy parse_partition_strategy(const std::string& s);
PoolVariant parse_pool_variant(const std::string& s);

struct BackboneConfig {
  Variant variant = Variant::Pillar;
  GridSpec grid;
  std::size_t point_extra_dims = 1;
  std::vector<int> blocks_per_stage{4};
  Extent3 window_a{12, 12, 1};
  Extent3 window_b{24, 24, 1};
  std::size_t tau = 36;
  std::size_t channels = 192;
  std::size_t heads = 8;
  std::size_t ffn_channels = 384;
  // Voxel variant only: Z pooling stride after each stage but the last, and
  // the Z window height used in each stage.
  std::vector<int> pool_strides;
  std::vector<int> z_windows;
  PartitionStrategy partition = PartitionStrategy::Rotate;
  std::uint64_t partition_seed = 0;
  PoolVariant pool = PoolVariant::AttnPool;

  std::size_t num_stages() const { return blocks_per_stage.size(); }
  std::size_t num_blocks() const;
  // Z extent of the voxel grid seen by each stage.
  std::vector<int> stage_z_extents() const;
  // Throws ConfigError naming the offending field.
  void validate() const;
};

BackboneConfig dsvt_pillar_preset();
BackboneConfig dsvt_voxel_preset();
BackboneConfig dsvt_nuscenes_preset();
// "dsvt-p", "dsvt-v" or "dsvt-nus".
BackboneConfig preset_by_name(const std::string& name);

}  // namespace dsvt
