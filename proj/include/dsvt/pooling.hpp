#pragma once

#include <span>
#include <vector>

#include "dsvt/config.hpp"
#include "dsvt/layers.hpp"
#include "dsvt/voxel_grid.hpp"

namespace dsvt {

// Non-overlapping pooling region; stride equals region.
struct PoolRegionSpec {
  Extent3 region{1, 1, 1};

  std::size_t cells() const {
    return static_cast<std::size_t>(region[0]) * region[1] * region[2];
  }
  void validate(const GridDims& dims) const;
};

// Dense-ified pooling regions. Child cell r of a block sits at offset
// (r % l, (r / l) % w, r / (l * w)) inside its region.
struct RegionBlocks {
  PoolRegionSpec spec;
  GridDims parent_dims;
  std::vector<VoxelCoord> parents;    // raster order
  FeatureTensor blocks;               // (R, l*w*h, C), zero rows for empty children
  std::vector<std::uint8_t> child_mask;  // R * l*w*h

  std::size_t num_regions() const { return parents.size(); }
  std::span<const std::uint8_t> mask(std::size_t r) const {
    return {child_mask.data() + r * spec.cells(), spec.cells()};
  }
};

RegionBlocks group_regions(const SparseVoxelGrid& grid, const PoolRegionSpec& spec);

// Parent coordinates and dims only, without features.
std::vector<VoxelCoord> pool_coords(std::span<const VoxelCoord> coords, const GridDims& dims,
                                    const PoolRegionSpec& spec, GridDims* parent_dims);

VoxelCoord child_offset(std::size_t r, const PoolRegionSpec& spec);

// Componentwise max over valid children. block is (cells, C) row-major.
std::vector<float> max_pool_query(std::span<const float> block, std::span<const std::uint8_t> mask,
                                  std::size_t channels);

struct PoolParams {
  PoolVariant variant = PoolVariant::AttnPool;
  std::size_t channels = 0;
  std::size_t heads = 1;
  Linear q, k, v, o;       // attention variants
  Linear flat;             // LinearPool: (cells * C, C)
  LayerNormParams norm;    // LinearPool

  static PoolParams random(ParamRng& rng, PoolVariant variant, std::size_t channels,
                           std::size_t heads, const PoolRegionSpec& spec);
  static PoolParams identity(PoolVariant variant, std::size_t channels, std::size_t heads,
                             const PoolRegionSpec& spec);
};

// Pooled feature of one region block (C).
std::vector<float> attn_pool(std::span<const float> block, std::span<const std::uint8_t> mask,
                             const PoolRegionSpec& spec, const PoolParams& params);

// Downsamples a grid; regions are processed in parallel.
SparseVoxelGrid pool_grid(const SparseVoxelGrid& grid, const PoolRegionSpec& spec,
                          const PoolParams& params);

}  // namespace dsvt
