#pragma once

// Serial, unbatched implementations used as test oracles. They share no
// kernels with the batched paths apart from parameter containers.

#include <cstdint>
#include <vector>

#include "dsvt/attention.hpp"
#include "dsvt/backbone.hpp"
#include "dsvt/config.hpp"
#include "dsvt/pooling.hpp"
#include "dsvt/set_partition.hpp"
#include "dsvt/voxel_grid.hpp"

namespace dsvt::reference {

// Attention for each batch row computed only over the unmasked keys.
FeatureTensor masked_mhsa(const FeatureTensor& x, std::span<const std::uint8_t> key_mask,
                          const AttentionParams& params);

// Transformer layer over n tokens with no padding: x, pos are (n, C).
FeatureTensor transformer_layer(const FeatureTensor& x, const FeatureTensor& pos,
                                const AttentionParams& params);

// Per-window, per-set loop. Windows are grouped with an ordered map and each
// set runs as its own unpadded transformer call on its unique voxels.
SparseVoxelGrid dsvt_layer(const SparseVoxelGrid& grid, const WindowSpec& window,
                           SortStrategy strategy, std::uint32_t tau,
                           const AttentionParams& params);

SparseVoxelGrid voxelize(const PointCloud& pc, const GridSpec& spec, const EmbedParams& embed);

SparseVoxelGrid pool_grid(const SparseVoxelGrid& grid, const PoolRegionSpec& spec,
                          const PoolParams& params);

FeatureTensor dense_bev_scatter(const SparseVoxelGrid& grid);

// Whole pipeline built from the functions above.
FeatureTensor forward(const PointCloud& pc, const BackboneConfig& cfg,
                      const BackboneWeights& weights);

}  // namespace dsvt::reference
