#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <vector>

#include "dsvt/layers.hpp"
#include "dsvt/tensor.hpp"

namespace dsvt {

using Vec3 = std::array<double, 3>;

struct PointCloud {
  std::size_t extra_dims = 0;  // K attributes per point after x, y, z
  std::vector<float> data;     // row-major (num_points, 3 + K)

  std::size_t stride() const { return 3 + extra_dims; }
  std::size_t size() const { return data.size() / stride(); }
  bool empty() const { return data.empty(); }
  std::span<const float> point(std::size_t i) const {
    return {data.data() + i * stride(), stride()};
  }
  void add(std::span<const float> row);
};

struct GridDims {
  std::int32_t x = 1, y = 1, z = 1;

  std::int64_t cells() const { return std::int64_t{x} * y * z; }
  friend bool operator==(const GridDims&, const GridDims&) = default;
};

struct GridSpec {
  Vec3 range_min{};
  Vec3 range_max{};
  Vec3 voxel_size{};

  // Throws ConfigError on an invalid spec.
  void validate() const;
  // ceil((max - min) / size) per axis.
  GridDims dims() const;
};

struct VoxelCoord {
  std::int32_t x = 0, y = 0, z = 0;

  friend bool operator==(const VoxelCoord&, const VoxelCoord&) = default;
  // Canonical raster order: z, then y, then x.
  friend std::strong_ordering operator<=>(const VoxelCoord& a, const VoxelCoord& b) {
    if (auto c = a.z <=> b.z; c != 0) return c;
    if (auto c = a.y <=> b.y; c != 0) return c;
    return a.x <=> b.x;
  }
};

inline std::int64_t raster_index(const VoxelCoord& c, const GridDims& d) {
  return (std::int64_t{c.z} * d.y + c.y) * d.x + c.x;
}

// Occupied voxels in raster order with one feature row each.
struct SparseVoxelGrid {
  GridSpec spec;
  GridDims dims;
  std::vector<VoxelCoord> coords;
  FeatureTensor features;  // (N, C)

  std::size_t size() const { return coords.size(); }
  std::size_t channels() const { return features.rank() == 2 ? features.dim(1) : 0; }

  // Checks uniqueness, bounds, raster order and row count.
  void validate() const;
};

// Point descriptor = [offset to voxel center (3) ++ K extras], mean-pooled per
// voxel, then one affine layer and ReLU.
struct EmbedParams {
  Linear proj;  // (3 + K, C)

  std::size_t channels() const { return proj.out_features(); }
};

EmbedParams random_embed(ParamRng& rng, std::size_t extra_dims, std::size_t channels);

SparseVoxelGrid voxelize(const PointCloud& pc, const GridSpec& spec, const EmbedParams& embed);

// Occupied voxel coordinates only; same order as voxelize.
std::vector<VoxelCoord> occupied_voxels(const PointCloud& pc, const GridSpec& spec);

// (C, Gy, Gx) map, zero where unoccupied. Requires dims.z == 1.
FeatureTensor dense_bev_scatter(const SparseVoxelGrid& grid);

// Inverse of dense_bev_scatter at the grid's coordinates; (N, C).
FeatureTensor gather_bev(const FeatureTensor& bev, const std::vector<VoxelCoord>& coords);

}  // namespace dsvt
