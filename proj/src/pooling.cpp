#include "dsvt/pooling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dsvt/attention.hpp"
#include "dsvt/errors.hpp"

namespace dsvt {

void PoolRegionSpec::validate(const GridDims& dims) const {
  const std::int32_t extents[3] = {dims.x, dims.y, dims.z};
  for (int a = 0; a < 3; ++a) {
    if (region[a] < 1) throw ConfigError("pool.region: extents must be >= 1");
    if (extents[a] % region[a] != 0)
      throw ConfigError("pool.region: " + std::to_string(region[a]) +
                        " does not divide grid extent " + std::to_string(extents[a]));
  }
}

VoxelCoord child_offset(std::size_t r, const PoolRegionSpec& spec) {
  const auto l = static_cast<std::size_t>(spec.region[0]);
  const auto w = static_cast<std::size_t>(spec.region[1]);
  return {static_cast<std::int32_t>(r % l), static_cast<std::int32_t>((r / l) % w),
          static_cast<std::int32_t>(r / (l * w))};
}

namespace {

GridDims parent_dims_of(const GridDims& dims, const PoolRegionSpec& spec) {
  return {dims.x / spec.region[0], dims.y / spec.region[1], dims.z / spec.region[2]};
}

VoxelCoord parent_of(const VoxelCoord& c, const PoolRegionSpec& spec) {
  return {c.x / spec.region[0], c.y / spec.region[1], c.z / spec.region[2]};
}

std::size_t child_slot(const VoxelCoord& c, const PoolRegionSpec& spec) {
  const std::size_t dx = c.x % spec.region[0], dy = c.y % spec.region[1],
                    dz = c.z % spec.region[2];
  return dx + spec.region[0] * (dy + std::size_t(spec.region[1]) * dz);
}

}  // namespace

std::vector<VoxelCoord> pool_coords(std::span<const VoxelCoord> coords, const GridDims& dims,
                                    const PoolRegionSpec& spec, GridDims* parent_dims) {
  spec.validate(dims);
  std::vector<VoxelCoord> parents;
  parents.reserve(coords.size());
  for (const auto& c : coords) parents.push_back(parent_of(c, spec));
  std::sort(parents.begin(), parents.end());
  parents.erase(std::unique(parents.begin(), parents.end()), parents.end());
  if (parent_dims) *parent_dims = parent_dims_of(dims, spec);
  return parents;
}

RegionBlocks group_regions(const SparseVoxelGrid& grid, const PoolRegionSpec& spec) {
  spec.validate(grid.dims);
  RegionBlocks out;
  out.spec = spec;
  out.parent_dims = parent_dims_of(grid.dims, spec);

  const std::size_t n = grid.size();
  std::vector<VoxelCoord> parent(n);
  for (std::size_t i = 0; i < n; ++i) parent[i] = parent_of(grid.coords[i], spec);
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return parent[a] < parent[b]; });

  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i < n; ++i)
    if (i == 0 || parent[order[i]] != parent[order[i - 1]]) {
      starts.push_back(i);
      out.parents.push_back(parent[order[i]]);
    }
  starts.push_back(n);

  const std::size_t cells = spec.cells(), c = grid.channels();
  const std::size_t regions = out.parents.size();
  out.blocks = FeatureTensor({regions, cells, c});
  out.child_mask.assign(regions * cells, 0);
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(regions); ++r) {
    for (std::size_t i = starts[r]; i < starts[r + 1]; ++i) {
      const std::uint32_t v = order[i];
      const std::size_t slot = child_slot(grid.coords[v], spec);
      const auto src = grid.features.row(v);
      std::copy(src.begin(), src.end(), out.blocks.row(r * cells + slot).begin());
      out.child_mask[r * cells + slot] = 1;
    }
  }
  return out;
}

std::vector<float> max_pool_query(std::span<const float> block, std::span<const std::uint8_t> mask,
                                  std::size_t channels) {
  std::vector<float> out(channels, -std::numeric_limits<float>::infinity());
  bool any = false;
  for (std::size_t r = 0; r < mask.size(); ++r) {
    if (!mask[r]) continue;
    any = true;
    for (std::size_t k = 0; k < channels; ++k) out[k] = std::max(out[k], block[r * channels + k]);
  }
  if (!any) throw ContractError("max_pool_query: region has no valid child");
  return out;
}

PoolParams PoolParams::random(ParamRng& rng, PoolVariant variant, std::size_t channels,
                              std::size_t heads, const PoolRegionSpec& spec) {
  PoolParams p;
  p.variant = variant;
  p.channels = channels;
  p.heads = heads;
  switch (variant) {
    case PoolVariant::AttnPool:
    case PoolVariant::AttnPoolMasked:
      p.q = random_linear(rng, channels, channels);
      p.k = random_linear(rng, channels, channels);
      p.v = random_linear(rng, channels, channels);
      p.o = random_linear(rng, channels, channels);
      break;
    case PoolVariant::LinearPool:
      p.flat = random_linear(rng, spec.cells() * channels, channels);
      p.norm = LayerNormParams::unit(channels);
      break;
    case PoolVariant::MaxPoolOnly:
      break;
  }
  return p;
}

PoolParams PoolParams::identity(PoolVariant variant, std::size_t channels, std::size_t heads,
                                const PoolRegionSpec& spec) {
  PoolParams p;
  p.variant = variant;
  p.channels = channels;
  p.heads = heads;
  if (variant == PoolVariant::AttnPool || variant == PoolVariant::AttnPoolMasked)
    p.q = p.k = p.v = p.o = Linear::identity(channels);
  if (variant == PoolVariant::LinearPool) {
    p.flat = Linear::zeros(spec.cells() * channels, channels);
    p.norm = LayerNormParams::unit(channels);
  }
  return p;
}

std::vector<float> attn_pool(std::span<const float> block, std::span<const std::uint8_t> mask,
                             const PoolRegionSpec& spec, const PoolParams& params) {
  const std::size_t c = params.channels, cells = spec.cells();
  require(block.size() == cells * c && mask.size() == cells, "attn_pool: block shape mismatch");

  if (params.variant == PoolVariant::MaxPoolOnly) return max_pool_query(block, mask, c);
  if (params.variant == PoolVariant::LinearPool) {
    std::vector<float> out(c);
    linear_row(block, params.flat, out);
    layer_norm_row(out, params.norm);
    return out;
  }

  const std::array<float, 3> window{static_cast<float>(spec.region[0]),
                                    static_cast<float>(spec.region[1]),
                                    static_cast<float>(spec.region[2])};
  std::vector<float> pe(c);
  std::vector<float> query = max_pool_query(block, mask, c);
  const float center[3] = {(spec.region[0] - 1) / 2.0f, (spec.region[1] - 1) / 2.0f,
                           (spec.region[2] - 1) / 2.0f};
  encode_position(center, window, pe);
  for (std::size_t k = 0; k < c; ++k) query[k] += pe[k];
  std::vector<float> q(c);
  linear_row(query, params.q, q);

  std::vector<float> keys(cells * c), values(cells * c), key_in(c);
  for (std::size_t r = 0; r < cells; ++r) {
    const VoxelCoord off = child_offset(r, spec);
    const float coord[3] = {static_cast<float>(off.x), static_cast<float>(off.y),
                            static_cast<float>(off.z)};
    encode_position(coord, window, pe);
    const auto child = block.subspan(r * c, c);
    for (std::size_t k = 0; k < c; ++k) key_in[k] = child[k] + pe[k];
    linear_row(key_in, params.k, {keys.data() + r * c, c});
    linear_row(child, params.v, {values.data() + r * c, c});
  }

  std::vector<float> attn(c), out(c);
  const auto key_mask = params.variant == PoolVariant::AttnPoolMasked
                            ? mask
                            : std::span<const std::uint8_t>{};
  attend_heads(q, keys, values, key_mask, params.heads, attn);
  linear_row(attn, params.o, out);
  return out;
}

SparseVoxelGrid pool_grid(const SparseVoxelGrid& grid, const PoolRegionSpec& spec,
                          const PoolParams& params) {
  require(params.channels == grid.channels(), "pool_grid: channel mismatch");
  const RegionBlocks rb = group_regions(grid, spec);
  SparseVoxelGrid out;
  out.spec = grid.spec;
  for (int a = 0; a < 3; ++a) out.spec.voxel_size[a] *= spec.region[a];
  out.dims = rb.parent_dims;
  out.coords = rb.parents;
  const std::size_t c = grid.channels(), cells = spec.cells();
  out.features = FeatureTensor({rb.num_regions(), c});
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(rb.num_regions()); ++r) {
    const std::vector<float> pooled =
        attn_pool({rb.blocks.data() + r * cells * c, cells * c}, rb.mask(r), spec, params);
    std::copy(pooled.begin(), pooled.end(), out.features.row(r).begin());
  }
  return out;
}

}  // namespace dsvt
