#include "dsvt/voxel_grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dsvt/errors.hpp"

namespace dsvt {

void PointCloud::add(std::span<const float> row) {
  require(row.size() == stride(), "point row has wrong width");
  data.insert(data.end(), row.begin(), row.end());
}

void GridSpec::validate() const {
  static constexpr const char* kAxis[3] = {"x", "y", "z"};
  for (int a = 0; a < 3; ++a) {
    if (!std::isfinite(range_min[a]) || !std::isfinite(range_max[a]))
      throw ConfigError(std::string("grid.range: non-finite ") + kAxis[a] + " bound");
    if (!(range_max[a] > range_min[a]))
      throw ConfigError(std::string("grid.range_max: ") + kAxis[a] + " must exceed range_min");
    if (!std::isfinite(voxel_size[a]) || !(voxel_size[a] > 0.0))
      throw ConfigError(std::string("grid.voxel_size: ") + kAxis[a] + " must be > 0");
  }
}

GridDims GridSpec::dims() const {
  auto extent = [&](int a) {
    const double cells = (range_max[a] - range_min[a]) / voxel_size[a];
    return std::max<std::int32_t>(1, static_cast<std::int32_t>(std::ceil(cells - 1e-9)));
  };
  return {extent(0), extent(1), extent(2)};
}

void SparseVoxelGrid::validate() const {
  require(features.rank() == 2 && features.dim(0) == coords.size(),
          "voxel grid: feature rows do not match coordinate count");
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const auto& c = coords[i];
    require(c.x >= 0 && c.x < dims.x && c.y >= 0 && c.y < dims.y && c.z >= 0 && c.z < dims.z,
            "voxel grid: coordinate out of bounds");
    require(i == 0 || coords[i - 1] < c, "voxel grid: coordinates not unique and raster-ordered");
  }
}

EmbedParams random_embed(ParamRng& rng, std::size_t extra_dims, std::size_t channels) {
  return {random_linear(rng, 3 + extra_dims, channels)};
}

namespace {

struct Binned {
  std::int64_t cell;
  std::uint32_t point;
};

// Cell and raster id of every in-range point, sorted by (cell, point values,
// input index) so accumulation order ignores input order.
std::vector<Binned> bin_points(const PointCloud& pc, const GridSpec& spec, const GridDims& dims) {
  const std::size_t n = pc.size();
  std::vector<std::int64_t> cell(n, -1);
  bool finite = true;
#pragma omp parallel for schedule(static) reduction(&& : finite)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    const auto p = pc.point(i);
    bool ok = true;
    for (float v : p) ok = ok && std::isfinite(v);
    if (!ok) {
      finite = false;
      continue;
    }
    std::int64_t idx[3];
    const std::int32_t extents[3] = {dims.x, dims.y, dims.z};
    bool inside = true;
    for (int a = 0; a < 3; ++a) {
      const double rel = (static_cast<double>(p[a]) - spec.range_min[a]) / spec.voxel_size[a];
      if (!(p[a] >= spec.range_min[a]) || !(p[a] < spec.range_max[a])) inside = false;
      idx[a] = static_cast<std::int64_t>(std::floor(rel));
      if (idx[a] < 0 || idx[a] >= extents[a]) inside = false;
    }
    if (inside) cell[i] = (idx[2] * dims.y + idx[1]) * dims.x + idx[0];
  }
  if (!finite) throw InputError("point cloud contains a non-finite value");

  std::vector<Binned> binned;
  binned.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    if (cell[i] >= 0) binned.push_back({cell[i], static_cast<std::uint32_t>(i)});
  std::sort(binned.begin(), binned.end(), [&](const Binned& a, const Binned& b) {
    if (a.cell != b.cell) return a.cell < b.cell;
    const auto pa = pc.point(a.point);
    const auto pb = pc.point(b.point);
    for (std::size_t k = 0; k < pa.size(); ++k)
      if (pa[k] != pb[k]) return pa[k] < pb[k];
    return a.point < b.point;
  });
  return binned;
}

VoxelCoord coord_of(std::int64_t cell, const GridDims& d) {
  VoxelCoord c;
  c.x = static_cast<std::int32_t>(cell % d.x);
  c.y = static_cast<std::int32_t>((cell / d.x) % d.y);
  c.z = static_cast<std::int32_t>(cell / (std::int64_t{d.x} * d.y));
  return c;
}

}  // namespace

std::vector<VoxelCoord> occupied_voxels(const PointCloud& pc, const GridSpec& spec) {
  spec.validate();
  const GridDims dims = spec.dims();
  const auto binned = bin_points(pc, spec, dims);
  std::vector<VoxelCoord> coords;
  for (std::size_t i = 0; i < binned.size(); ++i)
    if (i == 0 || binned[i].cell != binned[i - 1].cell)
      coords.push_back(coord_of(binned[i].cell, dims));
  return coords;
}

SparseVoxelGrid voxelize(const PointCloud& pc, const GridSpec& spec, const EmbedParams& embed) {
  spec.validate();
  require(embed.proj.in_features() == pc.stride(),
          "voxelize: embedding expects " + std::to_string(embed.proj.in_features()) +
              " point descriptor values, cloud has " + std::to_string(pc.stride()));
  const GridDims dims = spec.dims();
  const std::size_t channels = embed.channels();
  const auto binned = bin_points(pc, spec, dims);

  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i < binned.size(); ++i)
    if (i == 0 || binned[i].cell != binned[i - 1].cell) starts.push_back(i);
  const std::size_t num_voxels = starts.size();
  starts.push_back(binned.size());

  SparseVoxelGrid grid;
  grid.spec = spec;
  grid.dims = dims;
  grid.coords.resize(num_voxels);
  grid.features = FeatureTensor({num_voxels, channels});

  const std::size_t width = pc.stride();
#pragma omp parallel for schedule(static)
  for (std::int64_t v = 0; v < static_cast<std::int64_t>(num_voxels); ++v) {
    const VoxelCoord c = coord_of(binned[starts[v]].cell, dims);
    grid.coords[v] = c;
    const double center[3] = {spec.range_min[0] + (c.x + 0.5) * spec.voxel_size[0],
                              spec.range_min[1] + (c.y + 0.5) * spec.voxel_size[1],
                              spec.range_min[2] + (c.z + 0.5) * spec.voxel_size[2]};
    std::vector<double> sum(width, 0.0);
    for (std::size_t i = starts[v]; i < starts[v + 1]; ++i) {
      const auto p = pc.point(binned[i].point);
      for (std::size_t k = 0; k < width; ++k) sum[k] += k < 3 ? p[k] - center[k] : p[k];
    }
    const double count = static_cast<double>(starts[v + 1] - starts[v]);
    std::vector<float> mean(width);
    for (std::size_t k = 0; k < width; ++k) mean[k] = static_cast<float>(sum[k] / count);
    auto row = grid.features.row(v);
    linear_row(mean, embed.proj, row);
    for (float& x : row) x = std::max(x, 0.0f);
  }
  return grid;
}

FeatureTensor dense_bev_scatter(const SparseVoxelGrid& grid) {
  if (grid.dims.z != 1)
    throw ContractError("dense_bev_scatter: grid has " + std::to_string(grid.dims.z) +
                        " Z cells, expected 1");
  const std::size_t c = grid.channels();
  const std::size_t gy = grid.dims.y, gx = grid.dims.x;
  FeatureTensor bev({c, gy, gx});
  const std::size_t plane = gy * gx;
#pragma omp parallel for schedule(static)
  for (std::int64_t v = 0; v < static_cast<std::int64_t>(grid.size()); ++v) {
    const auto& xy = grid.coords[v];
    const std::size_t cell = static_cast<std::size_t>(xy.y) * gx + xy.x;
    const auto row = grid.features.row(v);
    for (std::size_t k = 0; k < c; ++k) bev[k * plane + cell] = row[k];
  }
  return bev;
}

FeatureTensor gather_bev(const FeatureTensor& bev, const std::vector<VoxelCoord>& coords) {
  require(bev.rank() == 3, "gather_bev: expected a (C, Gy, Gx) map");
  const std::size_t c = bev.dim(0), gy = bev.dim(1), gx = bev.dim(2);
  FeatureTensor out({coords.size(), c});
  for (std::size_t v = 0; v < coords.size(); ++v) {
    const std::size_t cell = static_cast<std::size_t>(coords[v].y) * gx + coords[v].x;
    require(coords[v].y < static_cast<std::int32_t>(gy) && coords[v].x < static_cast<std::int32_t>(gx),
            "gather_bev: coordinate outside map");
    for (std::size_t k = 0; k < c; ++k) out.row(v)[k] = bev[k * gy * gx + cell];
  }
  return out;
}

}  // namespace dsvt
