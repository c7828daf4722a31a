#include "dsvt/window.hpp"

#include <algorithm>
#include <numeric>

#include "dsvt/errors.hpp"

namespace dsvt {

void WindowSpec::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (size[a] < 1) throw ConfigError("window.size: extents must be >= 1");
    if (shift[a] < 0 || shift[a] >= size[a])
      throw ConfigError("window.shift: must lie in [0, size)");
  }
}

WindowAssignment assign_windows(std::span<const VoxelCoord> coords, const GridDims& dims,
                                const WindowSpec& spec) {
  spec.validate();
  const std::int64_t kx = (dims.x - 1 + spec.shift[0]) / spec.size[0] + 1;
  const std::int64_t ky = (dims.y - 1 + spec.shift[1]) / spec.size[1] + 1;

  const std::size_t n = coords.size();
  WindowAssignment out;
  out.spec = spec;
  out.inner.resize(n);
  std::vector<std::int64_t> key(n);
  std::vector<VoxelCoord> cell(n);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    const std::int32_t sx = coords[i].x + spec.shift[0];
    const std::int32_t sy = coords[i].y + spec.shift[1];
    const std::int32_t sz = coords[i].z + spec.shift[2];
    cell[i] = {sx / spec.size[0], sy / spec.size[1], sz / spec.size[2]};
    out.inner[i] = {sx % spec.size[0], sy % spec.size[1], sz % spec.size[2]};
    key[i] = (std::int64_t{cell[i].z} * ky + cell[i].y) * kx + cell[i].x;
  }

  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return key[a] < key[b]; });

  out.members = order;
  out.window_of_voxel.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t v = order[i];
    if (i == 0 || key[v] != out.keys.back()) {
      out.keys.push_back(key[v]);
      out.cells.push_back(cell[v]);
      out.offsets.push_back(i);
    }
    out.window_of_voxel[v] = static_cast<std::uint32_t>(out.keys.size() - 1);
  }
  out.offsets.push_back(n);
  return out;
}

BlockSchedule make_schedule(const BackboneConfig& cfg) {
  cfg.validate();
  const auto z_extents = cfg.stage_z_extents();
  BlockSchedule schedule;
  std::size_t b = 0;
  for (std::size_t s = 0; s < cfg.num_stages(); ++s) {
    for (int i = 0; i < cfg.blocks_per_stage[s]; ++i, ++b) {
      WindowSpec w;
      w.size = b % 2 == 0 ? cfg.window_a : cfg.window_b;
      if (cfg.variant == Variant::Voxel) w.size[2] = cfg.z_windows[s];
      if (b % 2 == 1) {
        w.shift = {w.size[0] / 2, w.size[1] / 2, w.size[2] < z_extents[s] ? w.size[2] / 2 : 0};
      }
      schedule.blocks.push_back({w, s});
    }
  }
  return schedule;
}

}  // namespace dsvt
