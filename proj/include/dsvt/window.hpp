#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dsvt/config.hpp"
#include "dsvt/voxel_grid.hpp"

namespace dsvt {

struct WindowSpec {
  Extent3 size{1, 1, 1};
  Extent3 shift{0, 0, 0};

  void validate() const;
  friend bool operator==(const WindowSpec&, const WindowSpec&) = default;
};

// Voxels grouped into non-empty windows, ordered by window key. Within a
// roster voxels keep their raster order.
struct WindowAssignment {
  WindowSpec spec;
  std::vector<std::int64_t> keys;       // per window, ascending
  std::vector<VoxelCoord> cells;        // per window: window cell coordinate
  std::vector<std::size_t> offsets;     // num_windows + 1
  std::vector<std::uint32_t> members;   // voxel indices grouped by window
  std::vector<std::uint32_t> window_of_voxel;
  std::vector<VoxelCoord> inner;        // per voxel, in [0, size)

  std::size_t num_windows() const { return keys.size(); }
  std::size_t num_voxels() const { return window_of_voxel.size(); }
  std::size_t window_size(std::size_t w) const { return offsets[w + 1] - offsets[w]; }
  std::span<const std::uint32_t> roster(std::size_t w) const {
    return {members.data() + offsets[w], window_size(w)};
  }
};

WindowAssignment assign_windows(std::span<const VoxelCoord> coords, const GridDims& dims,
                                const WindowSpec& spec);
inline WindowAssignment assign_windows(const SparseVoxelGrid& grid, const WindowSpec& spec) {
  return assign_windows(grid.coords, grid.dims, spec);
}

struct ScheduledBlock {
  WindowSpec window;
  std::size_t stage = 0;
};

struct BlockSchedule {
  std::vector<ScheduledBlock> blocks;
};

// Block 2k uses window_a unshifted, block 2k+1 uses window_b shifted by half
// its size. The counter runs across stages. In the voxel variant each stage
// replaces the window height with its z_windows entry; Z is only shifted when
// the window is shorter than the stage's Z extent.
BlockSchedule make_schedule(const BackboneConfig& cfg);

}  // namespace dsvt
