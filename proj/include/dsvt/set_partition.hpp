#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsvt/tensor.hpp"
#include "dsvt/voxel_grid.hpp"
#include "dsvt/window.hpp"

namespace dsvt {

enum class SortKind { XMajor, YMajor, Random, Sparse, Regional };

struct SortStrategy {
  SortKind kind = SortKind::XMajor;
  std::uint64_t seed = 0;  // Random only

  static SortStrategy x_major() { return {SortKind::XMajor, 0}; }
  static SortStrategy y_major() { return {SortKind::YMajor, 0}; }
  static SortStrategy random(std::uint64_t seed) { return {SortKind::Random, seed}; }
  static SortStrategy sparse() { return {SortKind::Sparse, 0}; }
  static SortStrategy regional() { return {SortKind::Regional, 0}; }
};

std::string to_string(SortKind k);

// Minimal number of sets of capacity tau covering n voxels. n, tau >= 1.
std::uint32_t count_sets(std::uint32_t n, std::uint32_t tau);

// The S x tau table of raw voxel positions for one window, plus the
// first-occurrence mask. q(j, k) = floor((j*tau + k) * n / (S*tau)).
struct IndexTable {
  std::uint32_t n = 0;
  std::uint32_t tau = 0;
  std::uint32_t sets = 0;
  std::vector<std::uint32_t> q;     // sets * tau
  std::vector<std::uint8_t> valid;  // sets * tau

  std::uint32_t at(std::uint32_t j, std::uint32_t k) const { return q[std::size_t{j} * tau + k]; }
  bool is_valid(std::uint32_t j, std::uint32_t k) const {
    return valid[std::size_t{j} * tau + k] != 0;
  }
  std::uint32_t unique_count(std::uint32_t j) const;
  std::vector<std::vector<std::uint32_t>> rows() const;
};

IndexTable set_indices(std::uint32_t n, std::uint32_t tau, std::uint32_t sets);
inline IndexTable set_indices(std::uint32_t n, std::uint32_t tau) {
  return set_indices(n, tau, count_sets(n, tau));
}

// Returns a description of the first broken guarantee, or nullopt when the
// table is disjoint across rows, covers [0, n), has per-row unique counts in
// {floor(n/S), floor(n/S) + 1}, is monotone per row, and masks exactly the
// repeated slots.
std::optional<std::string> find_table_violation(const IndexTable& table);

// Seed stream of a window for the Random strategy, derived from its cell.
std::uint64_t window_stream(const VoxelCoord& cell);

// Permutation of roster positions for one window. `inner` holds the
// inner-window coordinates in roster order. `tau` is only used by Sparse.
std::vector<std::uint32_t> sort_voxels(std::span<const VoxelCoord> inner, SortStrategy strategy,
                                       std::uint32_t tau, std::uint64_t stream = 0);

struct WindowSets {
  std::uint32_t n = 0;
  std::uint32_t set_offset = 0;  // first global set index of this window
  IndexTable table;
  std::vector<std::uint32_t> order;  // roster positions after sorting
};

struct SetPartition {
  std::uint32_t tau = 0;
  std::vector<WindowSets> windows;
  std::uint32_t total_sets = 0;
  // Flattened (total_sets, tau): global voxel index and validity per slot.
  std::vector<std::uint32_t> slot_voxel;
  std::vector<std::uint8_t> slot_valid;
  std::vector<std::uint32_t> window_of_set;

  std::size_t total_slots() const { return slot_voxel.size(); }
};

// Partitions every window. Windows are independent and built in parallel.
SetPartition build_partition(const WindowAssignment& assignment, SortStrategy strategy,
                             std::uint32_t tau);

struct SetBatch {
  FeatureTensor features;  // (sets, tau, C)
  FeatureTensor coords;    // (sets, tau, 3) inner-window coordinates
  std::vector<std::uint8_t> key_mask;
  std::vector<std::uint32_t> window_of_set;

  std::size_t num_sets() const { return window_of_set.size(); }
};

SetBatch gather_sets(const FeatureTensor& voxel_features, const WindowAssignment& assignment,
                     const SetPartition& partition);

// Writes every valid slot of `set_features` back to its voxel row. Each voxel
// is written exactly once.
void scatter_sets(const FeatureTensor& set_features, const SetPartition& partition,
                  FeatureTensor& voxel_features);

}  // namespace dsvt
