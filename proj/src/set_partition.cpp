#include "dsvt/set_partition.hpp"

#include <algorithm>
#include <numeric>

#include "dsvt/errors.hpp"
#include "dsvt/layers.hpp"

namespace dsvt {

std::string to_string(SortKind k) {
  switch (k) {
    case SortKind::XMajor: return "x";
    case SortKind::YMajor: return "y";
    case SortKind::Random: return "random";
    case SortKind::Sparse: return "sparse";
    case SortKind::Regional: return "regional";
  }
  return "?";
}

std::uint32_t count_sets(std::uint32_t n, std::uint32_t tau) {
  require(n >= 1, "count_sets: empty windows are never partitioned");
  require(tau >= 1, "count_sets: tau must be >= 1");
  return n / tau + (n % tau > 0 ? 1u : 0u);
}

IndexTable set_indices(std::uint32_t n, std::uint32_t tau, std::uint32_t sets) {
  require(sets == count_sets(n, tau), "set_indices: set count does not match count_sets");
  IndexTable t;
  t.n = n;
  t.tau = tau;
  t.sets = sets;
  const std::size_t slots = std::size_t{sets} * tau;
  t.q.resize(slots);
  t.valid.resize(slots);
  const std::uint64_t denom = std::uint64_t{sets} * tau;
  for (std::uint32_t j = 0; j < sets; ++j) {
    for (std::uint32_t k = 0; k < tau; ++k) {
      const std::uint64_t pos = std::uint64_t{j} * tau + k;
      const std::size_t at = static_cast<std::size_t>(pos);
      t.q[at] = static_cast<std::uint32_t>(pos * n / denom);
      t.valid[at] = (k == 0 || t.q[at] != t.q[at - 1]) ? 1 : 0;
    }
  }
  return t;
}

std::uint32_t IndexTable::unique_count(std::uint32_t j) const {
  std::uint32_t c = 0;
  for (std::uint32_t k = 0; k < tau; ++k) c += is_valid(j, k);
  return c;
}

std::vector<std::vector<std::uint32_t>> IndexTable::rows() const {
  std::vector<std::vector<std::uint32_t>> out(sets);
  for (std::uint32_t j = 0; j < sets; ++j)
    out[j].assign(q.begin() + std::size_t{j} * tau, q.begin() + std::size_t{j + 1} * tau);
  return out;
}

std::optional<std::string> find_table_violation(const IndexTable& t) {
  const std::size_t slots = std::size_t{t.sets} * t.tau;
  if (t.q.size() != slots || t.valid.size() != slots) return "table size mismatch";
  if (t.sets == 0 || t.n == 0) return "empty table";
  if (slots - t.n >= t.tau) return "padding: S*tau - N >= tau";

  constexpr std::uint32_t kNone = ~0u;
  std::vector<std::uint32_t> owner(t.n, kNone);
  const std::uint32_t lo = t.n / t.sets;
  for (std::uint32_t j = 0; j < t.sets; ++j) {
    std::uint32_t unique = 0;
    for (std::uint32_t k = 0; k < t.tau; ++k) {
      const std::uint32_t v = t.at(j, k);
      if (v >= t.n) return "index " + std::to_string(v) + " out of range";
      if (k > 0 && v < t.at(j, k - 1))
        return "monotonicity: row " + std::to_string(j) + " decreases at slot " + std::to_string(k);
      const bool first = k == 0 || v != t.at(j, k - 1);
      if (t.is_valid(j, k) != first)
        return "mask: row " + std::to_string(j) + " slot " + std::to_string(k) +
               " is not a first occurrence marker";
      if (!first) continue;
      ++unique;
      if (owner[v] != kNone && owner[v] != j)
        return "non-overlap: index " + std::to_string(v) + " in rows " +
               std::to_string(owner[v]) + " and " + std::to_string(j);
      owner[v] = j;
    }
    if (unique < lo || unique > lo + 1)
      return "equivalence: row " + std::to_string(j) + " has " + std::to_string(unique) +
             " unique indices, expected " + std::to_string(lo) + " or " + std::to_string(lo + 1);
  }
  for (std::uint32_t v = 0; v < t.n; ++v)
    if (owner[v] == kNone) return "completeness: index " + std::to_string(v) + " missing";
  return std::nullopt;
}

std::uint64_t window_stream(const VoxelCoord& cell) {
  const std::uint64_t packed = (std::uint64_t(std::uint32_t(cell.x)) << 42) ^
                               (std::uint64_t(std::uint32_t(cell.y)) << 21) ^
                               std::uint64_t(std::uint32_t(cell.z));
  return ParamRng(packed).next_u64();
}

std::vector<std::uint32_t> sort_voxels(std::span<const VoxelCoord> inner, SortStrategy strategy,
                                       std::uint32_t tau, std::uint64_t stream) {
  const std::size_t n = inner.size();
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);

  auto by_x = [&](std::uint32_t a, std::uint32_t b) {
    const auto &p = inner[a], &q = inner[b];
    if (p.x != q.x) return p.x < q.x;
    if (p.y != q.y) return p.y < q.y;
    if (p.z != q.z) return p.z < q.z;
    return a < b;
  };
  auto by_y = [&](std::uint32_t a, std::uint32_t b) {
    const auto &p = inner[a], &q = inner[b];
    if (p.y != q.y) return p.y < q.y;
    if (p.x != q.x) return p.x < q.x;
    if (p.z != q.z) return p.z < q.z;
    return a < b;
  };

  switch (strategy.kind) {
    case SortKind::XMajor:
    case SortKind::Regional:
      std::sort(order.begin(), order.end(), by_x);
      break;
    case SortKind::YMajor:
      std::sort(order.begin(), order.end(), by_y);
      break;
    case SortKind::Random: {
      ParamRng rng(strategy.seed ^ stream);
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
      break;
    }
    case SortKind::Sparse: {
      if (n == 0) break;
      std::sort(order.begin(), order.end(), by_x);
      const std::uint32_t sets = count_sets(static_cast<std::uint32_t>(n), tau);
      std::vector<std::uint32_t> strided;
      strided.reserve(n);
      for (std::uint32_t j = 0; j < sets; ++j)
        for (std::size_t i = j; i < n; i += sets) strided.push_back(order[i]);
      order = std::move(strided);
      break;
    }
  }
  return order;
}

SetPartition build_partition(const WindowAssignment& assignment, SortStrategy strategy,
                             std::uint32_t tau) {
  require(tau >= 1, "build_partition: tau must be >= 1");
  const std::size_t num_windows = assignment.num_windows();
  SetPartition p;
  p.tau = tau;
  p.windows.resize(num_windows);

#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t w = 0; w < static_cast<std::int64_t>(num_windows); ++w) {
    const auto roster = assignment.roster(w);
    std::vector<VoxelCoord> inner(roster.size());
    for (std::size_t i = 0; i < roster.size(); ++i) inner[i] = assignment.inner[roster[i]];
    WindowSets& ws = p.windows[w];
    ws.n = static_cast<std::uint32_t>(roster.size());
    ws.order = sort_voxels(inner, strategy, tau, window_stream(assignment.cells[w]));
    ws.table = set_indices(ws.n, tau);
  }

  std::uint32_t offset = 0;
  for (auto& ws : p.windows) {
    ws.set_offset = offset;
    offset += ws.table.sets;
  }
  p.total_sets = offset;
  const std::size_t slots = std::size_t{offset} * tau;
  p.slot_voxel.resize(slots);
  p.slot_valid.resize(slots);
  p.window_of_set.resize(offset);

#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t w = 0; w < static_cast<std::int64_t>(num_windows); ++w) {
    const WindowSets& ws = p.windows[w];
    const auto roster = assignment.roster(w);
    for (std::uint32_t j = 0; j < ws.table.sets; ++j) {
      p.window_of_set[ws.set_offset + j] = static_cast<std::uint32_t>(w);
      for (std::uint32_t k = 0; k < tau; ++k) {
        const std::size_t slot = std::size_t{ws.set_offset + j} * tau + k;
        p.slot_voxel[slot] = roster[ws.order[ws.table.at(j, k)]];
        p.slot_valid[slot] = ws.table.is_valid(j, k) ? 1 : 0;
      }
    }
  }
  return p;
}

SetBatch gather_sets(const FeatureTensor& voxel_features, const WindowAssignment& assignment,
                     const SetPartition& partition) {
  require(voxel_features.rank() == 2 && voxel_features.dim(0) == assignment.num_voxels(),
          "gather_sets: feature rows do not match the window assignment");
  const std::size_t c = voxel_features.dim(1);
  const std::size_t sets = partition.total_sets, tau = partition.tau;
  SetBatch b;
  b.features = FeatureTensor({sets, tau, c});
  b.coords = FeatureTensor({sets, tau, 3});
  b.key_mask = partition.slot_valid;
  b.window_of_set = partition.window_of_set;
  const std::size_t rows = voxel_features.dim(0);
  for (std::uint32_t v : partition.slot_voxel)
    if (v >= rows) throw InvariantViolation("gather_sets: slot points outside the roster");
#pragma omp parallel for schedule(static)
  for (std::int64_t s = 0; s < static_cast<std::int64_t>(partition.total_slots()); ++s) {
    const std::uint32_t v = partition.slot_voxel[s];
    const auto src = voxel_features.row(v);
    std::copy(src.begin(), src.end(), b.features.row(s).begin());
    const VoxelCoord& in = assignment.inner[v];
    auto o = b.coords.row(s);
    o[0] = static_cast<float>(in.x);
    o[1] = static_cast<float>(in.y);
    o[2] = static_cast<float>(in.z);
  }
  return b;
}

void scatter_sets(const FeatureTensor& set_features, const SetPartition& partition,
                  FeatureTensor& voxel_features) {
  require(set_features.rank() == 3 && set_features.dim(0) == partition.total_sets &&
              set_features.dim(1) == partition.tau,
          "scatter_sets: batch shape " + shape_str(set_features.shape()) +
              " does not match the partition");
  require(voxel_features.rank() == 2 && voxel_features.dim(1) == set_features.dim(2),
          "scatter_sets: channel mismatch");
#pragma omp parallel for schedule(static)
  for (std::int64_t s = 0; s < static_cast<std::int64_t>(partition.total_slots()); ++s) {
    if (!partition.slot_valid[s]) continue;
    const auto src = set_features.row(s);
    std::copy(src.begin(), src.end(), voxel_features.row(partition.slot_voxel[s]).begin());
  }
}

}  // namespace dsvt
