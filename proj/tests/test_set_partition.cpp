#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <numeric>
#include <set>

#include "dsvt/parallel.hpp"
#include "dsvt/set_partition.hpp"
#include "test_helpers.hpp"

using namespace dsvt;
using Rows = std::vector<std::vector<std::uint32_t>>;

namespace {

// Smallest S with S * tau >= n, by enumeration.
std::uint32_t sets_by_enumeration(std::uint32_t n, std::uint32_t tau) {
  std::uint32_t s = 1;
  while (std::uint64_t{s} * tau < n) ++s;
  return s;
}

// Independent statement of the three partition guarantees on raw rows.
void check_guarantees(const IndexTable& t) {
  std::vector<std::set<std::uint32_t>> unique(t.sets);
  for (std::uint32_t j = 0; j < t.sets; ++j)
    for (std::uint32_t k = 0; k < t.tau; ++k) unique[j].insert(t.at(j, k));
  std::set<std::uint32_t> all;
  std::size_t sum = 0;
  for (const auto& u : unique) {
    all.insert(u.begin(), u.end());
    sum += u.size();
    CHECK(u.size() >= t.n / t.sets);
    CHECK(u.size() <= t.n / t.sets + 1);
  }
  CHECK(sum == all.size());  // disjoint rows
  CHECK(all.size() == t.n);  // complete
  CHECK(*all.rbegin() == t.n - 1);
}

}  // namespace

TEST_CASE("count_sets") {
  CHECK(count_sets(36, 36) == 1);
  CHECK(count_sets(10, 4) == 3);
  CHECK(count_sets(1, 36) == 1);
  for (std::uint32_t n = 1; n <= 200; ++n)
    for (std::uint32_t tau = 1; tau <= 40; ++tau) REQUIRE(count_sets(n, tau) == sets_by_enumeration(n, tau));
  CHECK_THROWS_AS(count_sets(0, 4), ContractError);
}

TEST_CASE("index table fixtures") {
  SUBCASE("N=10 tau=4") {
    const auto t = set_indices(10, 4);
    CHECK(t.rows() == Rows{{0, 0, 1, 2}, {3, 4, 5, 5}, {6, 7, 8, 9}});
    CHECK(t.unique_count(0) == 3);
    CHECK(t.unique_count(1) == 3);
    CHECK(t.unique_count(2) == 4);
    CHECK(std::vector<std::uint8_t>(t.valid.begin() + 4, t.valid.begin() + 8) ==
          std::vector<std::uint8_t>{1, 1, 1, 0});
  }
  SUBCASE("N=5 tau=4") {
    const auto t = set_indices(5, 4);
    CHECK(t.rows() == Rows{{0, 0, 1, 1}, {2, 3, 3, 4}});
    CHECK(t.unique_count(0) == 2);
    CHECK(t.unique_count(1) == 3);
  }
  SUBCASE("N = S * tau has no duplicates") {
    const auto t = set_indices(8, 4);
    CHECK(t.rows() == Rows{{0, 1, 2, 3}, {4, 5, 6, 7}});
    CHECK(std::all_of(t.valid.begin(), t.valid.end(), [](auto v) { return v == 1; }));
  }
  CHECK_THROWS_AS(set_indices(10, 4, 2), ContractError);
}

TEST_CASE("partition guarantees hold on random (N, tau)") {
  ParamRng rng(99);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto n = static_cast<std::uint32_t>(1 + rng.below(1500));
    const auto tau = static_cast<std::uint32_t>(1 + rng.below(200));
    const auto t = set_indices(n, tau);
    REQUIRE_FALSE(find_table_violation(t));
    CHECK(std::uint64_t{t.sets} * tau - n < tau);
    std::size_t valid = std::count(t.valid.begin(), t.valid.end(), 1);
    CHECK(valid == n);
    for (std::uint32_t j = 0; j < t.sets; ++j)
      for (std::uint32_t k = 1; k < tau; ++k) CHECK(t.at(j, k - 1) <= t.at(j, k));
    check_guarantees(t);
  }
}

TEST_CASE("exact arithmetic at large extents") {
  const std::uint32_t big = 1u << 20;
  const auto t = set_indices(big, 3);
  CHECK(t.sets == (big + 2) / 3);
  CHECK_FALSE(find_table_violation(t));
  const auto single = set_indices(big - 1, big);
  CHECK(single.sets == 1);
  CHECK(single.q.back() == big - 2);
  CHECK_FALSE(find_table_violation(single));
}

TEST_CASE("violation finder rejects a corrupted table") {
  auto t = set_indices(10, 4);
  t.q[4] = 2;  // row 1 starts with an index owned by row 0
  const auto v = find_table_violation(t);
  REQUIRE(v);
  CHECK(v->find("non-overlap") != std::string::npos);
  t = set_indices(10, 4);
  t.q[11] = 8;
  t.valid[11] = 0;
  CHECK(find_table_violation(t)->find("completeness") != std::string::npos);
}

TEST_CASE("sort strategies") {
  const std::vector<VoxelCoord> one{{3, 4, 0}};
  for (auto s : {SortStrategy::x_major(), SortStrategy::y_major(), SortStrategy::random(5),
                 SortStrategy::sparse(), SortStrategy::regional()})
    CHECK(sort_voxels(one, s, 4) == std::vector<std::uint32_t>{0});

  // inner coords {(0,1), (1,0), (0,0)}
  const std::vector<VoxelCoord> three{{0, 1, 0}, {1, 0, 0}, {0, 0, 0}};
  CHECK(sort_voxels(three, SortStrategy::x_major(), 4) == std::vector<std::uint32_t>{2, 0, 1});
  CHECK(sort_voxels(three, SortStrategy::y_major(), 4) == std::vector<std::uint32_t>{2, 1, 0});
  CHECK(sort_voxels(three, SortStrategy::regional(), 4) == sort_voxels(three, SortStrategy::x_major(), 4));

  std::vector<VoxelCoord> full;
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x) full.push_back({x, y, 0});

  SUBCASE("random is a seeded permutation") {
    const auto a = sort_voxels(full, SortStrategy::random(7), 36, 1);
    CHECK(a == sort_voxels(full, SortStrategy::random(7), 36, 1));
    CHECK(a != sort_voxels(full, SortStrategy::random(8), 36, 1));
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::uint32_t> ids(full.size());
    std::iota(ids.begin(), ids.end(), 0u);
    CHECK(sorted == ids);
  }
  SUBCASE("sparse strides x-major ranks across sets") {
    const auto x = sort_voxels(full, SortStrategy::x_major(), 36);
    const auto s = sort_voxels(full, SortStrategy::sparse(), 36);
    std::vector<std::uint32_t> rank(full.size());
    for (std::uint32_t i = 0; i < x.size(); ++i) rank[x[i]] = i;
    const auto table = set_indices(144, 36);
    for (std::uint32_t j = 0; j < table.sets; ++j)
      for (std::uint32_t k = 0; k < 36; ++k) CHECK(rank[s[table.at(j, k)]] % 4 == j);
  }
}

namespace {

struct Fixture {
  std::vector<VoxelCoord> coords;
  GridDims dims;
  FeatureTensor features;
};

Fixture scene_fixture(std::uint64_t seed, std::size_t channels) {
  Fixture f;
  const auto spec = dsvt::testing::small_pillar_grid();
  f.dims = spec.dims();
  f.coords = occupied_voxels(synth_scene(dsvt::testing::small_scene(seed)), spec);
  f.features = FeatureTensor({f.coords.size(), channels});
  ParamRng rng(seed);
  for (auto& v : f.features.values()) v = rng.uniform(1.0f);
  return f;
}

}  // namespace

TEST_CASE("partition tables do not depend on the sort strategy") {
  const auto f = scene_fixture(31, 4);
  const auto a = assign_windows(f.coords, f.dims, WindowSpec{{12, 12, 1}, {0, 0, 0}});
  const auto base = build_partition(a, SortStrategy::x_major(), 9);
  for (auto s : {SortStrategy::y_major(), SortStrategy::random(3), SortStrategy::sparse()}) {
    const auto p = build_partition(a, s, 9);
    REQUIRE(p.windows.size() == base.windows.size());
    for (std::size_t w = 0; w < p.windows.size(); ++w) {
      CHECK(p.windows[w].table.q == base.windows[w].table.q);
      CHECK(p.windows[w].table.valid == base.windows[w].table.valid);
    }
  }
}

TEST_CASE("gather of the N=10, tau=4 window") {
  std::vector<VoxelCoord> coords;
  for (int x = 0; x < 10; ++x) coords.push_back({x, 0, 0});
  FeatureTensor feats({10, 2});
  for (std::size_t i = 0; i < 10; ++i) feats.row(i)[0] = static_cast<float>(i);
  const auto a = assign_windows(coords, GridDims{10, 1, 1}, WindowSpec{{12, 12, 1}, {0, 0, 0}});
  const auto p = build_partition(a, SortStrategy::x_major(), 4);
  const auto b = gather_sets(feats, a, p);
  REQUIRE(b.num_sets() == 3);
  CHECK(b.features.row(4 + 2)[0] == 5.0f);
  CHECK(b.features.row(4 + 3)[0] == 5.0f);
  CHECK(std::vector<std::uint8_t>(b.key_mask.begin() + 4, b.key_mask.begin() + 8) ==
        std::vector<std::uint8_t>{1, 1, 1, 0});
  CHECK(b.coords.row(6)[0] == 5.0f);
}

TEST_CASE("identity partition gathers the roster in x-major order") {
  // 2 x 3 block, tau = N = 6
  std::vector<VoxelCoord> coords;
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 2; ++x) coords.push_back({x, y, 0});
  FeatureTensor feats({6, 1}, {0, 1, 2, 3, 4, 5});
  const auto a = assign_windows(coords, GridDims{2, 3, 1}, WindowSpec{{4, 4, 1}, {0, 0, 0}});
  const auto b = gather_sets(feats, a, build_partition(a, SortStrategy::x_major(), 6));
  CHECK(b.features.storage() == std::vector<float>{0, 2, 4, 1, 3, 5});
}

TEST_CASE("scatter is the inverse of gather") {
  const auto f = scene_fixture(32, 5);
  for (const WindowSpec spec : {WindowSpec{{12, 12, 1}, {0, 0, 0}}, WindowSpec{{24, 24, 1}, {12, 12, 0}}}) {
    const auto a = assign_windows(f.coords, f.dims, spec);
    const auto p = build_partition(a, SortStrategy::y_major(), 7);

    std::vector<std::size_t> writes(a.num_windows(), 0);
    for (std::size_t s = 0; s < p.total_slots(); ++s)
      if (p.slot_valid[s]) ++writes[a.window_of_voxel[p.slot_voxel[s]]];
    for (std::size_t w = 0; w < a.num_windows(); ++w) CHECK(writes[w] == a.window_size(w));

    const auto b = gather_sets(f.features, a, p);
    FeatureTensor out({f.coords.size(), 5}, -1.0f);
    scatter_sets(b.features, p, out);
    CHECK(out == f.features);

    // mark every slot with its set index; permuting sets must not matter
    FeatureTensor tagged = b.features;
    for (std::size_t s = 0; s < tagged.num_rows(); ++s)
      for (float& v : tagged.row(s)) v += static_cast<float>(s);
    FeatureTensor first({f.coords.size(), 5});
    scatter_sets(tagged, p, first);
    std::vector<std::uint32_t> perm(p.total_sets);
    std::iota(perm.begin(), perm.end(), 0u);
    std::reverse(perm.begin(), perm.end());
    SetPartition permuted = p;
    FeatureTensor permuted_rows(tagged.shape());
    for (std::uint32_t s = 0; s < p.total_sets; ++s)
      for (std::uint32_t k = 0; k < p.tau; ++k) {
        const std::size_t from = std::size_t{perm[s]} * p.tau + k, to = std::size_t{s} * p.tau + k;
        permuted.slot_voxel[to] = p.slot_voxel[from];
        permuted.slot_valid[to] = p.slot_valid[from];
        const auto src = tagged.row(from);
        std::copy(src.begin(), src.end(), permuted_rows.row(to).begin());
      }
    FeatureTensor second({f.coords.size(), 5});
    scatter_sets(permuted_rows, permuted, second);
    CHECK(first == second);
  }
}

TEST_CASE("duplicate slots carry a copy of a valid row") {
  const auto f = scene_fixture(33, 3);
  const auto a = assign_windows(f.coords, f.dims, WindowSpec{{12, 12, 1}, {0, 0, 0}});
  const auto p = build_partition(a, SortStrategy::x_major(), 16);
  const auto b = gather_sets(f.features, a, p);
  for (std::size_t s = 0; s < p.total_slots(); ++s) {
    const auto row = b.features.row(s);
    const auto src = f.features.row(p.slot_voxel[s]);
    CHECK(std::equal(row.begin(), row.end(), src.begin()));
  }
}

TEST_CASE("partition ignores the thread count") {
  const auto f = scene_fixture(34, 2);
  const auto a = assign_windows(f.coords, f.dims, WindowSpec{{12, 12, 1}, {0, 0, 0}});
  const auto base = build_partition(a, SortStrategy::random(1), 8);
  for (int threads : {1, 2, 5}) {
    ThreadScope scope(threads);
    const auto p = build_partition(a, SortStrategy::random(1), 8);
    CHECK(p.slot_voxel == base.slot_voxel);
    CHECK(p.slot_valid == base.slot_valid);
  }
}

TEST_CASE("contract errors") {
  const auto f = scene_fixture(35, 2);
  const auto a = assign_windows(f.coords, f.dims, WindowSpec{{12, 12, 1}, {0, 0, 0}});
  auto p = build_partition(a, SortStrategy::x_major(), 8);
  FeatureTensor wrong({p.total_sets + 1, 8, 2});
  FeatureTensor out = f.features;
  CHECK_THROWS_AS(scatter_sets(wrong, p, out), ContractError);
  p.slot_voxel[0] = static_cast<std::uint32_t>(f.coords.size());
  CHECK_THROWS_AS(gather_sets(f.features, a, p), InvariantViolation);
}
