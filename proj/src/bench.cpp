#include "dsvt/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>
#include <type_traits>

#include "dsvt/errors.hpp"
#include "dsvt/layers.hpp"
#include "dsvt/set_partition.hpp"

namespace dsvt {

using nlohmann::json;

void SceneModel::validate() const {
  for (int a = 0; a < 3; ++a)
    if (!(extent_max[a] > extent_min[a])) throw ConfigError("scene.extent_max must exceed extent_min");
  if (count_jitter < 0.0 || count_jitter > 1.0)
    throw ConfigError("scene.count_jitter must lie in [0, 1]");
  if (cluster_std_xy < 0.0 || cluster_std_z < 0.0)
    throw ConfigError("scene.cluster_std must be >= 0");
}

json scene_to_json(const SceneModel& m) {
  auto vec = [](const Vec3& v) { return json::array({v[0], v[1], v[2]}); };
  return {{"extent_min", vec(m.extent_min)},
          {"extent_max", vec(m.extent_max)},
          {"clusters", m.clusters},
          {"points_per_cluster", m.points_per_cluster},
          {"count_jitter", m.count_jitter},
          {"cluster_std_xy", m.cluster_std_xy},
          {"cluster_std_z", m.cluster_std_z},
          {"ground_z", m.ground_z},
          {"background_points", m.background_points},
          {"extra_dims", m.extra_dims},
          {"seed", m.seed}};
}

SceneModel scene_from_json(const json& j) {
  SceneModel m;
  try {
    auto vec = [&](const char* key, Vec3& out) {
      if (!j.contains(key)) return;
      const auto v = j.at(key).get<std::vector<double>>();
      if (v.size() != 3) throw ConfigError(std::string("scene.") + key + " needs 3 values");
      out = {v[0], v[1], v[2]};
    };
    auto count = [&](const char* key, auto& out) {
      if (!j.contains(key)) return;
      const auto& v = j.at(key);
      if (!v.is_number_unsigned())
        throw ConfigError(std::string("scene.") + key + " must be a non-negative integer");
      out = v.template get<std::remove_reference_t<decltype(out)>>();
    };
    vec("extent_min", m.extent_min);
    vec("extent_max", m.extent_max);
    count("clusters", m.clusters);
    count("points_per_cluster", m.points_per_cluster);
    m.count_jitter = j.value("count_jitter", m.count_jitter);
    m.cluster_std_xy = j.value("cluster_std_xy", m.cluster_std_xy);
    m.cluster_std_z = j.value("cluster_std_z", m.cluster_std_z);
    m.ground_z = j.value("ground_z", m.ground_z);
    count("background_points", m.background_points);
    count("extra_dims", m.extra_dims);
    count("seed", m.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scene: ") + e.what());
  }
  m.validate();
  return m;
}

namespace {

double unit(ParamRng& rng) { return static_cast<double>(rng.next_u64() >> 11) * 0x1.0p-53; }

double normal(ParamRng& rng) {
  const double u1 = 1.0 - unit(rng);  // (0, 1]
  const double u2 = unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace

PointCloud synth_scene(const SceneModel& m) {
  m.validate();
  ParamRng rng(m.seed);
  PointCloud pc;
  pc.extra_dims = m.extra_dims;
  std::vector<float> row(3 + m.extra_dims);
  auto emit = [&](double x, double y, double z) {
    row[0] = static_cast<float>(x);
    row[1] = static_cast<float>(y);
    row[2] = static_cast<float>(z);
    for (std::size_t k = 0; k < m.extra_dims; ++k) row[3 + k] = static_cast<float>(unit(rng));
    pc.add(row);
  };
  auto lerp = [&](int a) { return m.extent_min[a] + unit(rng) * (m.extent_max[a] - m.extent_min[a]); };

  for (std::size_t c = 0; c < m.clusters; ++c) {
    const double cx = lerp(0), cy = lerp(1);
    const double jitter = m.count_jitter * (2.0 * unit(rng) - 1.0);
    const auto count = static_cast<std::size_t>(
        std::llround(static_cast<double>(m.points_per_cluster) * (1.0 + jitter)));
    for (std::size_t i = 0; i < count; ++i) {
      const double x = cx + m.cluster_std_xy * normal(rng);
      const double y = cy + m.cluster_std_xy * normal(rng);
      const double z = m.ground_z + m.cluster_std_z * normal(rng);
      emit(x, y, z);
    }
  }
  for (std::size_t i = 0; i < m.background_points; ++i) {
    const double x = lerp(0), y = lerp(1), z = lerp(2);
    emit(x, y, z);
  }
  return pc;
}

std::string to_string(BatchStrategy s) {
  switch (s) {
    case BatchStrategy::FullPadding: return "full_padding";
    case BatchStrategy::Bucketing: return "bucketing";
    case BatchStrategy::DynamicSet: return "dynamic_set";
  }
  return "?";
}

BatchStrategy parse_batch_strategy(const std::string& s) {
  if (s == "full_padding") return BatchStrategy::FullPadding;
  if (s == "bucketing") return BatchStrategy::Bucketing;
  if (s == "dynamic_set") return BatchStrategy::DynamicSet;
  throw ConfigError("strategies: unknown strategy \"" + s + "\"");
}

namespace {

std::size_t window_cells(const WindowSpec& w) {
  return static_cast<std::size_t>(w.size[0]) * w.size[1] * w.size[2];
}

}  // namespace

std::vector<std::size_t> default_bucket_bounds(const WindowSpec& window) {
  const std::size_t cells = window_cells(window);
  std::vector<std::size_t> b{(cells + 8) / 9, (cells + 2) / 3, cells};
  b.erase(std::unique(b.begin(), b.end()), b.end());
  return b;
}

StrategyPlan full_padding_partition(const WindowAssignment& a) {
  StrategyPlan p;
  p.strategy = BatchStrategy::FullPadding;
  p.windows = a.num_windows();
  const std::size_t cells = window_cells(a.spec);
  p.total_slots = p.windows * cells;
  p.valid_slots = a.num_voxels();
  if (p.windows) p.calls.push_back({p.windows, cells});
  return p;
}

StrategyPlan bucketing_partition(const WindowAssignment& a, std::span<const std::size_t> bounds) {
  if (bounds.empty()) throw ConfigError("bucket_bounds: must not be empty");
  for (std::size_t i = 1; i < bounds.size(); ++i)
    if (bounds[i] <= bounds[i - 1]) throw ConfigError("bucket_bounds: must be strictly ascending");
  if (bounds.back() < window_cells(a.spec))
    throw ConfigError("bucket_bounds: last bound " + std::to_string(bounds.back()) +
                      " is below the window capacity " + std::to_string(window_cells(a.spec)));
  StrategyPlan p;
  p.strategy = BatchStrategy::Bucketing;
  p.windows = a.num_windows();
  std::vector<std::size_t> rows(bounds.size(), 0);
  for (std::size_t w = 0; w < a.num_windows(); ++w) {
    const std::size_t n = a.window_size(w);
    const auto it = std::lower_bound(bounds.begin(), bounds.end(), n);
    if (it == bounds.end())
      throw ConfigError("bucket_bounds: window with " + std::to_string(n) +
                        " voxels exceeds the last bound");
    ++rows[static_cast<std::size_t>(it - bounds.begin())];
    p.total_slots += *it;
    p.valid_slots += n;
  }
  for (std::size_t b = 0; b < bounds.size(); ++b)
    if (rows[b]) p.calls.push_back({rows[b], bounds[b]});
  return p;
}

StrategyPlan dynamic_set_strategy(const WindowAssignment& a, std::uint32_t tau) {
  require(tau >= 1, "dynamic_set_strategy: tau must be >= 1");
  StrategyPlan p;
  p.strategy = BatchStrategy::DynamicSet;
  p.windows = a.num_windows();
  std::size_t sets = 0;
  for (std::size_t w = 0; w < a.num_windows(); ++w) {
    const auto n = static_cast<std::uint32_t>(a.window_size(w));
    sets += count_sets(n, tau);
    p.valid_slots += n;
  }
  p.total_slots = sets * tau;
  if (sets) p.calls.push_back({sets, tau});
  return p;
}

namespace {

// Dense (rows, width, C) batch of windows; slot = raster index inside the
// window for full padding, or roster position for buckets.
void run_padded(const WindowAssignment& a, const FeatureTensor& features,
                std::span<const std::size_t> windows, std::size_t width, bool raster_slots,
                const AttentionParams& params) {
  const std::size_t c = features.dim(1);
  FeatureTensor x({windows.size(), width, c});
  std::vector<std::uint8_t> mask(windows.size() * width, 0);
  const auto& sz = a.spec.size;
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(windows.size()); ++i) {
    const auto roster = a.roster(windows[i]);
    for (std::size_t r = 0; r < roster.size(); ++r) {
      const VoxelCoord& in = a.inner[roster[r]];
      const std::size_t slot =
          raster_slots ? (std::size_t(in.z) * sz[1] + in.y) * sz[0] + in.x : r;
      const auto src = features.row(roster[r]);
      std::copy(src.begin(), src.end(), x.row(i * width + slot).begin());
      mask[i * width + slot] = 1;
    }
  }
  volatile float sink = masked_mhsa(x, mask, params)[0];
  (void)sink;
}

void run_strategy(BatchStrategy s, const WindowAssignment& a, const FeatureTensor& features,
                  const BenchConfig& cfg, std::span<const std::size_t> bounds,
                  const AttentionParams& params) {
  switch (s) {
    case BatchStrategy::FullPadding: {
      std::vector<std::size_t> all(a.num_windows());
      for (std::size_t w = 0; w < all.size(); ++w) all[w] = w;
      if (!all.empty()) run_padded(a, features, all, window_cells(a.spec), true, params);
      break;
    }
    case BatchStrategy::Bucketing: {
      std::map<std::size_t, std::vector<std::size_t>> buckets;
      for (std::size_t w = 0; w < a.num_windows(); ++w)
        buckets[*std::lower_bound(bounds.begin(), bounds.end(), a.window_size(w))].push_back(w);
      for (const auto& [width, members] : buckets)
        run_padded(a, features, members, width, false, params);
      break;
    }
    case BatchStrategy::DynamicSet: {
      const SetPartition part = build_partition(a, SortStrategy::x_major(), cfg.tau);
      if (part.total_sets == 0) break;
      const SetBatch batch = gather_sets(features, a, part);
      volatile float sink = masked_mhsa(batch.features, batch.key_mask, params)[0];
      (void)sink;
      break;
    }
  }
}

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::min(v.size() - 1, rank == 0 ? 0 : rank - 1)];
}

std::string window_label(const WindowSpec& w) {
  return std::to_string(w.size[0]) + "x" + std::to_string(w.size[1]) + "x" +
         std::to_string(w.size[2]);
}

}  // namespace

std::vector<StrategyReport> run_bench(const PointCloud& scene, const BenchConfig& cfg) {
  require(cfg.repeats >= 1, "run_bench: repeats must be >= 1");
  require(!cfg.windows.empty(), "run_bench: at least one window is required");
  const std::vector<VoxelCoord> coords = occupied_voxels(scene, cfg.grid);
  const GridDims dims = cfg.grid.dims();

  ParamRng rng(cfg.seed);
  FeatureTensor features({coords.size(), cfg.channels});
  for (auto& v : features.values()) v = rng.uniform(1.0f);
  const AttentionParams params =
      AttentionParams::random(rng, cfg.channels, cfg.heads, cfg.ffn_channels);

  std::vector<StrategyReport> reports;
  for (const WindowSpec& window : cfg.windows) {
    const WindowAssignment a = assign_windows(coords, dims, window);
    const std::vector<std::size_t> bounds =
        cfg.bucket_bounds.empty() ? default_bucket_bounds(window) : cfg.bucket_bounds;
    for (BatchStrategy s : cfg.strategies) {
      StrategyPlan plan;
      switch (s) {
        case BatchStrategy::FullPadding: plan = full_padding_partition(a); break;
        case BatchStrategy::Bucketing: plan = bucketing_partition(a, bounds); break;
        case BatchStrategy::DynamicSet: plan = dynamic_set_strategy(a, cfg.tau); break;
      }
      StrategyReport r;
      r.strategy = s;
      r.window = window;
      r.label = cfg.windows.size() > 1 ? to_string(s) + "@" + window_label(window) : to_string(s);
      r.windows = plan.windows;
      r.total_slots = plan.total_slots;
      r.valid_slots = plan.valid_slots;
      r.pad_ratio = plan.pad_ratio();
      r.invocations = plan.invocations();

      run_strategy(s, a, features, cfg, bounds, params);  // warm-up
      for (std::size_t i = 0; i < cfg.repeats; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        run_strategy(s, a, features, cfg, bounds, params);
        const auto t1 = std::chrono::steady_clock::now();
        r.samples_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      }
      r.median_ms = percentile(r.samples_ms, 0.5);
      r.p90_ms = percentile(r.samples_ms, 0.9);
      reports.push_back(std::move(r));
    }
  }
  return reports;
}

std::string reports_to_csv(const std::vector<StrategyReport>& reports) {
  std::ostringstream os;
  os << "strategy,windows,total_slots,valid_slots,pad_ratio,invocations,median_ms,p90_ms\n";
  for (const auto& r : reports) {
    os << r.label << ',' << r.windows << ',' << r.total_slots << ',' << r.valid_slots << ','
       << std::setprecision(6) << std::fixed << r.pad_ratio << ',' << r.invocations << ','
       << std::setprecision(3) << r.median_ms << ',' << r.p90_ms << '\n';
    os.unsetf(std::ios::floatfield);
  }
  return os.str();
}

json reports_to_json(const std::vector<StrategyReport>& reports, const SceneModel* scene) {
  json rows = json::array();
  for (const auto& r : reports)
    rows.push_back({{"strategy", r.label},
                    {"window", r.window.size},
                    {"shift", r.window.shift},
                    {"windows", r.windows},
                    {"total_slots", r.total_slots},
                    {"valid_slots", r.valid_slots},
                    {"pad_ratio", r.pad_ratio},
                    {"invocations", r.invocations},
                    {"median_ms", r.median_ms},
                    {"p90_ms", r.p90_ms},
                    {"samples_ms", r.samples_ms}});
  return {{"scene", scene ? scene_to_json(*scene) : json(nullptr)}, {"reports", rows}};
}

}  // namespace dsvt
