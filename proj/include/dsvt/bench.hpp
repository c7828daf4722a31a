#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "dsvt/attention.hpp"
#include "dsvt/voxel_grid.hpp"
#include "dsvt/window.hpp"

namespace dsvt {

// Gaussian clusters flattened near the ground plane plus uniform background.
struct SceneModel {
  Vec3 extent_min{-75.0, -75.0, -2.0};
  Vec3 extent_max{75.0, 75.0, 4.0};
  std::size_t clusters = 0;
  std::size_t points_per_cluster = 0;
  // Uniform jitter of the per-cluster count, as a fraction of points_per_cluster.
  double count_jitter = 0.0;
  double cluster_std_xy = 1.0;
  double cluster_std_z = 0.3;
  double ground_z = 0.0;
  std::size_t background_points = 0;
  std::size_t extra_dims = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json scene_to_json(const SceneModel& m);
SceneModel scene_from_json(const nlohmann::json& j);

PointCloud synth_scene(const SceneModel& model);

enum class BatchStrategy { FullPadding, Bucketing, DynamicSet };
std::string to_string(BatchStrategy s);
BatchStrategy parse_batch_strategy(const std::string& s);

// One attention invocation: `rows` padded token lists of length `width`.
struct AttentionCall {
  std::size_t rows = 0;
  std::size_t width = 0;
};

// Slot accounting for one strategy over one window assignment.
struct StrategyPlan {
  BatchStrategy strategy = BatchStrategy::DynamicSet;
  std::size_t windows = 0;
  std::size_t total_slots = 0;
  std::size_t valid_slots = 0;
  std::vector<AttentionCall> calls;

  std::size_t invocations() const { return calls.size(); }
  double pad_ratio() const {
    return total_slots == 0 ? 0.0
                            : 1.0 - static_cast<double>(valid_slots) / static_cast<double>(total_slots);
  }
};

StrategyPlan full_padding_partition(const WindowAssignment& assignment);
StrategyPlan bucketing_partition(const WindowAssignment& assignment,
                                 std::span<const std::size_t> bucket_bounds);
StrategyPlan dynamic_set_strategy(const WindowAssignment& assignment, std::uint32_t tau);

// {ceil(LWH/9), ceil(LWH/3), LWH}
std::vector<std::size_t> default_bucket_bounds(const WindowSpec& window);

struct StrategyReport {
  std::string label;  // strategy plus window, e.g. "dynamic_set@12x12x1"
  BatchStrategy strategy = BatchStrategy::DynamicSet;
  WindowSpec window;
  std::size_t windows = 0;
  std::size_t total_slots = 0;
  std::size_t valid_slots = 0;
  double pad_ratio = 0.0;
  std::size_t invocations = 0;
  std::vector<double> samples_ms;
  double median_ms = 0.0;
  double p90_ms = 0.0;
};

struct BenchConfig {
  GridSpec grid;
  std::vector<WindowSpec> windows;
  std::vector<BatchStrategy> strategies{BatchStrategy::FullPadding, BatchStrategy::Bucketing,
                                        BatchStrategy::DynamicSet};
  std::uint32_t tau = 36;
  std::size_t channels = 192;
  std::size_t heads = 8;
  std::size_t ffn_channels = 384;
  std::vector<std::size_t> bucket_bounds;  // empty: default_bucket_bounds
  std::size_t repeats = 3;
  std::uint64_t seed = 0;
};

// Times partition + batched attention forward per strategy. One warm-up run
// per strategy is discarded.
std::vector<StrategyReport> run_bench(const PointCloud& scene, const BenchConfig& cfg);

std::string reports_to_csv(const std::vector<StrategyReport>& reports);
nlohmann::json reports_to_json(const std::vector<StrategyReport>& reports,
                               const SceneModel* scene);

}  // namespace dsvt
