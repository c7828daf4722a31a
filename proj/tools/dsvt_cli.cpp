// Command-line entry point: partition dumps, backbone forward passes,
// strategy benchmarks, invariant checks and synthetic scene generation.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "dsvt/backbone.hpp"
#include "dsvt/bench.hpp"
#include "dsvt/checker.hpp"
#include "dsvt/config_io.hpp"
#include "dsvt/parallel.hpp"
#include "dsvt/point_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitViolation = 1;
constexpr int kExitUsage = 2;

struct ConfigSource {
  std::string path;
  std::string preset;

  dsvt::BackboneConfig load() const {
    if (!path.empty()) return dsvt::load_config(path);
    if (!preset.empty()) return dsvt::preset_by_name(preset);
    throw dsvt::ConfigError("one of --config or --preset is required");
  }
};

void add_config_flags(CLI::App* cmd, ConfigSource& src) {
  auto* c = cmd->add_option("--config", src.path, "Backbone config JSON");
  auto* p = cmd->add_option("--preset", src.preset, "Named config: dsvt-p, dsvt-v, dsvt-nus");
  c->excludes(p);
}

dsvt::PointCloud load_points(const std::string& path, const dsvt::BackboneConfig& cfg) {
  dsvt::PointCloud pc = dsvt::read_points(path, cfg.point_extra_dims);
  if (pc.extra_dims != cfg.point_extra_dims)
    throw dsvt::ConfigError("point_extra_dims: config expects " +
                            std::to_string(cfg.point_extra_dims) + " attributes, " + path +
                            " has " + std::to_string(pc.extra_dims));
  return pc;
}

json table_json(const dsvt::IndexTable& t) {
  json q = json::array(), mask = json::array();
  for (std::uint32_t j = 0; j < t.sets; ++j) {
    json qrow = json::array(), mrow = json::array();
    for (std::uint32_t k = 0; k < t.tau; ++k) {
      qrow.push_back(t.at(j, k));
      mrow.push_back(t.is_valid(j, k));
    }
    q.push_back(qrow);
    mask.push_back(mrow);
  }
  return {{"N", t.n}, {"S", t.sets}, {"tau", t.tau}, {"Q", q}, {"mask", mask}};
}

int cmd_partition(const std::string& input, const ConfigSource& src, const std::string& out) {
  const dsvt::BackboneConfig cfg = src.load();
  const dsvt::PointCloud pc = load_points(input, cfg);
  const dsvt::BlockSchedule schedule = dsvt::make_schedule(cfg);
  std::vector<dsvt::VoxelCoord> coords = dsvt::occupied_voxels(pc, cfg.grid);
  dsvt::GridDims dims = cfg.grid.dims();
  const auto tau = static_cast<std::uint32_t>(cfg.tau);

  json blocks = json::array();
  for (std::size_t b = 0; b < schedule.blocks.size(); ++b) {
    const auto& blk = schedule.blocks[b];
    const dsvt::WindowAssignment a = dsvt::assign_windows(coords, dims, blk.window);
    json layers = json::array();
    for (std::size_t l = 0; l < 2; ++l) {
      const dsvt::SortStrategy sort = dsvt::layer_sort_strategy(cfg, b, l);
      const dsvt::SetPartition part = dsvt::build_partition(a, sort, tau);
      json windows = json::array();
      for (std::size_t w = 0; w < a.num_windows(); ++w) {
        json entry = table_json(part.windows[w].table);
        entry["window_id"] = a.keys[w];
        windows.push_back(std::move(entry));
      }
      layers.push_back({{"layer", l}, {"sort", dsvt::to_string(sort.kind)}, {"windows", windows}});
    }
    blocks.push_back({{"block", b},
                      {"stage", blk.stage},
                      {"window", blk.window.size},
                      {"shift", blk.window.shift},
                      {"voxels", coords.size()},
                      {"layers", layers}});
    const bool stage_ends =
        b + 1 == schedule.blocks.size() || schedule.blocks[b + 1].stage != blk.stage;
    if (stage_ends && blk.stage < cfg.pool_strides.size())
      coords = dsvt::pool_coords(coords, dims, dsvt::stage_pool_region(cfg, blk.stage), &dims);
  }
  const json dump{{"tau", cfg.tau}, {"blocks", blocks}};
  if (out.empty() || out == "-")
    std::cout << dump.dump(2) << '\n';
  else
    dsvt::write_json(dump, out);
  return kExitOk;
}

int cmd_forward(const std::string& input, const ConfigSource& src,
                const std::string& weights_path, std::optional<std::uint64_t> seed,
                const std::string& out, const std::string& save_weights) {
  const dsvt::BackboneConfig cfg = src.load();
  if (weights_path.empty() && !seed) throw dsvt::ConfigError("one of --weights or --seed is required");
  dsvt::BackboneWeights weights = weights_path.empty()
                                      ? dsvt::BackboneWeights::random(cfg, *seed)
                                      : dsvt::load_weights(cfg, weights_path);
  if (!save_weights.empty()) dsvt::save_weights(weights, save_weights);
  const dsvt::PointCloud pc = load_points(input, cfg);
  const dsvt::Backbone backbone(cfg, std::move(weights));
  const dsvt::ForwardResult result = backbone.forward(pc);

  dsvt::write_f32_blob(result.bev.values(), out);
  json sidecar{{"shape", result.bev.shape()},
               {"dtype", "float32"},
               {"byte_order", "little"},
               {"variant", dsvt::to_string(cfg.variant)},
               {"stage_z_extents", result.stage_z_extents},
               {"occupied_cells", result.final_coords.size()}};
  if (seed) sidecar["seed"] = *seed;
  dsvt::write_json(sidecar, out + ".json");
  std::cout << "wrote " << out << " shape " << dsvt::shape_str(result.bev.shape()) << '\n';
  return kExitOk;
}

dsvt::Extent3 parse_extent(const std::string& s) {
  dsvt::Extent3 e{};
  char c1 = 0, c2 = 0;
  std::istringstream is(s);
  if (!(is >> e[0] >> c1 >> e[1] >> c2 >> e[2]) || c1 != ',' || c2 != ',')
    throw dsvt::ConfigError("--window: expected L,W,H, got \"" + s + "\"");
  return e;
}

struct BenchArgs {
  std::string scene_path;
  std::string input;
  ConfigSource grid_src;
  std::vector<std::string> strategies{"full_padding", "bucketing", "dynamic_set"};
  std::vector<std::string> windows{"12,12,1"};
  std::vector<std::size_t> buckets;
  std::size_t repeats = 3;
  std::size_t tau = 36;
  std::size_t channels = 192;
  std::size_t heads = 8;
  std::string out;
};

int cmd_bench(const BenchArgs& args, std::uint64_t seed) {
  dsvt::BackboneConfig grid_cfg = dsvt::dsvt_pillar_preset();
  if (!args.grid_src.path.empty() || !args.grid_src.preset.empty()) grid_cfg = args.grid_src.load();

  std::optional<dsvt::SceneModel> model;
  dsvt::PointCloud scene;
  if (!args.scene_path.empty()) {
    model = dsvt::scene_from_json(dsvt::read_json(args.scene_path));
    scene = dsvt::synth_scene(*model);
  } else if (!args.input.empty()) {
    scene = dsvt::read_points(args.input, grid_cfg.point_extra_dims);
  } else {
    throw dsvt::ConfigError("bench: one of --scene or --input is required");
  }

  dsvt::BenchConfig cfg;
  cfg.grid = grid_cfg.grid;
  cfg.tau = static_cast<std::uint32_t>(args.tau);
  cfg.channels = args.channels;
  cfg.heads = args.heads;
  cfg.ffn_channels = 2 * args.channels;
  cfg.repeats = args.repeats;
  cfg.seed = seed;
  cfg.bucket_bounds = args.buckets;
  cfg.strategies.clear();
  for (const auto& s : args.strategies) cfg.strategies.push_back(dsvt::parse_batch_strategy(s));
  for (const auto& w : args.windows) cfg.windows.push_back({parse_extent(w), {0, 0, 0}});

  const auto reports = dsvt::run_bench(scene, cfg);
  const std::string csv = dsvt::reports_to_csv(reports);
  std::cout << csv;
  if (!args.out.empty()) {
    std::ofstream(args.out) << csv;
    dsvt::write_json(dsvt::reports_to_json(reports, model ? &*model : nullptr),
                     fs::path(args.out).replace_extension(".json"));
  }
  return kExitOk;
}

int cmd_check(dsvt::CheckOptions opts, const std::string& mutate) {
  if (!mutate.empty()) {
    if (mutate != "float-floor") throw dsvt::ConfigError("--mutate: unknown mutation \"" + mutate + "\"");
    opts.index_table = dsvt::set_indices_float;
  }
  int status = kExitOk;
  for (auto check : {dsvt::check_partition_theorems, dsvt::check_mask_slot_irrelevance,
                     dsvt::check_batched_vs_naive}) {
    const dsvt::CheckReport r = check(opts);
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << r.trials << " trials";
    if (r.worst_error > 0.0) std::cout << ", max error " << r.worst_error;
    std::cout << ")\n";
    if (!r.passed) {
      std::cout << "  witness: N=" << r.witness->n << " tau=" << r.witness->tau
                << " seed=" << r.witness->seed << ": " << r.witness->what << '\n';
      status = kExitViolation;
    }
  }
  return status;
}

int cmd_gen(const std::string& model_path, const std::string& out) {
  const dsvt::SceneModel model = dsvt::scene_from_json(dsvt::read_json(model_path));
  const dsvt::PointCloud pc = dsvt::synth_scene(model);
  dsvt::write_points(pc, out);
  std::cout << "wrote " << pc.size() << " points to " << out << '\n';
  return kExitOk;
}

int default_threads() {
  if (const char* env = std::getenv("DSVT_THREADS")) return std::atoi(env);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic sparse voxel transformer toolkit"};
  app.require_subcommand(1);
  int threads = default_threads();
  std::uint64_t seed = 0;
  app.add_option("--threads", threads, "Worker threads (0 = OpenMP default; env DSVT_THREADS)");

  std::string input, out, weights_path, save_weights, model_path, mutate;
  ConfigSource src;

  auto* partition = app.add_subcommand("partition", "Dump set partitions for every block as JSON");
  partition->add_option("--input", input, "Point cloud (.csv or float32 .bin)")->required();
  add_config_flags(partition, src);
  partition->add_option("--out", out, "Output JSON path (default stdout)");

  std::optional<std::uint64_t> forward_seed;
  auto* forward = app.add_subcommand("forward", "Run the backbone and write the BEV map");
  forward->add_option("--input", input, "Point cloud (.csv or float32 .bin)")->required();
  add_config_flags(forward, src);
  auto* wopt = forward->add_option("--weights", weights_path, "Weight blob (sidecar at <path>.json)");
  forward->add_option("--seed", forward_seed, "Generate deterministic weights from this seed")
      ->excludes(wopt);
  forward->add_option("--save-weights", save_weights, "Also write the weights used");
  forward->add_option("--out", out, "BEV float32 blob (sidecar at <out>.json)")->required();

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "Compare batching strategies on one scene");
  bench->add_option("--scene", bench_args.scene_path, "SceneModel JSON");
  bench->add_option("--input", bench_args.input, "Point cloud instead of a scene model");
  add_config_flags(bench, bench_args.grid_src);
  bench->add_option("--strategies", bench_args.strategies, "full_padding,bucketing,dynamic_set")
      ->delimiter(',');
  bench->add_option("--window", bench_args.windows, "Window L,W,H (repeatable)");
  bench->add_option("--buckets", bench_args.buckets, "Bucket bounds")->delimiter(',');
  bench->add_option("--repeats", bench_args.repeats, "Timed repetitions")->check(CLI::PositiveNumber);
  bench->add_option("--tau", bench_args.tau, "Set capacity")->check(CLI::PositiveNumber);
  bench->add_option("--channels", bench_args.channels, "Model width");
  bench->add_option("--heads", bench_args.heads, "Attention heads");
  bench->add_option("--seed", seed, "Seed for features and weights");
  bench->add_option("--out", bench_args.out, "CSV output path (JSON written alongside)");

  dsvt::CheckOptions check_opts;
  auto* check = app.add_subcommand("check", "Run the invariant suite; exit 1 on a violation");
  check->add_option("--seed", check_opts.seed, "Seed for randomized trials");
  check->add_option("--iterations", check_opts.theorem_trials, "Randomized (N, tau) pairs");
  check->add_option("--mask-trials", check_opts.mask_trials);
  check->add_option("--oracle-trials", check_opts.oracle_trials);
  check->add_option("--mutate", mutate, "Swap in a known-broken component: float-floor");

  auto* gen = app.add_subcommand("gen", "Write a synthetic scene from a SceneModel JSON");
  gen->add_option("--model", model_path, "SceneModel JSON")->required();
  gen->add_option("--out", out, "Output point file (.csv or .bin)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    dsvt::ThreadScope scope(threads);
    if (*partition) return cmd_partition(input, src, out);
    if (*forward) return cmd_forward(input, src, weights_path, forward_seed, out, save_weights);
    if (*bench) return cmd_bench(bench_args, seed);
    if (*check) return cmd_check(check_opts, mutate);
    if (*gen) return cmd_gen(model_path, out);
  } catch (const dsvt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const dsvt::InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const dsvt::ContractError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const dsvt::InvariantViolation& e) {
    std::cerr << "invariant violation: " << e.what() << '\n';
    return kExitViolation;
  }
  return kExitUsage;
}
