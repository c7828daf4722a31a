#include "dsvt/config.hpp"

#include "dsvt/errors.hpp"

namespace dsvt {

std::string to_string(Variant v) { return v == Variant::Pillar ? "P" : "V"; }

std::string to_string(PartitionStrategy s) {
  switch (s) {
    case PartitionStrategy::Rotate: return "rotate";
    case PartitionStrategy::Random: return "random";
    case PartitionStrategy::Sparse: return "sparse";
    case PartitionStrategy::Regional: return "regional";
  }
  return "?";
}

std::string to_string(PoolVariant p) {
  switch (p) {
    case PoolVariant::AttnPool: return "attn";
    case PoolVariant::AttnPoolMasked: return "attn_masked";
    case PoolVariant::MaxPoolOnly: return "max";
    case PoolVariant::LinearPool: return "linear";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "P" || s == "p" || s == "pillar") return Variant::Pillar;
  if (s == "V" || s == "v" || s == "voxel") return Variant::Voxel;
  throw ConfigError("variant: expected \"P\" or \"V\", got \"" + s + "\"");
}

PartitionStrategy parse_partition_strategy(const std::string& s) {
  if (s == "rotate") return PartitionStrategy::Rotate;
  if (s == "random") return PartitionStrategy::Random;
  if (s == "sparse") return PartitionStrategy::Sparse;
  if (s == "regional") return PartitionStrategy::Regional;
  throw ConfigError("partition_strategy: unknown value \"" + s + "\"");
}

PoolVariant parse_pool_variant(const std::string& s) {
  if (s == "attn") return PoolVariant::AttnPool;
  if (s == "attn_masked") return PoolVariant::AttnPoolMasked;
  if (s == "max") return PoolVariant::MaxPoolOnly;
  if (s == "linear") return PoolVariant::LinearPool;
  throw ConfigError("pool_variant: unknown value \"" + s + "\"");
}

std::size_t BackboneConfig::num_blocks() const {
  std::size_t n = 0;
  for (int b : blocks_per_stage) n += static_cast<std::size_t>(b);
  return n;
}

std::vector<int> BackboneConfig::stage_z_extents() const {
  std::vector<int> out;
  int z = grid.dims().z;
  for (std::size_t s = 0; s < num_stages(); ++s) {
    out.push_back(z);
    if (s < pool_strides.size() && pool_strides[s] > 0) z /= pool_strides[s];
  }
  return out;
}

namespace {

void check(bool cond, const std::string& msg) {
  if (!cond) throw ConfigError(msg);
}

}  // namespace

void BackboneConfig::validate() const {
  grid.validate();
  check(!blocks_per_stage.empty(), "blocks_per_stage: must not be empty");
  for (std::size_t s = 0; s < blocks_per_stage.size(); ++s)
    check(blocks_per_stage[s] >= 1,
          "blocks_per_stage[" + std::to_string(s) + "]: must be >= 1");
  for (int a = 0; a < 3; ++a) {
    check(window_a[a] >= 1, "window_a: extents must be >= 1");
    check(window_b[a] >= 1, "window_b: extents must be >= 1");
  }
  check(tau >= 1, "tau: must be >= 1");
  check(channels >= 6, "channels: must be >= 6 for the positional encoding");
  check(heads >= 1 && channels % heads == 0, "heads: must divide channels");
  check(ffn_channels >= 1, "ffn_channels: must be >= 1");

  const GridDims dims = grid.dims();
  if (variant == Variant::Pillar) {
    check(num_stages() == 1, "blocks_per_stage: pillar variant has a single stage");
    check(dims.z == 1, "grid.voxel_size: pillar variant needs a single Z cell");
    return;
  }
  check(pool_strides.size() + 1 == num_stages(),
        "pool_strides: expected one stride per stage transition");
  check(z_windows.size() == num_stages(), "z_windows: expected one entry per stage");
  int z = dims.z;
  for (std::size_t s = 0; s < num_stages(); ++s) {
    const std::string zw = "z_windows[" + std::to_string(s) + "]";
    check(z_windows[s] >= 1, zw + ": must be >= 1");
    check(z_windows[s] <= z && z % z_windows[s] == 0,
          zw + ": must divide the stage Z extent " + std::to_string(z));
    if (s + 1 < num_stages()) {
      const std::string ps = "pool_strides[" + std::to_string(s) + "]";
      check(pool_strides[s] >= 1, ps + ": must be >= 1");
      check(z % pool_strides[s] == 0, ps + ": must divide the stage Z extent " + std::to_string(z));
      z /= pool_strides[s];
    }
  }
  check(z == 1, "pool_strides: final stage must have a Z extent of 1");
}

BackboneConfig dsvt_pillar_preset() {
  BackboneConfig c;
  c.variant = Variant::Pillar;
  c.grid.range_min = {-75.0, -75.0, -2.0};
  c.grid.range_max = {75.0, 75.0, 4.0};
  c.grid.voxel_size = {0.32, 0.32, 6.0};
  c.blocks_per_stage = {4};
  c.window_a = {12, 12, 1};
  c.window_b = {24, 24, 1};
  c.tau = 36;
  c.channels = 192;
  c.heads = 8;
  c.ffn_channels = 384;
  return c;
}

BackboneConfig dsvt_voxel_preset() {
  BackboneConfig c = dsvt_pillar_preset();
  c.variant = Variant::Voxel;
  c.grid.voxel_size = {0.32, 0.32, 0.1875};
  c.blocks_per_stage = {1, 1, 1, 1};
  c.pool_strides = {4, 4, 2};
  c.z_windows = {32, 8, 2, 1};
  c.tau = 48;
  return c;
}

BackboneConfig dsvt_nuscenes_preset() {
  BackboneConfig c = dsvt_pillar_preset();
  c.grid.range_min = {-54.0, -54.0, -5.0};
  c.grid.range_max = {54.0, 54.0, 3.0};
  c.grid.voxel_size = {0.3, 0.3, 8.0};
  c.window_a = {30, 30, 1};
  c.window_b = {30, 30, 1};
  c.tau = 90;
  c.channels = 128;
  c.ffn_channels = 256;
  return c;
}

BackboneConfig preset_by_name(const std::string& name) {
  if (name == "dsvt-p") return dsvt_pillar_preset();
  if (name == "dsvt-v") return dsvt_voxel_preset();
  if (name == "dsvt-nus") return dsvt_nuscenes_preset();
  throw ConfigError("preset: unknown name \"" + name + "\" (dsvt-p, dsvt-v, dsvt-nus)");
}

}  // namespace dsvt
