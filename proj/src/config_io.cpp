#include "dsvt/config_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "dsvt/errors.hpp"

namespace dsvt {

using nlohmann::json;

namespace {

const json& field(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError("missing config field '" + path + "'");
  return j.at(key);
}

template <typename T>
T get_as(const json& v, const std::string& path) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config field '" + path + "' has the wrong type");
  }
}

template <typename T>
T required(const json& j, const std::string& key, const std::string& prefix, const T&) {
  const std::string path = prefix.empty() ? key : prefix + "." + key;
  return get_as<T>(field(j, key, path), path);
}

// Reads `key` when present, else keeps `current` unless `must` is set.
template <typename T>
void read_into(const json& j, const std::string& key, T& current, bool must,
               const std::string& prefix = "") {
  const std::string path = prefix.empty() ? key : prefix + "." + key;
  if (!j.contains(key)) {
    if (must) throw ConfigError("missing config field '" + path + "'");
    return;
  }
  current = get_as<T>(j.at(key), path);
}

Vec3 read_vec3(const json& j, const std::string& key, const std::string& prefix) {
  const std::string path = prefix + "." + key;
  const auto v = get_as<std::vector<double>>(field(j, key, path), path);
  if (v.size() != 3) throw ConfigError("config field '" + path + "' needs 3 values");
  return {v[0], v[1], v[2]};
}

Extent3 read_extent(const json& j, const std::string& key) {
  const auto v = get_as<std::vector<int>>(field(j, key, key), key);
  if (v.size() != 3) throw ConfigError("config field '" + key + "' needs 3 values");
  return {v[0], v[1], v[2]};
}

}  // namespace

json config_to_json(const BackboneConfig& c) {
  auto vec = [](const Vec3& v) { return json::array({v[0], v[1], v[2]}); };
  auto ext = [](const Extent3& v) { return json::array({v[0], v[1], v[2]}); };
  return {
      {"variant", to_string(c.variant)},
      {"grid",
       {{"range_min", vec(c.grid.range_min)},
        {"range_max", vec(c.grid.range_max)},
        {"voxel_size", vec(c.grid.voxel_size)}}},
      {"point_extra_dims", c.point_extra_dims},
      {"blocks_per_stage", c.blocks_per_stage},
      {"window_a", ext(c.window_a)},
      {"window_b", ext(c.window_b)},
      {"tau", c.tau},
      {"channels", c.channels},
      {"heads", c.heads},
      {"ffn_channels", c.ffn_channels},
      {"pool_strides", c.pool_strides},
      {"z_windows", c.z_windows},
      {"partition_strategy", to_string(c.partition)},
      {"partition_seed", c.partition_seed},
      {"pool_variant", to_string(c.pool)},
  };
}

BackboneConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  // With a preset every field becomes an optional override.
  BackboneConfig c;
  bool must = true;
  if (j.contains("preset")) {
    c = preset_by_name(get_as<std::string>(j.at("preset"), "preset"));
    must = false;
  }

  if (j.contains("variant") || must)
    c.variant = parse_variant(required<std::string>(j, "variant", "", {}));
  if (j.contains("grid") || must) {
    const json& g = field(j, "grid", "grid");
    c.grid.range_min = read_vec3(g, "range_min", "grid");
    c.grid.range_max = read_vec3(g, "range_max", "grid");
    c.grid.voxel_size = read_vec3(g, "voxel_size", "grid");
  }
  read_into(j, "point_extra_dims", c.point_extra_dims, false);
  read_into(j, "blocks_per_stage", c.blocks_per_stage, must);
  if (j.contains("window_a") || must) c.window_a = read_extent(j, "window_a");
  if (j.contains("window_b") || must) c.window_b = read_extent(j, "window_b");
  read_into(j, "tau", c.tau, must);
  read_into(j, "channels", c.channels, must);
  read_into(j, "heads", c.heads, must);
  read_into(j, "ffn_channels", c.ffn_channels, must);
  read_into(j, "pool_strides", c.pool_strides, false);
  read_into(j, "z_windows", c.z_windows, false);
  if (j.contains("partition_strategy"))
    c.partition = parse_partition_strategy(get_as<std::string>(j.at("partition_strategy"),
                                                               "partition_strategy"));
  read_into(j, "partition_seed", c.partition_seed, false);
  if (j.contains("pool_variant"))
    c.pool = parse_pool_variant(get_as<std::string>(j.at("pool_variant"), "pool_variant"));
  c.validate();
  return c;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON (" + e.what() + ")");
  }
}

void write_json(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

BackboneConfig load_config(const std::filesystem::path& path) {
  return config_from_json(read_json(path));
}

namespace {

void add(std::vector<NamedTensor>& out, const std::string& prefix, Linear& l) {
  if (l.weight.rank() == 0) return;
  out.push_back({prefix + ".weight", &l.weight});
  out.push_back({prefix + ".bias", &l.bias});
}

void add(std::vector<NamedTensor>& out, const std::string& prefix, LayerNormParams& n) {
  if (n.gamma.rank() == 0) return;
  out.push_back({prefix + ".gamma", &n.gamma});
  out.push_back({prefix + ".beta", &n.beta});
}

}  // namespace

std::vector<NamedTensor> named_tensors(BackboneWeights& w) {
  std::vector<NamedTensor> out;
  add(out, "embed.proj", w.embed.proj);
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    auto& l = w.layers[i];
    const std::string p = "layers." + std::to_string(i);
    add(out, p + ".q", l.q);
    add(out, p + ".k", l.k);
    add(out, p + ".v", l.v);
    add(out, p + ".o", l.o);
    add(out, p + ".ffn_in", l.ffn_in);
    add(out, p + ".ffn_out", l.ffn_out);
    add(out, p + ".norm1", l.norm1);
    add(out, p + ".norm2", l.norm2);
  }
  for (std::size_t s = 0; s < w.pools.size(); ++s) {
    auto& p = w.pools[s];
    const std::string pre = "pools." + std::to_string(s);
    add(out, pre + ".q", p.q);
    add(out, pre + ".k", p.k);
    add(out, pre + ".v", p.v);
    add(out, pre + ".o", p.o);
    add(out, pre + ".flat", p.flat);
    add(out, pre + ".norm", p.norm);
  }
  return out;
}

void write_f32_blob(std::span<const float> values, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(float)));
  } else {
    for (float v : values) {
      auto bits = std::bit_cast<std::uint32_t>(v);
      char bytes[4];
      for (int b = 0; b < 4; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xff);
      out.write(bytes, 4);
    }
  }
  if (!out) throw InputError("failed writing " + path.string());
}

std::vector<float> read_f32_blob(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % 4 != 0)
    throw InputError(path.string() + ": size is not a multiple of 4 bytes");
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b)
      bits |= std::uint32_t(static_cast<unsigned char>(bytes[i * 4 + b])) << (8 * b);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

void save_weights(const BackboneWeights& weights, const std::filesystem::path& path) {
  BackboneWeights copy = weights;
  std::vector<float> flat;
  json tensors = json::array();
  for (const auto& nt : named_tensors(copy)) {
    tensors.push_back({{"name", nt.name}, {"shape", nt.tensor->shape()}, {"offset", flat.size()}});
    flat.insert(flat.end(), nt.tensor->storage().begin(), nt.tensor->storage().end());
  }
  write_f32_blob(flat, path);
  write_json({{"format", "f32le"}, {"count", flat.size()}, {"tensors", tensors}},
             path.string() + ".json");
}

BackboneWeights load_weights(const BackboneConfig& cfg, const std::filesystem::path& path) {
  const json sidecar = read_json(path.string() + ".json");
  const std::vector<float> flat = read_f32_blob(path);
  struct Entry {
    Shape shape;
    std::size_t offset;
  };
  std::map<std::string, Entry> found;
  try {
    for (const auto& t : sidecar.at("tensors"))
      found[t.at("name").get<std::string>()] = {t.at("shape").get<Shape>(),
                                                t.at("offset").get<std::size_t>()};
  } catch (const json::exception&) {
    throw ConfigError(path.string() + ".json: malformed tensor list");
  }

  BackboneWeights w = BackboneWeights::random(cfg, 0);
  std::ostringstream diff;
  for (const auto& nt : named_tensors(w)) {
    auto it = found.find(nt.name);
    if (it == found.end()) {
      diff << "\n  " << nt.name << ": expected " << shape_str(nt.tensor->shape())
           << ", found nothing";
      continue;
    }
    const Entry e = it->second;
    found.erase(it);
    if (e.shape != nt.tensor->shape()) {
      diff << "\n  " << nt.name << ": expected " << shape_str(nt.tensor->shape()) << ", found "
           << shape_str(e.shape);
      continue;
    }
    if (e.offset + nt.tensor->size() > flat.size()) {
      diff << "\n  " << nt.name << ": blob too short";
      continue;
    }
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(e.offset), nt.tensor->size(),
                nt.tensor->data());
  }
  for (const auto& [name, e] : found)
    diff << "\n  unexpected tensor " << name << " " << shape_str(e.shape);
  if (!diff.str().empty()) throw ConfigError("weights do not match the config:" + diff.str());
  return w;
}

}  // namespace dsvt
