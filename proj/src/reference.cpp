#include "dsvt/reference.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <tuple>

#include "dsvt/errors.hpp"

namespace dsvt::reference {

namespace {

using Row = std::vector<float>;

Row matvec(const Linear& l, const Row& x) {
  const std::size_t in = l.weight.dim(0), out = l.weight.dim(1);
  Row y(out);
  for (std::size_t o = 0; o < out; ++o) {
    double acc = l.bias[o];
    for (std::size_t i = 0; i < in; ++i) acc += static_cast<double>(x[i]) * l.weight[i * out + o];
    y[o] = static_cast<float>(acc);
  }
  return y;
}

Row normalize(const Row& x, const LayerNormParams& p) {
  const std::size_t c = x.size();
  double mean = 0.0;
  for (float v : x) mean += v;
  mean /= c;
  double var = 0.0;
  for (float v : x) var += (v - mean) * (v - mean);
  var /= c;
  Row y(c);
  for (std::size_t i = 0; i < c; ++i)
    y[i] = static_cast<float>((x[i] - mean) / std::sqrt(var + kLayerNormEps) * p.gamma[i] +
                              p.beta[i]);
  return y;
}

Row sinusoid(const float coord[3], const float window[3], std::size_t channels) {
  const std::size_t freqs = channels / 6;
  Row pe(channels, 0.0f);
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t f = 0; f < freqs; ++f) {
      const double angle = coord[a] / static_cast<double>(window[a]) * std::numbers::pi * (f + 1.0);
      pe[a * 2 * freqs + 2 * f] = static_cast<float>(std::sin(angle));
      pe[a * 2 * freqs + 2 * f + 1] = static_cast<float>(std::cos(angle));
    }
  return pe;
}

// Softmax attention of one projected query over projected keys and values.
Row attend(const Row& q, const std::vector<Row>& keys, const std::vector<Row>& values,
           std::size_t heads) {
  const std::size_t c = q.size(), d = c / heads;
  Row out(c, 0.0f);
  for (std::size_t h = 0; h < heads; ++h) {
    std::vector<double> s(keys.size());
    for (std::size_t j = 0; j < keys.size(); ++j) {
      double dot = 0.0;
      for (std::size_t t = h * d; t < (h + 1) * d; ++t) dot += static_cast<double>(q[t]) * keys[j][t];
      s[j] = dot / std::sqrt(static_cast<double>(d));
    }
    const double top = *std::max_element(s.begin(), s.end());
    double z = 0.0;
    for (double& v : s) z += (v = std::exp(v - top));
    for (std::size_t t = h * d; t < (h + 1) * d; ++t) {
      double acc = 0.0;
      for (std::size_t j = 0; j < keys.size(); ++j) acc += s[j] * values[j][t];
      out[t] = static_cast<float>(acc / z);
    }
  }
  return out;
}

Row row_of(const FeatureTensor& t, std::size_t i) {
  const auto r = t.row(i);
  return Row(r.begin(), r.end());
}

// Self-attention among `tokens` only, with every token a valid key.
std::vector<Row> self_attention(const std::vector<Row>& tokens, const AttentionParams& p) {
  std::vector<Row> q, k, v;
  for (const auto& t : tokens) {
    q.push_back(matvec(p.q, t));
    k.push_back(matvec(p.k, t));
    v.push_back(matvec(p.v, t));
  }
  std::vector<Row> out;
  for (const auto& qi : q) out.push_back(matvec(p.o, attend(qi, k, v, p.heads)));
  return out;
}

std::vector<Row> layer(const std::vector<Row>& x, const std::vector<Row>& pos,
                       const AttentionParams& p) {
  std::vector<Row> xp = x;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t c = 0; c < x[i].size(); ++c) xp[i][c] += pos[i][c];
  const auto attn = self_attention(xp, p);
  std::vector<Row> out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Row y1(x[i].size());
    for (std::size_t c = 0; c < y1.size(); ++c) y1[c] = x[i][c] + attn[i][c];
    y1 = normalize(y1, p.norm1);
    Row hidden = matvec(p.ffn_in, y1);
    for (float& h : hidden) h = static_cast<float>(0.5 * h * (1.0 + std::erf(h / std::sqrt(2.0))));
    Row y = matvec(p.ffn_out, hidden);
    for (std::size_t c = 0; c < y.size(); ++c) y[c] += y1[c];
    out.push_back(normalize(y, p.norm2));
  }
  return out;
}

}  // namespace

FeatureTensor masked_mhsa(const FeatureTensor& x, std::span<const std::uint8_t> key_mask,
                          const AttentionParams& params) {
  const std::size_t batch = x.dim(0), tau = x.dim(1), c = x.dim(2);
  FeatureTensor out({batch, tau, c});
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<Row> keys, values;
    for (std::size_t j = 0; j < tau; ++j) {
      if (!key_mask.empty() && !key_mask[b * tau + j]) continue;
      keys.push_back(matvec(params.k, row_of(x, b * tau + j)));
      values.push_back(matvec(params.v, row_of(x, b * tau + j)));
    }
    require(!keys.empty(), "reference::masked_mhsa: fully masked row");
    for (std::size_t i = 0; i < tau; ++i) {
      const Row o =
          matvec(params.o, attend(matvec(params.q, row_of(x, b * tau + i)), keys, values, params.heads));
      std::copy(o.begin(), o.end(), out.row(b * tau + i).begin());
    }
  }
  return out;
}

FeatureTensor transformer_layer(const FeatureTensor& x, const FeatureTensor& pos,
                                const AttentionParams& params) {
  std::vector<Row> xs, ps;
  for (std::size_t i = 0; i < x.num_rows(); ++i) {
    xs.push_back(row_of(x, i));
    ps.push_back(row_of(pos, i));
  }
  const auto ys = layer(xs, ps, params);
  FeatureTensor out(x.shape());
  for (std::size_t i = 0; i < ys.size(); ++i) std::copy(ys[i].begin(), ys[i].end(), out.row(i).begin());
  return out;
}

SparseVoxelGrid dsvt_layer(const SparseVoxelGrid& grid, const WindowSpec& window,
                           SortStrategy strategy, std::uint32_t tau,
                           const AttentionParams& params) {
  using Cell = std::tuple<int, int, int>;
  std::map<Cell, std::vector<std::size_t>> windows;
  for (std::size_t v = 0; v < grid.size(); ++v) {
    const auto& c = grid.coords[v];
    windows[{(c.z + window.shift[2]) / window.size[2], (c.y + window.shift[1]) / window.size[1],
             (c.x + window.shift[0]) / window.size[0]}]
        .push_back(v);
  }
  const float extent[3] = {float(window.size[0]), float(window.size[1]), float(window.size[2])};

  SparseVoxelGrid out = grid;
  for (const auto& [cell, members] : windows) {
    std::vector<VoxelCoord> inner;
    for (std::size_t v : members) {
      const auto& c = grid.coords[v];
      inner.push_back({(c.x + window.shift[0]) % window.size[0],
                       (c.y + window.shift[1]) % window.size[1],
                       (c.z + window.shift[2]) % window.size[2]});
    }
    std::vector<std::uint32_t> order(members.size());
    for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
    auto key_x = [&](std::uint32_t i) { return std::tuple(inner[i].x, inner[i].y, inner[i].z, i); };
    auto key_y = [&](std::uint32_t i) { return std::tuple(inner[i].y, inner[i].x, inner[i].z, i); };
    switch (strategy.kind) {
      case SortKind::XMajor:
      case SortKind::Regional:
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return key_x(a) < key_x(b); });
        break;
      case SortKind::YMajor:
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return key_y(a) < key_y(b); });
        break;
      default: {
        const VoxelCoord wc{std::get<2>(cell), std::get<1>(cell), std::get<0>(cell)};
        order = sort_voxels(inner, strategy, tau, window_stream(wc));
      }
    }

    const std::uint64_t n = members.size();
    const std::uint64_t sets = (n + tau - 1) / tau;
    for (std::uint64_t j = 0; j < sets; ++j) {
      std::set<std::uint64_t> positions;
      for (std::uint64_t k = 0; k < tau; ++k) positions.insert((j * tau + k) * n / (sets * tau));
      std::vector<std::size_t> voxels;
      std::vector<Row> x, pos;
      for (std::uint64_t p : positions) {
        const std::uint32_t local = order[p];
        voxels.push_back(members[local]);
        x.push_back(row_of(grid.features, members[local]));
        const float coord[3] = {float(inner[local].x), float(inner[local].y), float(inner[local].z)};
        pos.push_back(sinusoid(coord, extent, params.channels));
      }
      const auto y = layer(x, pos, params);
      for (std::size_t i = 0; i < voxels.size(); ++i)
        std::copy(y[i].begin(), y[i].end(), out.features.row(voxels[i]).begin());
    }
  }
  return out;
}

SparseVoxelGrid voxelize(const PointCloud& pc, const GridSpec& spec, const EmbedParams& embed) {
  const GridDims dims = spec.dims();
  std::map<std::int64_t, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < pc.size(); ++i) {
    const auto p = pc.point(i);
    std::int64_t idx[3];
    const std::int64_t ext[3] = {dims.x, dims.y, dims.z};
    bool inside = true;
    for (int a = 0; a < 3; ++a) {
      idx[a] = static_cast<std::int64_t>(std::floor((p[a] - spec.range_min[a]) / spec.voxel_size[a]));
      inside = inside && p[a] >= spec.range_min[a] && p[a] < spec.range_max[a] && idx[a] >= 0 &&
               idx[a] < ext[a];
    }
    if (inside) cells[(idx[2] * dims.y + idx[1]) * dims.x + idx[0]].push_back(i);
  }
  SparseVoxelGrid grid;
  grid.spec = spec;
  grid.dims = dims;
  grid.features = FeatureTensor({cells.size(), embed.channels()});
  std::size_t v = 0;
  for (const auto& [id, points] : cells) {
    const VoxelCoord c{static_cast<std::int32_t>(id % dims.x),
                       static_cast<std::int32_t>(id / dims.x % dims.y),
                       static_cast<std::int32_t>(id / (std::int64_t{dims.x} * dims.y))};
    grid.coords.push_back(c);
    const double center[3] = {spec.range_min[0] + (c.x + 0.5) * spec.voxel_size[0],
                              spec.range_min[1] + (c.y + 0.5) * spec.voxel_size[1],
                              spec.range_min[2] + (c.z + 0.5) * spec.voxel_size[2]};
    Row mean(pc.stride());
    for (std::size_t k = 0; k < pc.stride(); ++k) {
      double s = 0.0;
      for (std::size_t i : points) s += pc.point(i)[k] - (k < 3 ? center[k] : 0.0);
      mean[k] = static_cast<float>(s / points.size());
    }
    Row f = matvec(embed.proj, mean);
    for (std::size_t k = 0; k < f.size(); ++k) grid.features.row(v)[k] = std::max(f[k], 0.0f);
    ++v;
  }
  return grid;
}

SparseVoxelGrid pool_grid(const SparseVoxelGrid& grid, const PoolRegionSpec& spec,
                          const PoolParams& params) {
  const auto& r = spec.region;
  std::map<VoxelCoord, std::vector<std::size_t>> regions;
  for (std::size_t v = 0; v < grid.size(); ++v) {
    const auto& c = grid.coords[v];
    regions[{c.x / r[0], c.y / r[1], c.z / r[2]}].push_back(v);
  }
  const std::size_t cells = spec.cells(), ch = grid.channels();
  SparseVoxelGrid out;
  out.spec = grid.spec;
  for (int a = 0; a < 3; ++a) out.spec.voxel_size[a] *= r[a];
  out.dims = {grid.dims.x / r[0], grid.dims.y / r[1], grid.dims.z / r[2]};
  out.features = FeatureTensor({regions.size(), ch});
  const float window[3] = {float(r[0]), float(r[1]), float(r[2])};

  std::size_t idx = 0;
  for (const auto& [parent, children] : regions) {
    out.coords.push_back(parent);
    std::vector<Row> dense(cells, Row(ch, 0.0f));
    std::vector<bool> occupied(cells, false);
    for (std::size_t v : children) {
      const auto& c = grid.coords[v];
      const std::size_t slot = (c.x % r[0]) + r[0] * ((c.y % r[1]) + std::size_t(r[1]) * (c.z % r[2]));
      dense[slot] = row_of(grid.features, v);
      occupied[slot] = true;
    }
    Row result;
    Row pooled(ch, -INFINITY);
    for (std::size_t s = 0; s < cells; ++s)
      if (occupied[s])
        for (std::size_t k = 0; k < ch; ++k) pooled[k] = std::max(pooled[k], dense[s][k]);

    if (params.variant == PoolVariant::MaxPoolOnly) {
      result = pooled;
    } else if (params.variant == PoolVariant::LinearPool) {
      Row flat;
      for (const auto& d : dense) flat.insert(flat.end(), d.begin(), d.end());
      result = normalize(matvec(params.flat, flat), params.norm);
    } else {
      const float center[3] = {(r[0] - 1) / 2.0f, (r[1] - 1) / 2.0f, (r[2] - 1) / 2.0f};
      Row query = pooled;
      const Row pe_center = sinusoid(center, window, ch);
      for (std::size_t k = 0; k < ch; ++k) query[k] += pe_center[k];
      std::vector<Row> keys, values;
      for (std::size_t s = 0; s < cells; ++s) {
        if (params.variant == PoolVariant::AttnPoolMasked && !occupied[s]) continue;
        const float off[3] = {float(s % r[0]), float((s / r[0]) % r[1]), float(s / (r[0] * r[1]))};
        Row key = dense[s];
        const Row pe = sinusoid(off, window, ch);
        for (std::size_t k = 0; k < ch; ++k) key[k] += pe[k];
        keys.push_back(matvec(params.k, key));
        values.push_back(matvec(params.v, dense[s]));
      }
      result = matvec(params.o, attend(matvec(params.q, query), keys, values, params.heads));
    }
    std::copy(result.begin(), result.end(), out.features.row(idx++).begin());
  }
  return out;
}

FeatureTensor dense_bev_scatter(const SparseVoxelGrid& grid) {
  require(grid.dims.z == 1, "reference::dense_bev_scatter: needs a single Z cell");
  const std::size_t c = grid.channels(), gy = grid.dims.y, gx = grid.dims.x;
  FeatureTensor bev({c, gy, gx});
  for (std::size_t v = 0; v < grid.size(); ++v)
    for (std::size_t k = 0; k < c; ++k)
      bev[(k * gy + grid.coords[v].y) * gx + grid.coords[v].x] = grid.features.row(v)[k];
  return bev;
}

FeatureTensor forward(const PointCloud& pc, const BackboneConfig& cfg,
                      const BackboneWeights& weights) {
  const BlockSchedule schedule = make_schedule(cfg);
  SparseVoxelGrid grid = reference::voxelize(pc, cfg.grid, weights.embed);
  const auto tau = static_cast<std::uint32_t>(cfg.tau);
  for (std::size_t b = 0; b < schedule.blocks.size(); ++b) {
    const auto& blk = schedule.blocks[b];
    for (std::size_t l = 0; l < 2; ++l)
      grid = reference::dsvt_layer(grid, blk.window, layer_sort_strategy(cfg, b, l), tau,
                        weights.layers[2 * b + l]);
    const bool stage_ends =
        b + 1 == schedule.blocks.size() || schedule.blocks[b + 1].stage != blk.stage;
    if (stage_ends && blk.stage < cfg.pool_strides.size())
      grid = reference::pool_grid(grid, stage_pool_region(cfg, blk.stage), weights.pools[blk.stage]);
  }
  return reference::dense_bev_scatter(grid);
}

}  // namespace dsvt::reference
