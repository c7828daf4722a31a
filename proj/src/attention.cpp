#include "dsvt/attention.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "dsvt/errors.hpp"

namespace dsvt {

namespace {

void check_linear(const Linear& l, std::size_t in, std::size_t out, const char* name) {
  if (l.weight.shape() != Shape{in, out} || l.bias.shape() != Shape{out})
    throw ConfigError(std::string("attention.") + name + ": expected weight " +
                      shape_str({in, out}) + ", found " + shape_str(l.weight.shape()));
  if (!l.weight.all_finite() || !l.bias.all_finite())
    throw ConfigError(std::string("attention.") + name + ": non-finite parameter");
}

}  // namespace

void AttentionParams::validate() const {
  if (heads == 0 || channels % heads != 0)
    throw ConfigError("attention.heads: " + std::to_string(heads) + " does not divide " +
                      std::to_string(channels));
  check_linear(q, channels, channels, "q");
  check_linear(k, channels, channels, "k");
  check_linear(v, channels, channels, "v");
  check_linear(o, channels, channels, "o");
  const std::size_t ffn = ffn_in.weight.rank() == 2 ? ffn_in.out_features() : 0;
  check_linear(ffn_in, channels, ffn, "ffn_in");
  check_linear(ffn_out, ffn, channels, "ffn_out");
  for (const auto* n : {&norm1, &norm2})
    if (n->gamma.shape() != Shape{channels} || n->beta.shape() != Shape{channels})
      throw ConfigError("attention.norm: expected shape " + shape_str({channels}));
}

AttentionParams AttentionParams::random(ParamRng& rng, std::size_t channels, std::size_t heads,
                                        std::size_t ffn_channels) {
  AttentionParams p;
  p.channels = channels;
  p.heads = heads;
  p.q = random_linear(rng, channels, channels);
  p.k = random_linear(rng, channels, channels);
  p.v = random_linear(rng, channels, channels);
  p.o = random_linear(rng, channels, channels);
  p.ffn_in = random_linear(rng, channels, ffn_channels);
  p.ffn_out = random_linear(rng, ffn_channels, channels);
  p.norm1 = LayerNormParams::unit(channels);
  p.norm2 = LayerNormParams::unit(channels);
  return p;
}

AttentionParams AttentionParams::identity(std::size_t channels, std::size_t heads,
                                          std::size_t ffn_channels) {
  AttentionParams p;
  p.channels = channels;
  p.heads = heads;
  p.q = p.k = p.v = p.o = Linear::identity(channels);
  p.ffn_in = Linear::zeros(channels, ffn_channels);
  p.ffn_out = Linear::zeros(ffn_channels, channels);
  p.norm1 = p.norm2 = LayerNormParams::unit(channels);
  return p;
}

void encode_position(std::span<const float> coord, const std::array<float, 3>& window,
                     std::span<float> out) {
  const std::size_t freqs = out.size() / 6;
  std::fill(out.begin(), out.end(), 0.0f);
  for (std::size_t a = 0; a < 3; ++a) {
    const double u = static_cast<double>(coord[a]) / window[a];
    for (std::size_t f = 0; f < freqs; ++f) {
      const double angle = u * std::numbers::pi * static_cast<double>(f + 1);
      out[a * 2 * freqs + 2 * f] = static_cast<float>(std::sin(angle));
      out[a * 2 * freqs + 2 * f + 1] = static_cast<float>(std::cos(angle));
    }
  }
}

FeatureTensor positional_encoding(const FeatureTensor& coords, const std::array<float, 3>& window,
                                  std::size_t channels) {
  if (channels < 6)
    throw ConfigError("positional encoding needs at least 6 channels, got " +
                      std::to_string(channels));
  require(coords.row_width() == 3, "positional_encoding: coordinates must have 3 components");
  Shape shape = coords.shape();
  shape.back() = channels;
  FeatureTensor pe(shape);
  const auto rows = static_cast<std::int64_t>(coords.num_rows());
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < rows; ++r) encode_position(coords.row(r), window, pe.row(r));
  return pe;
}

void attend_heads(std::span<const float> query, std::span<const float> keys,
                  std::span<const float> values, std::span<const std::uint8_t> mask,
                  std::size_t heads, std::span<float> out) {
  const std::size_t c = query.size();
  const std::size_t n = keys.size() / c;
  const std::size_t d = c / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> score(n);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * d;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (!mask.empty() && !mask[j]) continue;
      double dot = 0.0;
      const float* kr = keys.data() + j * c + off;
      for (std::size_t t = 0; t < d; ++t) dot += static_cast<double>(query[off + t]) * kr[t];
      score[j] = dot * scale;
      best = std::max(best, score[j]);
    }
    if (best == -std::numeric_limits<double>::infinity())
      throw ContractError("attention: every key of the row is masked");
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!mask.empty() && !mask[j]) continue;
      score[j] = std::exp(score[j] - best);
      total += score[j];
    }
    for (std::size_t t = 0; t < d; ++t) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (!mask.empty() && !mask[j]) continue;
        acc += score[j] * values[j * c + off + t];
      }
      out[off + t] = static_cast<float>(acc / total);
    }
  }
}

FeatureTensor masked_mhsa(const FeatureTensor& x, std::span<const std::uint8_t> key_mask,
                          const AttentionParams& params) {
  require(x.rank() == 3 && x.dim(2) == params.channels,
          "masked_mhsa: expected (B, tau, " + std::to_string(params.channels) + "), got " +
              shape_str(x.shape()));
  const std::size_t batch = x.dim(0), tau = x.dim(1), c = x.dim(2);
  require(key_mask.empty() || key_mask.size() == batch * tau, "masked_mhsa: key mask size mismatch");
  for (std::size_t b = 0; b < batch && !key_mask.empty(); ++b) {
    bool any = false;
    for (std::size_t k = 0; k < tau && !any; ++k) any = key_mask[b * tau + k] != 0;
    require(any, "masked_mhsa: batch row " + std::to_string(b) + " has no valid key");
  }

  const FeatureTensor q = linear_forward(x, params.q);
  const FeatureTensor k = linear_forward(x, params.k);
  const FeatureTensor v = linear_forward(x, params.v);
  FeatureTensor attn({batch, tau, c});
  const auto queries = static_cast<std::int64_t>(batch * tau);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < queries; ++i) {
    const std::size_t b = static_cast<std::size_t>(i) / tau;
    attend_heads(q.row(i), {k.data() + b * tau * c, tau * c}, {v.data() + b * tau * c, tau * c},
                 key_mask.empty() ? key_mask : key_mask.subspan(b * tau, tau), params.heads,
                 attn.row(i));
  }
  return linear_forward(attn, params.o);
}

FeatureTensor transformer_layer(const FeatureTensor& x, std::span<const std::uint8_t> key_mask,
                                const FeatureTensor& pos, const AttentionParams& params) {
  require(pos.shape() == x.shape(), "transformer_layer: positional encoding shape mismatch");
  FeatureTensor with_pos = x;
  for (std::size_t i = 0; i < with_pos.size(); ++i) with_pos[i] += pos[i];

  FeatureTensor y = masked_mhsa(with_pos, key_mask, params);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += x[i];
  layer_norm_inplace(y, params.norm1);

  FeatureTensor hidden = linear_forward(y, params.ffn_in);
  gelu_inplace(hidden);
  FeatureTensor ffn = linear_forward(hidden, params.ffn_out);
  for (std::size_t i = 0; i < ffn.size(); ++i) ffn[i] += y[i];
  layer_norm_inplace(ffn, params.norm2);
  return ffn;
}

}  // namespace dsvt
