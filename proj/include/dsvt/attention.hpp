#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "dsvt/layers.hpp"
#include "dsvt/tensor.hpp"

namespace dsvt {

struct AttentionParams {
  std::size_t channels = 0;
  std::size_t heads = 1;
  Linear q, k, v, o;
  Linear ffn_in, ffn_out;
  LayerNormParams norm1, norm2;

  std::size_t head_dim() const { return channels / heads; }
  std::size_t ffn_channels() const { return ffn_in.out_features(); }
  void validate() const;

  static AttentionParams random(ParamRng& rng, std::size_t channels, std::size_t heads,
                                std::size_t ffn_channels);
  // Identity projections, zero biases, zero FFN, unit norms.
  static AttentionParams identity(std::size_t channels, std::size_t heads,
                                  std::size_t ffn_channels);
};

// Sinusoidal encoding of inner-window coordinates normalized by the window
// extent. Each axis gets C/6 (sin, cos) pairs; leftover channels are zero.
void encode_position(std::span<const float> coord, const std::array<float, 3>& window,
                     std::span<float> out);
// coords (..., 3) -> (..., C)
FeatureTensor positional_encoding(const FeatureTensor& coords, const std::array<float, 3>& window,
                                  std::size_t channels);

// Multi-head attention of a single query row against n key/value rows, all
// already projected. Keys with mask == 0 are excluded; an empty mask keeps
// every key. Writes the concatenated head outputs (C) to `out`.
void attend_heads(std::span<const float> query, std::span<const float> keys,
                  std::span<const float> values, std::span<const std::uint8_t> mask,
                  std::size_t heads, std::span<float> out);

// x (B, tau, C), key_mask (B * tau) or empty for all valid. Every batch row
// needs one valid key.
FeatureTensor masked_mhsa(const FeatureTensor& x, std::span<const std::uint8_t> key_mask,
                          const AttentionParams& params);

// Y1 = LN(x + MHSA(x + pos)); Y = LN(Y1 + FFN(Y1)).
FeatureTensor transformer_layer(const FeatureTensor& x, std::span<const std::uint8_t> key_mask,
                                const FeatureTensor& pos, const AttentionParams& params);

}  // namespace dsvt
