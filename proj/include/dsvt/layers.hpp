#pragma once

#include <cstdint>
#include <span>

#include "dsvt/tensor.hpp"

namespace dsvt {

// y = x W + b with W stored as (in, out).
struct Linear {
  FeatureTensor weight;  // (in, out)
  FeatureTensor bias;    // (out)

  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }

  static Linear zeros(std::size_t in, std::size_t out);
  static Linear identity(std::size_t n);
};

struct LayerNormParams {
  FeatureTensor gamma;  // (C)
  FeatureTensor beta;   // (C)

  static LayerNormParams unit(std::size_t c);
};

inline constexpr float kLayerNormEps = 1e-5f;

// Applies `layer` to every row of `x`; the output keeps the leading axes.
// Rows are processed in parallel; each row uses a 64-bit accumulator so the
// result does not depend on the thread count.
FeatureTensor linear_forward(const FeatureTensor& x, const Linear& layer);

// Single-row variant used by the serial reference paths.
void linear_row(std::span<const float> x, const Linear& layer, std::span<float> out);

// Per-row normalization over the last axis, in place.
void layer_norm_inplace(FeatureTensor& x, const LayerNormParams& p);
void layer_norm_row(std::span<float> row, const LayerNormParams& p);

float gelu(float v);
void gelu_inplace(FeatureTensor& x);

// Deterministic uniform(-bound, bound) fill driven by a 64-bit seed.
class ParamRng {
 public:
  explicit ParamRng(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next_u64();
  float uniform(float bound);
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t state_;
};

Linear random_linear(ParamRng& rng, std::size_t in, std::size_t out);

}  // namespace dsvt
