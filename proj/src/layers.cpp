#include "dsvt/layers.hpp"

#include <cmath>
#include <vector>

namespace dsvt {

Linear Linear::zeros(std::size_t in, std::size_t out) {
  return {FeatureTensor({in, out}), FeatureTensor({out})};
}

Linear Linear::identity(std::size_t n) {
  Linear l = zeros(n, n);
  for (std::size_t i = 0; i < n; ++i) l.weight[i * n + i] = 1.0f;
  return l;
}

LayerNormParams LayerNormParams::unit(std::size_t c) {
  return {FeatureTensor({c}, 1.0f), FeatureTensor({c}, 0.0f)};
}

void linear_row(std::span<const float> x, const Linear& layer, std::span<float> out) {
  const std::size_t in = layer.in_features();
  const std::size_t n_out = layer.out_features();
  std::vector<double> acc(n_out);
  for (std::size_t o = 0; o < n_out; ++o) acc[o] = layer.bias[o];
  const float* w = layer.weight.data();
  for (std::size_t i = 0; i < in; ++i) {
    const double xi = x[i];
    const float* wi = w + i * n_out;
    for (std::size_t o = 0; o < n_out; ++o) acc[o] += xi * static_cast<double>(wi[o]);
  }
  for (std::size_t o = 0; o < n_out; ++o) out[o] = static_cast<float>(acc[o]);
}

FeatureTensor linear_forward(const FeatureTensor& x, const Linear& layer) {
  require(x.row_width() == layer.in_features(),
          "linear: input width " + std::to_string(x.row_width()) + " != " +
              std::to_string(layer.in_features()));
  Shape out_shape = x.shape();
  out_shape.back() = layer.out_features();
  FeatureTensor y(out_shape);
  const auto rows = static_cast<std::int64_t>(x.num_rows());
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < rows; ++r) linear_row(x.row(r), layer, y.row(r));
  return y;
}

void layer_norm_row(std::span<float> row, const LayerNormParams& p) {
  const std::size_t c = row.size();
  double mean = 0.0;
  for (float v : row) mean += v;
  mean /= static_cast<double>(c);
  double var = 0.0;
  for (float v : row) var += (v - mean) * (v - mean);
  var /= static_cast<double>(c);
  const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
  for (std::size_t i = 0; i < c; ++i)
    row[i] = static_cast<float>((row[i] - mean) * inv * p.gamma[i] + p.beta[i]);
}

void layer_norm_inplace(FeatureTensor& x, const LayerNormParams& p) {
  require(x.row_width() == p.gamma.size(), "layer_norm: width mismatch");
  const auto rows = static_cast<std::int64_t>(x.num_rows());
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < rows; ++r) layer_norm_row(x.row(r), p);
}

float gelu(float v) {
  const double x = v;
  return static_cast<float>(0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))));
}

void gelu_inplace(FeatureTensor& x) {
  auto vals = x.values();
  const auto n = static_cast<std::int64_t>(vals.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) vals[i] = gelu(vals[i]);
}

// splitmix64
std::uint64_t ParamRng::next_u64() {
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

float ParamRng::uniform(float bound) {
  const double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;  // [0, 1)
  return static_cast<float>((2.0 * u - 1.0) * bound);
}

std::uint64_t ParamRng::below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

Linear random_linear(ParamRng& rng, std::size_t in, std::size_t out) {
  Linear l = Linear::zeros(in, out);
  const float bound = 1.0f / std::sqrt(static_cast<float>(in));
  for (auto& v : l.weight.values()) v = rng.uniform(bound);
  for (auto& v : l.bias.values()) v = rng.uniform(bound);
  return l;
}

}  // namespace dsvt
