#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <set>

#include "dsvt/attention.hpp"
#include "dsvt/errors.hpp"
#include "dsvt/parallel.hpp"
#include "dsvt/reference.hpp"
#include "test_helpers.hpp"

using namespace dsvt;
using dsvt::testing::max_abs_diff;

namespace {

FeatureTensor random_tensor(Shape shape, ParamRng& rng, float bound = 1.0f) {
  FeatureTensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(bound);
  return t;
}

std::vector<std::uint8_t> random_mask(std::size_t batch, std::size_t tau, ParamRng& rng) {
  std::vector<std::uint8_t> m(batch * tau);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t k = 0; k < tau; ++k) m[b * tau + k] = rng.below(3) != 0;
    m[b * tau + rng.below(tau)] = 1;
  }
  return m;
}

}  // namespace

TEST_CASE("single token with identity projections returns the token") {
  const auto params = AttentionParams::identity(4, 2, 8);
  FeatureTensor x({1, 1, 4}, {0.5f, -1.0f, 2.0f, 3.0f});
  const auto y = masked_mhsa(x, {}, params);
  CHECK(y == x);
}

TEST_CASE("two-token attention matches a hand computation") {
  // one head, C = 2, identity projections
  const auto params = AttentionParams::identity(2, 1, 2);
  FeatureTensor x({1, 2, 2}, {1.0f, 0.0f, 0.0f, 2.0f});
  const auto y = masked_mhsa(x, {}, params);
  const double scale = 1.0 / std::sqrt(2.0);
  auto mix = [&](double s0, double s1, int c) {
    const double m = std::max(s0, s1);
    const double w0 = std::exp(s0 - m), w1 = std::exp(s1 - m);
    const double v0[] = {1.0, 0.0}, v1[] = {0.0, 2.0};
    return (w0 * v0[c] + w1 * v1[c]) / (w0 + w1);
  };
  // scores: q0.k0 = 1, q0.k1 = 0, q1.k0 = 0, q1.k1 = 4
  CHECK(y[0] == doctest::Approx(mix(1 * scale, 0, 0)).epsilon(1e-6));
  CHECK(y[1] == doctest::Approx(mix(1 * scale, 0, 1)).epsilon(1e-6));
  CHECK(y[2] == doctest::Approx(mix(0, 4 * scale, 0)).epsilon(1e-6));
  CHECK(y[3] == doctest::Approx(mix(0, 4 * scale, 1)).epsilon(1e-6));
}

TEST_CASE("identical rows give identical outputs equal to the value projection") {
  ParamRng rng(1);
  const auto params = AttentionParams::random(rng, 8, 2, 16);
  FeatureTensor x({1, 5, 8});
  const auto row = random_tensor({8}, rng);
  for (std::size_t i = 0; i < 5; ++i) std::copy(row.values().begin(), row.values().end(), x.row(i).begin());
  const auto y = masked_mhsa(x, {}, params);
  const auto v = linear_forward(row.reshaped({1, 8}), params.v);
  const auto expected = linear_forward(v, params.o);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t c = 0; c < 8; ++c) CHECK(y[i * 8 + c] == doctest::Approx(expected[c]).epsilon(1e-5));
}

TEST_CASE("batched attention agrees with the per-row oracle") {
  ParamRng rng(2);
  for (std::size_t heads : {1, 2, 4, 8}) {
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t tau = 1 + rng.below(12), batch = 1 + rng.below(6), c = 8 * (1 + rng.below(3));
      const auto params = AttentionParams::random(rng, c, heads, 2 * c);
      const auto x = random_tensor({batch, tau, c}, rng, 2.0f);
      const auto mask = random_mask(batch, tau, rng);
      const auto y = masked_mhsa(x, mask, params);
      const auto ref = reference::masked_mhsa(x, mask, params);
      REQUIRE(y.shape() == x.shape());
      CHECK(max_abs_diff(y, ref) <= 1e-5);
    }
  }
}

TEST_CASE("masked slots do not influence valid outputs") {
  ParamRng rng(3);
  const auto params = AttentionParams::random(rng, 16, 4, 32);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t tau = 2 + rng.below(10);
    auto x = random_tensor({3, tau, 16}, rng);
    const auto mask = random_mask(3, tau, rng);
    const auto before = masked_mhsa(x, mask, params);
    for (std::size_t s = 0; s < mask.size(); ++s)
      if (!mask[s])
        for (float& v : x.row(s)) v = rng.uniform(1000.0f);
    const auto after = masked_mhsa(x, mask, params);
    for (std::size_t s = 0; s < mask.size(); ++s) {
      if (!mask[s]) continue;
      for (std::size_t c = 0; c < 16; ++c) CHECK(std::abs(before[s * 16 + c] - after[s * 16 + c]) <= 1e-6);
    }
  }
}

TEST_CASE("outputs stay inside the hull of valid values") {
  ParamRng rng(4);
  const auto params = AttentionParams::identity(6, 3, 6);
  const auto x = random_tensor({2, 7, 6}, rng, 5.0f);
  const auto mask = random_mask(2, 7, rng);
  const auto y = masked_mhsa(x, mask, params);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t c = 0; c < 6; ++c) {
      float lo = 1e9f, hi = -1e9f;
      for (std::size_t k = 0; k < 7; ++k)
        if (mask[b * 7 + k]) {
          lo = std::min(lo, x[(b * 7 + k) * 6 + c]);
          hi = std::max(hi, x[(b * 7 + k) * 6 + c]);
        }
      for (std::size_t i = 0; i < 7; ++i) {
        CHECK(y[(b * 7 + i) * 6 + c] >= lo - 1e-5f);
        CHECK(y[(b * 7 + i) * 6 + c] <= hi + 1e-5f);
      }
    }
}

TEST_CASE("large logits stay finite") {
  const auto params = AttentionParams::identity(4, 1, 4);
  FeatureTensor x({1, 3, 4}, {400, 0, 0, 0, 0, 400, 0, 0, 400, 400, 0, 0});
  CHECK(masked_mhsa(x, {}, params).all_finite());
}

TEST_CASE("a batch row without valid keys is rejected") {
  const auto params = AttentionParams::identity(4, 1, 4);
  FeatureTensor x({2, 2, 4});
  CHECK_THROWS_AS(masked_mhsa(x, std::vector<std::uint8_t>{1, 0, 0, 0}, params), ContractError);
  CHECK_THROWS_AS(masked_mhsa(x, std::vector<std::uint8_t>{1, 0}, params), ContractError);
}

TEST_CASE("thread count does not change attention output") {
  ParamRng rng(5);
  const auto params = AttentionParams::random(rng, 16, 4, 32);
  const auto x = random_tensor({9, 6, 16}, rng);
  const auto mask = random_mask(9, 6, rng);
  const auto base = masked_mhsa(x, mask, params);
  for (int t : {1, 3, 4}) {
    ThreadScope scope(t);
    CHECK(masked_mhsa(x, mask, params) == base);
  }
}

TEST_CASE("positional encoding") {
  const std::array<float, 3> window{12, 12, 1};
  SUBCASE("origin") {
    std::vector<float> out(12);
    encode_position(std::vector<float>{0, 0, 0}, window, out);
    // C = 12: two frequencies per axis as (sin, cos) pairs
    for (std::size_t i = 0; i < 12; i += 2) {
      CHECK(out[i] == 0.0f);
      CHECK(out[i + 1] == 1.0f);
    }
  }
  SUBCASE("known value") {
    std::vector<float> out(6);
    encode_position(std::vector<float>{3, 0, 0}, window, out);
    CHECK(out[0] == doctest::Approx(std::sin(std::numbers::pi * 3.0 / 12.0)));
    CHECK(out[1] == doctest::Approx(std::cos(std::numbers::pi * 3.0 / 12.0)));
  }
  SUBCASE("leftover channels are zero") {
    std::vector<float> out(8, 7.0f);
    encode_position(std::vector<float>{1, 2, 0}, window, out);
    CHECK(out[6] == 0.0f);
    CHECK(out[7] == 0.0f);
  }
  SUBCASE("injective over a 12 x 12 window") {
    std::set<std::vector<float>> seen;
    for (int y = 0; y < 12; ++y)
      for (int x = 0; x < 12; ++x) {
        std::vector<float> out(192);
        encode_position(std::vector<float>{float(x), float(y), 0}, window, out);
        seen.insert(out);
      }
    CHECK(seen.size() == 144);
  }
  SUBCASE("too few channels") {
    CHECK_THROWS_AS(positional_encoding(FeatureTensor({1, 3}), window, 4), ConfigError);
  }
  SUBCASE("batched shape") {
    const auto pe = positional_encoding(FeatureTensor({2, 3, 3}), window, 12);
    CHECK(pe.shape() == Shape{2, 3, 12});
  }
}

TEST_CASE("transformer layer") {
  ParamRng rng(6);
  const auto params = AttentionParams::random(rng, 24, 4, 48);
  const auto x = random_tensor({1, 10, 24}, rng);
  const auto pos = random_tensor({1, 10, 24}, rng);

  SUBCASE("rows are normalized") {
    const auto y = transformer_layer(x, {}, pos, params);
    for (std::size_t i = 0; i < 10; ++i) {
      double mean = 0, var = 0;
      for (float v : y.row(i)) mean += v;
      mean /= 24;
      for (float v : y.row(i)) var += (v - mean) * (v - mean);
      var /= 24;
      CHECK(std::abs(mean) < 1e-5);
      CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    }
  }
  SUBCASE("agrees with the unpadded oracle") {
    const auto y = transformer_layer(x, {}, pos, params);
    const auto ref = reference::transformer_layer(x.reshaped({10, 24}), pos.reshaped({10, 24}), params);
    CHECK(max_abs_diff(y, ref) <= 1e-5);
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(transformer_layer(x, {}, FeatureTensor({1, 9, 24}), params), ContractError);
  }
}

TEST_CASE("parameter validation") {
  CHECK_THROWS_AS(AttentionParams::identity(10, 3, 4).validate(), ConfigError);
  auto p = AttentionParams::identity(8, 2, 4);
  p.k.bias = FeatureTensor({3});
  CHECK_THROWS(p.validate());
}

TEST_CASE("gelu") {
  CHECK(gelu(0.0f) == 0.0f);
  CHECK(gelu(1.0f) == doctest::Approx(0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0)))));
  CHECK(gelu(-10.0f) == doctest::Approx(0.0).epsilon(1e-6));
}
