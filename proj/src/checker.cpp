#include "dsvt/checker.hpp"

#include <algorithm>
#include <cmath>

#include "dsvt/attention.hpp"
#include "dsvt/layers.hpp"
#include "dsvt/reference.hpp"

namespace dsvt {

IndexTable set_indices_float(std::uint32_t n, std::uint32_t tau) {
  IndexTable t;
  t.n = n;
  t.tau = tau;
  t.sets = count_sets(n, tau);
  const std::size_t slots = std::size_t{t.sets} * tau;
  t.q.resize(slots);
  t.valid.resize(slots);
  const float denom = static_cast<float>(slots);
  for (std::size_t i = 0; i < slots; ++i) {
    t.q[i] = static_cast<std::uint32_t>(
        std::floor(static_cast<float>(i) / denom * static_cast<float>(n)));
    t.valid[i] = (i % tau == 0 || t.q[i] != t.q[i - 1]) ? 1 : 0;
  }
  return t;
}

namespace {

std::optional<std::string> probe(const CheckOptions& opts, std::uint32_t n, std::uint32_t tau) {
  return find_table_violation(opts.index_table(n, tau));
}

}  // namespace

CheckReport check_partition_theorems(const CheckOptions& opts) {
  CheckReport report;
  report.name = "partition theorems";
  ParamRng rng(opts.seed);
  for (std::size_t t = 0; t < opts.theorem_trials; ++t) {
    const auto n = static_cast<std::uint32_t>(1 + rng.below(opts.max_n));
    const auto tau = static_cast<std::uint32_t>(1 + rng.below(opts.max_tau));
    ++report.trials;
    if (!probe(opts, n, tau)) continue;

    Witness w{n, tau, opts.seed, ""};
    for (std::uint32_t m = 1; m <= n; ++m)
      if (probe(opts, m, tau)) {
        w.n = m;
        break;
      }
    for (std::uint32_t k = 1; k <= tau; ++k)
      if (probe(opts, w.n, k)) {
        w.tau = k;
        break;
      }
    w.what = *probe(opts, w.n, w.tau);
    report.passed = false;
    report.witness = w;
    return report;
  }
  return report;
}

CheckReport check_mask_slot_irrelevance(const CheckOptions& opts) {
  CheckReport report;
  report.name = "mask-slot irrelevance";
  ParamRng rng(opts.seed ^ 0x6d61736bULL);
  while (report.trials < opts.mask_trials) {
    const auto tau = static_cast<std::uint32_t>(2 + rng.below(31));
    const auto n = static_cast<std::uint32_t>(1 + rng.below(3 * tau));
    const std::size_t heads = std::size_t{1} << rng.below(3);
    const std::size_t c = heads * (6 + rng.below(4));
    const IndexTable table = set_indices(n, tau);
    const AttentionParams params = AttentionParams::random(rng, c, heads, 2 * c);

    FeatureTensor voxels({n, c});
    for (auto& v : voxels.values()) v = rng.uniform(2.0f);
    FeatureTensor x({table.sets, tau, c}), pos({table.sets, tau, c});
    for (std::size_t s = 0; s < table.q.size(); ++s) {
      const auto src = voxels.row(table.q[s]);
      std::copy(src.begin(), src.end(), x.row(s).begin());
    }
    for (auto& v : pos.values()) v = rng.uniform(1.0f);
    const FeatureTensor base = transformer_layer(x, table.valid, pos, params);

    FeatureTensor perturbed = x;
    bool any_duplicate = false;
    for (std::size_t s = 0; s < table.q.size(); ++s) {
      if (table.valid[s]) continue;
      any_duplicate = true;
      for (float& v : perturbed.row(s)) v = rng.uniform(100.0f);
    }
    if (!any_duplicate) continue;
    ++report.trials;
    const FeatureTensor out = transformer_layer(perturbed, table.valid, pos, params);
    for (std::size_t s = 0; s < table.q.size(); ++s) {
      if (!table.valid[s]) continue;
      for (std::size_t k = 0; k < c; ++k)
        report.worst_error =
            std::max(report.worst_error, double(std::abs(out.row(s)[k] - base.row(s)[k])));
    }
    if (report.worst_error > 1e-6) {
      report.passed = false;
      report.witness = Witness{n, tau, opts.seed, "duplicate slot changed a valid output"};
      return report;
    }
  }
  return report;
}

CheckReport check_batched_vs_naive(const CheckOptions& opts) {
  CheckReport report;
  report.name = "batched vs naive attention";
  ParamRng rng(opts.seed ^ 0x6f7261636c65ULL);
  for (std::size_t t = 0; t < opts.oracle_trials; ++t) {
    const std::size_t heads = std::size_t{1} << rng.below(4);
    const std::size_t c = heads * (1 + rng.below(64 / heads));
    const std::size_t tau = 1 + rng.below(64);
    const std::size_t batch = 1 + rng.below(4);
    const AttentionParams params = AttentionParams::random(rng, c, heads, c);
    FeatureTensor x({batch, tau, c});
    for (auto& v : x.values()) v = rng.uniform(2.0f);
    std::vector<std::uint8_t> mask(batch * tau);
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = i % tau == 0 || rng.below(3) != 0;

    const FeatureTensor fast = masked_mhsa(x, mask, params);
    const FeatureTensor slow = reference::masked_mhsa(x, mask, params);
    double worst = 0.0;
    for (std::size_t i = 0; i < fast.size(); ++i)
      worst = std::max(worst, double(std::abs(fast[i] - slow[i])));
    report.worst_error = std::max(report.worst_error, worst);
    ++report.trials;
    if (worst > 1e-5) {
      report.passed = false;
      report.witness = Witness{static_cast<std::uint32_t>(batch * tau),
                               static_cast<std::uint32_t>(tau), opts.seed,
                               "max abs error " + std::to_string(worst)};
      return report;
    }
  }
  return report;
}

}  // namespace dsvt
