#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "dsvt/set_partition.hpp"

namespace dsvt {

using IndexTableFn = std::function<IndexTable(std::uint32_t n, std::uint32_t tau)>;

// The set index formula evaluated in float32 rather than exact integers. Used to show that the
// checker catches a broken implementation.
IndexTable set_indices_float(std::uint32_t n, std::uint32_t tau);

struct Witness {
  std::uint32_t n = 0;
  std::uint32_t tau = 0;
  std::uint64_t seed = 0;
  std::string what;
};

struct CheckOptions {
  std::uint64_t seed = 0;
  std::size_t theorem_trials = 50000;
  std::uint32_t max_n = 4096;
  std::uint32_t max_tau = 512;
  std::size_t mask_trials = 100;
  std::size_t oracle_trials = 200;
  IndexTableFn index_table = [](std::uint32_t n, std::uint32_t tau) {
    return set_indices(n, tau);
  };
};

struct CheckReport {
  std::string name;
  bool passed = true;
  std::size_t trials = 0;
  std::optional<Witness> witness;
  double worst_error = 0.0;
};

// Randomized partition theorems over (n, tau). A failure is shrunk to the
// smallest failing n for that tau, then the smallest tau for that n.
CheckReport check_partition_theorems(const CheckOptions& opts);

// Overwriting duplicated slots leaves every valid output unchanged (<= 1e-6).
CheckReport check_mask_slot_irrelevance(const CheckOptions& opts);

// Batched masked attention against the per-row oracle (<= 1e-5).
CheckReport check_batched_vs_naive(const CheckOptions& opts);

}  // namespace dsvt
