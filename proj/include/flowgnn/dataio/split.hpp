#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace flowgnn::dataio {

struct SplitSpec {
  std::array<std::uint32_t, 3> ratios = {5, 2, 3};  // train, val, test
  std::uint64_t seed = 0;

  void validate() const;  // ConfigError on a zero ratio
};

struct SplitResult {
  std::vector<std::size_t> train, val, test;  // ascending record indices
  // False when the input was too small (< 10 records) to stratify and a
  // plain shuffle was used instead.
  bool stratified = true;
};

// Exact largest-remainder apportionment of `total` over the ratios.
std::array<std::size_t, 3> apportion(std::size_t total, const SplitSpec& spec);

// Stratified per class, then rebalanced so the global sizes match
// apportion() exactly while every class's train count stays within one
// record of its exact share. Deterministic in the seed.
SplitResult split(const std::vector<int>& labels, const SplitSpec& spec);

}  // namespace flowgnn::dataio
