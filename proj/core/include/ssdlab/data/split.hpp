#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace ssdlab::data {

struct DatasetSplit {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
  std::vector<int> labeled;    // prefix of a seeded permutation of train
  std::vector<int> unlabeled;  // train minus labeled
  double label_fraction = 1.0;
};

/// Seeded shuffle, then contiguous cut. Validation and test sizes are
/// ceil(ratio * n); train takes the remainder (65/20/15 of 848 -> 550/170/128).
/// Throws on an empty id list or ratios that do not sum to 1.
DatasetSplit split_dataset(const std::vector<int>& ids, const std::array<double, 3>& ratios, std::uint64_t seed);

/// Labeled subset = first round(fraction * |train|) ids of a seeded
/// permutation of train, so subsets nest across fractions for one seed.
DatasetSplit sample_label_fraction(const DatasetSplit& split, double fraction, std::uint64_t seed);

}  // namespace ssdlab::data
