#include "ssdlab/data/split.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "ssdlab/image.hpp"

namespace ssdlab::data {

namespace {

// Fisher-Yates with an explicit draw so the permutation does not depend on
// the standard library's shuffle implementation.
std::vector<int> seeded_permutation(std::vector<int> ids, std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = ids.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(ids[i - 1], ids[j]);
  }
  return ids;
}

}  // namespace

DatasetSplit split_dataset(const std::vector<int>& ids, const std::array<double, 3>& ratios, std::uint64_t seed) {
  if (ids.empty()) throw std::invalid_argument("split_dataset: empty id list");
  for (double r : ratios) {
    if (r < 0) throw std::invalid_argument("split_dataset: negative ratio");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    throw std::invalid_argument("split_dataset: ratios must sum to 1");
  }
  const auto n = static_cast<double>(ids.size());
  auto held_out = [n](double r) { return static_cast<std::size_t>(std::ceil(r * n - 1e-9)); };
  const std::size_t n_val = held_out(ratios[1]);
  const std::size_t n_test = held_out(ratios[2]);
  if (n_val + n_test > ids.size()) throw std::invalid_argument("split_dataset: too few ids for the ratios");

  const auto order = seeded_permutation(ids, seed);
  const std::size_t n_train = ids.size() - n_val - n_test;
  DatasetSplit split;
  split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                   order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  split.labeled = split.train;
  split.label_fraction = 1.0;
  return split;
}

DatasetSplit sample_label_fraction(const DatasetSplit& split, double fraction, std::uint64_t seed) {
  if (!(fraction > 0 && fraction <= 1)) throw std::invalid_argument("label fraction must lie in (0, 1]");
  const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(split.train.size())));
  if (count == 0) {
    throw std::invalid_argument("label fraction " + std::to_string(fraction) + " of " +
                                std::to_string(split.train.size()) + " training images yields no labeled images");
  }
  auto sorted_train = split.train;
  std::sort(sorted_train.begin(), sorted_train.end());
  const auto order = seeded_permutation(sorted_train, seed);
  DatasetSplit out = split;
  out.label_fraction = fraction;
  out.labeled.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
  out.unlabeled.assign(order.begin() + static_cast<std::ptrdiff_t>(count), order.end());
  return out;
}

}  // namespace ssdlab::data
