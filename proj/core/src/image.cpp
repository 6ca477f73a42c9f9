#include "ssdlab/image.hpp"

#include <algorithm>
#include <stdexcept>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace ssdlab {

void tune_allocator() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    mallopt(M_TOP_PAD, 64 << 20);
    return true;
  }();
  (void)done;
#endif
}


std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

diff::Tensor stack_images(std::span<const Image* const> images) {
  if (images.empty()) throw std::invalid_argument("stack_images: empty batch");
  const std::size_t h = images.front()->height, w = images.front()->width;
  std::vector<double> values;
  values.reserve(images.size() * 3 * h * w);
  for (const Image* img : images) {
    if (img->height != h || img->width != w) throw diff::ShapeError("stack_images: images differ in size");
    values.insert(values.end(), img->pixels.begin(), img->pixels.end());
  }
  return diff::Tensor::from({images.size(), 3, h, w}, std::move(values));
}

diff::Tensor stack_images(std::span<const Image> images) {
  std::vector<const Image*> ptrs;
  ptrs.reserve(images.size());
  for (const auto& img : images) ptrs.push_back(&img);
  return stack_images(std::span<const Image* const>(ptrs));
}

}  // namespace ssdlab
