#include "ssdlab/box.hpp"

#include <algorithm>
#include <stdexcept>

namespace ssdlab {

double iou(const Box& a, const Box& b) {
  if (!a.valid() || !b.valid()) throw std::invalid_argument("iou: degenerate box");
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

Box clip_box(const Box& box, double width, double height) {
  Box out = box;
  out.x_min = std::clamp(box.x_min, 0.0, width);
  out.x_max = std::clamp(box.x_max, 0.0, width);
  out.y_min = std::clamp(box.y_min, 0.0, height);
  out.y_max = std::clamp(box.y_max, 0.0, height);
  return out;
}

}  // namespace ssdlab
