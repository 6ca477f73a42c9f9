#include "ssdlab/detector/targets.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ssdlab::detector {

std::size_t LocationTargets::foreground_count() const {
  return static_cast<std::size_t>(std::count_if(cls.begin(), cls.end(), [](int c) { return c != kBackground; }));
}

double centerness_target(double left, double top, double right, double bottom) {
  if (!(left > 0 && top > 0 && right > 0 && bottom > 0)) {
    throw std::invalid_argument("centerness_target: distances must be positive");
  }
  const double horizontal = std::min(left, right) / std::max(left, right);
  const double vertical = std::min(top, bottom) / std::max(top, bottom);
  return std::sqrt(horizontal * vertical);
}

LocationTargets assign_targets(const BoxList& boxes, const GridGeometry& grid) {
  for (const auto& b : boxes) {
    if (!b.valid()) throw std::invalid_argument("assign_targets: degenerate box");
  }
  LocationTargets targets;
  targets.grid = grid;
  const std::size_t n = grid.size();
  targets.cls.assign(n, kBackground);
  targets.ltrb.assign(n, Ltrb{0, 0, 0, 0});
  targets.centerness.assign(n, 0.0);
  targets.box_index.assign(n, -1);

  for (std::size_t row = 0; row < grid.rows; ++row) {
    for (std::size_t col = 0; col < grid.cols; ++col) {
      const double cx = grid.center_x(col);
      const double cy = grid.center_y(row);
      int best = -1;
      for (std::size_t k = 0; k < boxes.size(); ++k) {
        const Box& b = boxes[k];
        if (!(cx > b.x_min && cx < b.x_max && cy > b.y_min && cy < b.y_max)) continue;
        if (best < 0) {
          best = static_cast<int>(k);
          continue;
        }
        const Box& cur = boxes[static_cast<std::size_t>(best)];
        if (b.area() < cur.area() || (b.area() == cur.area() && b.class_id < cur.class_id)) {
          best = static_cast<int>(k);
        }
      }
      if (best < 0) continue;
      const std::size_t loc = row * grid.cols + col;
      const Box& b = boxes[static_cast<std::size_t>(best)];
      const Ltrb d{cx - b.x_min, cy - b.y_min, b.x_max - cx, b.y_max - cy};
      targets.cls[loc] = b.class_id;
      targets.ltrb[loc] = d;
      targets.centerness[loc] = centerness_target(d[0], d[1], d[2], d[3]);
      targets.box_index[loc] = best;
    }
  }
  return targets;
}

}  // namespace ssdlab::detector
