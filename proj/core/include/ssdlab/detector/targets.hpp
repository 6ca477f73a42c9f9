#pragma once

#include <array>
#include <vector>

#include "ssdlab/box.hpp"
#include "ssdlab/detector/model.hpp"

namespace ssdlab::detector {

inline constexpr int kBackground = -1;

using Ltrb = std::array<double, 4>;

/// Per-location training targets, row-major over the grid.
struct LocationTargets {
  GridGeometry grid;
  std::vector<int> cls;          // class id or kBackground
  std::vector<Ltrb> ltrb;        // pixels; zeros at background
  std::vector<double> centerness;  // zero at background
  std::vector<int> box_index;    // source box, -1 at background

  std::size_t foreground_count() const;
};

/// Standard FCOS assignment without centre sampling: a location is
/// foreground when its centre lies strictly inside a box. Overlaps resolve to
/// the smallest-area box, then the lowest class id.
LocationTargets assign_targets(const BoxList& boxes, const GridGeometry& grid);

/// sqrt(min(l,r)/max(l,r) * min(t,b)/max(t,b)); throws on non-positive sides.
double centerness_target(double left, double top, double right, double bottom);

}  // namespace ssdlab::detector
