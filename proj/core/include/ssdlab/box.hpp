#pragma once

#include <optional>
#include <vector>

namespace ssdlab {

/// Axis-aligned box in image pixels with a class id and an optional score
/// (absent for ground truth).
struct Box {
  double x_min = 0;
  double y_min = 0;
  double x_max = 0;
  double y_max = 0;
  int class_id = 0;
  std::optional<double> score;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  bool valid() const { return x_min < x_max && y_min < y_max; }

  friend bool operator==(const Box&, const Box&) = default;
};

using BoxList = std::vector<Box>;

/// Intersection over union; throws std::invalid_argument on degenerate boxes.
double iou(const Box& a, const Box& b);

Box clip_box(const Box& box, double width, double height);

}  // namespace ssdlab
