#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssdlab/box.hpp"
#include "ssdlab/data/scene.hpp"

namespace ssdlab::data {

class CocoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CocoImage {
  int id = 0;
  std::string file_name;
  int width = 0;
  int height = 0;
};

struct CocoAnnotation {
  int id = 0;
  int image_id = 0;
  int category_id = 0;
  std::array<double, 4> bbox{};  // x, y, w, h
  double area = 0;
  int iscrowd = 0;
};

struct CocoCategory {
  int id = 0;
  std::string name;
};

struct CocoDocument {
  std::vector<CocoImage> images;
  std::vector<CocoAnnotation> annotations;
  std::vector<CocoCategory> categories;
};

/// Canonical serialisation: sorted keys, coordinates rounded to 2 decimals.
std::string write_coco(const CocoDocument& doc);
/// Parses and validates referential integrity and box extents.
CocoDocument read_coco(const std::string& json_text);

/// Categories get ids 1..C in class order; box [x0,y0,x1,y1] becomes [x0,y0,x1-x0,y1-y0].
CocoDocument to_coco(const Dataset& dataset);

/// Ground-truth boxes per image id; category ids map to class indices in ascending id order.
std::map<int, BoxList> boxes_by_image(const CocoDocument& doc);
std::vector<std::string> class_names(const CocoDocument& doc);
int category_id_for_class(const CocoDocument& doc, int class_id);

// COCO result records: [{image_id, category_id, bbox, score}, ...].
struct DetectionRecord {
  int image_id = 0;
  Box box;  // class index, score set
};
std::string write_results(const CocoDocument& gt, const std::vector<DetectionRecord>& detections);
std::vector<DetectionRecord> read_results(const CocoDocument& gt, const std::string& json_text);

enum class ImageFormat { Png, RawF64 };

void save_image(const std::filesystem::path& path, const Image& image);
Image load_image(const std::filesystem::path& path);

/// Writes <dir>/annotations.json and one image file per sample.
void save_dataset(const std::filesystem::path& dir, const Dataset& dataset, ImageFormat format);
Dataset load_dataset(const std::filesystem::path& dir);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace ssdlab::data
