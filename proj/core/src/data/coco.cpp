#include "ssdlab/data/coco.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace ssdlab::data {

using nlohmann::json;

namespace {

double round2(double v) { return std::round(v * 100.0) / 100.0; }

template <typename T>
T field(const json& obj, const char* key, const char* where) {
  if (!obj.is_object() || !obj.contains(key)) throw CocoError(std::string(where) + ": missing field '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw CocoError(std::string(where) + ": bad field '" + key + "': " + e.what());
  }
}

std::array<double, 4> parse_bbox(const json& obj, const char* where) {
  const auto values = field<std::vector<double>>(obj, "bbox", where);
  if (values.size() != 4) throw CocoError(std::string(where) + ": bbox must have four numbers");
  return {values[0], values[1], values[2], values[3]};
}

std::map<int, int> category_index(const CocoDocument& doc) {
  std::vector<int> ids;
  for (const auto& c : doc.categories) ids.push_back(c.id);
  std::sort(ids.begin(), ids.end());
  std::map<int, int> index;
  for (std::size_t i = 0; i < ids.size(); ++i) index[ids[i]] = static_cast<int>(i);
  return index;
}

}  // namespace

std::string write_coco(const CocoDocument& doc) {
  json images = json::array();
  for (const auto& im : doc.images) {
    images.push_back({{"id", im.id}, {"file_name", im.file_name}, {"width", im.width}, {"height", im.height}});
  }
  json annotations = json::array();
  for (const auto& a : doc.annotations) {
    annotations.push_back({{"id", a.id},
                           {"image_id", a.image_id},
                           {"category_id", a.category_id},
                           {"bbox", {round2(a.bbox[0]), round2(a.bbox[1]), round2(a.bbox[2]), round2(a.bbox[3])}},
                           {"area", round2(a.area)},
                           {"iscrowd", a.iscrowd}});
  }
  json categories = json::array();
  for (const auto& c : doc.categories) categories.push_back({{"id", c.id}, {"name", c.name}});
  json root{{"images", images}, {"annotations", annotations}, {"categories", categories}};
  return root.dump(1) + "\n";
}

CocoDocument read_coco(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw CocoError(std::string("malformed COCO JSON: ") + e.what());
  }
  if (!root.is_object()) throw CocoError("COCO document must be a JSON object");
  CocoDocument doc;
  for (const char* key : {"images", "annotations", "categories"}) {
    if (!root.contains(key) || !root[key].is_array()) throw CocoError(std::string("COCO document lacks array '") + key + "'");
  }
  std::set<int> image_ids, category_ids, annotation_ids;
  for (const auto& im : root["images"]) {
    CocoImage out{field<int>(im, "id", "image"), field<std::string>(im, "file_name", "image"),
                  field<int>(im, "width", "image"), field<int>(im, "height", "image")};
    if (!image_ids.insert(out.id).second) throw CocoError("duplicate image id " + std::to_string(out.id));
    doc.images.push_back(std::move(out));
  }
  for (const auto& c : root["categories"]) {
    CocoCategory out{field<int>(c, "id", "category"), field<std::string>(c, "name", "category")};
    if (!category_ids.insert(out.id).second) throw CocoError("duplicate category id " + std::to_string(out.id));
    doc.categories.push_back(std::move(out));
  }
  for (const auto& a : root["annotations"]) {
    CocoAnnotation out;
    out.id = field<int>(a, "id", "annotation");
    out.image_id = field<int>(a, "image_id", "annotation");
    out.category_id = field<int>(a, "category_id", "annotation");
    out.bbox = parse_bbox(a, "annotation");
    out.area = a.contains("area") ? field<double>(a, "area", "annotation") : out.bbox[2] * out.bbox[3];
    out.iscrowd = a.contains("iscrowd") ? field<int>(a, "iscrowd", "annotation") : 0;
    const std::string where = "annotation " + std::to_string(out.id);
    if (!annotation_ids.insert(out.id).second) throw CocoError("duplicate annotation id " + std::to_string(out.id));
    if (!image_ids.count(out.image_id)) {
      throw CocoError(where + " references missing image id " + std::to_string(out.image_id));
    }
    if (!category_ids.count(out.category_id)) {
      throw CocoError(where + " references missing category id " + std::to_string(out.category_id));
    }
    if (!(out.bbox[2] > 0 && out.bbox[3] > 0)) throw CocoError(where + " has a non-positive box extent");
    doc.annotations.push_back(out);
  }
  return doc;
}

CocoDocument to_coco(const Dataset& dataset) {
  CocoDocument doc;
  for (std::size_t c = 0; c < dataset.class_names.size(); ++c) {
    doc.categories.push_back({static_cast<int>(c + 1), dataset.class_names[c]});
  }
  int next_annotation = 1;
  for (const auto& s : dataset.samples) {
    doc.images.push_back({s.id, s.file_name, static_cast<int>(s.image.width), static_cast<int>(s.image.height)});
    for (const auto& b : s.boxes) {
      CocoAnnotation a;
      a.id = next_annotation++;
      a.image_id = s.id;
      a.category_id = b.class_id + 1;
      a.bbox = {b.x_min, b.y_min, b.width(), b.height()};
      a.area = b.area();
      doc.annotations.push_back(a);
    }
  }
  return doc;
}

std::map<int, BoxList> boxes_by_image(const CocoDocument& doc) {
  const auto index = category_index(doc);
  std::map<int, BoxList> out;
  for (const auto& im : doc.images) out[im.id];
  for (const auto& a : doc.annotations) {
    out[a.image_id].push_back(
        Box{a.bbox[0], a.bbox[1], a.bbox[0] + a.bbox[2], a.bbox[1] + a.bbox[3], index.at(a.category_id), std::nullopt});
  }
  return out;
}

std::vector<std::string> class_names(const CocoDocument& doc) {
  auto cats = doc.categories;
  std::sort(cats.begin(), cats.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  std::vector<std::string> names;
  for (const auto& c : cats) names.push_back(c.name);
  return names;
}

int category_id_for_class(const CocoDocument& doc, int class_id) {
  for (const auto& [id, idx] : category_index(doc)) {
    if (idx == class_id) return id;
  }
  throw CocoError("no category for class index " + std::to_string(class_id));
}

std::string write_results(const CocoDocument& gt, const std::vector<DetectionRecord>& detections) {
  json out = json::array();
  for (const auto& d : detections) {
    out.push_back({{"image_id", d.image_id},
                   {"category_id", category_id_for_class(gt, d.box.class_id)},
                   {"bbox", {round2(d.box.x_min), round2(d.box.y_min), round2(d.box.width()), round2(d.box.height())}},
                   {"score", std::round(d.box.score.value_or(0.0) * 1e6) / 1e6}});
  }
  return out.dump(1) + "\n";
}

std::vector<DetectionRecord> read_results(const CocoDocument& gt, const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw CocoError(std::string("malformed result JSON: ") + e.what());
  }
  if (!root.is_array()) throw CocoError("result file must be a JSON array");
  const auto index = category_index(gt);
  std::set<int> image_ids;
  for (const auto& im : gt.images) image_ids.insert(im.id);
  std::vector<DetectionRecord> out;
  for (const auto& r : root) {
    DetectionRecord rec;
    rec.image_id = field<int>(r, "image_id", "result");
    const int category = field<int>(r, "category_id", "result");
    const auto bbox = parse_bbox(r, "result");
    const double score = field<double>(r, "score", "result");
    if (!image_ids.count(rec.image_id)) throw CocoError("result references missing image id " + std::to_string(rec.image_id));
    if (!index.count(category)) throw CocoError("result references missing category id " + std::to_string(category));
    if (!(bbox[2] > 0 && bbox[3] > 0)) continue;
    rec.box = Box{bbox[0], bbox[1], bbox[0] + bbox[2], bbox[1] + bbox[3], index.at(category), score};
    out.push_back(rec);
  }
  return out;
}

namespace {

constexpr char kRawMagic[4] = {'S', 'S', 'D', 'I'};

void save_png(const std::filesystem::path& path, const Image& image) {
  std::vector<std::uint8_t> buffer(image.plane() * 3);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        buffer[(y * image.width + x) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(std::clamp(image.at(c, y, x), 0.0, 1.0) * 255.0));
      }
    }
  }
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw std::runtime_error("cannot write PNG " + path.string() + ": " + png.message);
  }
}

Image load_png(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw std::runtime_error("cannot read PNG " + path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    throw std::runtime_error("cannot decode PNG " + path.string() + ": " + png.message);
  }
  Image image(png.height, png.width);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) image.at(c, y, x) = buffer[(y * image.width + x) * 3 + c] / 255.0;
    }
  }
  return image;
}

void save_raw(const std::filesystem::path& path, const Image& image) {
  static_assert(std::endian::native == std::endian::little);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const std::uint64_t dims[2] = {image.height, image.width};
  out.write(kRawMagic, 4);
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size() * sizeof(double)));
}

Image load_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[4];
  std::uint64_t dims[2];
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!in || std::memcmp(magic, kRawMagic, 4) != 0 || dims[0] > 16384 || dims[1] > 16384) {
    throw std::runtime_error("not a raw image tensor: " + path.string());
  }
  Image image(dims[0], dims[1]);
  in.read(reinterpret_cast<char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size() * sizeof(double)));
  if (!in) throw std::runtime_error("truncated raw image: " + path.string());
  return image;
}

}  // namespace

void save_image(const std::filesystem::path& path, const Image& image) {
  if (path.extension() == ".png") {
    save_png(path, image);
  } else {
    save_raw(path, image);
  }
}

Image load_image(const std::filesystem::path& path) {
  return path.extension() == ".png" ? load_png(path) : load_raw(path);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& dataset, ImageFormat format) {
  std::filesystem::create_directories(dir / "images");
  CocoDocument doc = to_coco(dataset);
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const auto& s = dataset.samples[i];
    const std::string name = "images/" + std::to_string(s.id) + (format == ImageFormat::Png ? ".png" : ".f64");
    doc.images[i].file_name = name;
    save_image(dir / name, s.image);
  }
  write_text_file(dir / "annotations.json", write_coco(doc));
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto doc = read_coco(read_text_file(dir / "annotations.json"));
  auto boxes = boxes_by_image(doc);
  Dataset ds;
  ds.class_names = class_names(doc);
  for (const auto& im : doc.images) {
    Sample s;
    s.id = im.id;
    s.file_name = im.file_name;
    s.image = load_image(dir / im.file_name);
    if (static_cast<int>(s.image.width) != im.width || static_cast<int>(s.image.height) != im.height) {
      throw CocoError("image " + std::to_string(im.id) + " size does not match its metadata");
    }
    s.boxes = std::move(boxes[im.id]);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace ssdlab::data
