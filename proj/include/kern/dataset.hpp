#pragma once
// Dataset model: category/predicate schema and per-image annotations
// (boxes, labels, region features, relationship triplets).
//
// On-disk formats:
//   schema file      JSON  {"categories":[...],"predicates":[...]}
//                    with predicates[0] == "no-relationship"
//   annotation file  JSON lines, one image per line:
//                    {"image_id":..,"width":..,"height":..,
//                     "objects":[{"box":[x1,y1,x2,y2],"label":int,
//                                 "feature":[...]?}, ...],
//                     "relations":[{"subj":i,"obj":j,"predicate":k}, ...]}

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kern/error.hpp"
#include "kern/io.hpp"

namespace kern {

struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
};

inline double iou(const Box& a, const Box& b) {
  const double ix1 = std::max(a.x1, b.x1), iy1 = std::max(a.y1, b.y1);
  const double ix2 = std::min(a.x2, b.x2), iy2 = std::min(a.y2, b.y2);
  const double iw = ix2 - ix1, ih = iy2 - iy1;
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

struct DatasetSchema {
  std::vector<std::string> category_names;
  std::vector<std::string> predicate_names;  // [0] == "no-relationship"

  std::size_t num_categories() const { return category_names.size(); }
  std::size_t num_predicates() const { return predicate_names.size(); }

  void validate() const {
    if (category_names.empty()) throw validation_error("schema: needs at least 1 category");
    if (predicate_names.size() < 2)
      throw validation_error("schema: needs at least 2 predicate classes");
    if (predicate_names[0] != "no-relationship")
      throw validation_error("schema: predicates[0] must be \"no-relationship\"");
    std::set<std::string> seen(category_names.begin(), category_names.end());
    if (seen.size() != category_names.size())
      throw validation_error("schema: duplicate category names");
    std::set<std::string> pseen(predicate_names.begin(), predicate_names.end());
    if (pseen.size() != predicate_names.size())
      throw validation_error("schema: duplicate predicate names");
  }
};

struct Region {
  Box box;
  int label = 0;
  std::vector<double> feature;
};

struct Triplet {
  int subj = 0;
  int obj = 0;
  int predicate = 0;  // always >= 1 in annotations
};

struct AnnotatedImage {
  std::string image_id;
  double width = 0, height = 0;
  std::vector<Region> regions;
  std::vector<Triplet> triplets;

  std::size_t num_regions() const { return regions.size(); }

  void validate(const DatasetSchema& schema) const {
    const int C = static_cast<int>(schema.num_categories());
    const int K = static_cast<int>(schema.num_predicates());
    if (width <= 0 || height <= 0)
      throw validation_error("image " + image_id + ": non-positive dimensions");
    for (const Region& r : regions) {
      if (!(r.box.x1 >= 0 && r.box.x1 < r.box.x2 && r.box.x2 <= width &&
            r.box.y1 >= 0 && r.box.y1 < r.box.y2 && r.box.y2 <= height))
        throw validation_error("image " + image_id + ": box outside bounds or degenerate");
      if (r.label < 0 || r.label >= C)
        throw validation_error("image " + image_id + ": label " + std::to_string(r.label) +
                               " out of range [0," + std::to_string(C) + ")");
    }
    std::set<std::pair<int, int>> pairs;
    const int n = static_cast<int>(regions.size());
    for (const Triplet& t : triplets) {
      if (t.subj < 0 || t.subj >= n || t.obj < 0 || t.obj >= n)
        throw validation_error("image " + image_id + ": triplet region index out of range");
      if (t.subj == t.obj)
        throw validation_error("image " + image_id + ": triplet with subj == obj");
      if (t.predicate < 1 || t.predicate >= K)
        throw validation_error("image " + image_id + ": predicate " +
                               std::to_string(t.predicate) + " out of range [1," +
                               std::to_string(K) + ")");
      if (!pairs.emplace(t.subj, t.obj).second)
        throw validation_error("image " + image_id + ": duplicate ordered pair in triplets");
    }
  }

  // Feature length, 0 when regions carry no features.
  std::size_t feature_dim() const {
    return regions.empty() ? 0 : regions.front().feature.size();
  }
};

// ---------------------------------------------------------------------------
// JSON serialization

inline nlohmann::json to_json(const DatasetSchema& s) {
  return {{"categories", s.category_names}, {"predicates", s.predicate_names}};
}

inline DatasetSchema schema_from_json(const nlohmann::json& j) {
  DatasetSchema s;
  s.category_names = j.at("categories").get<std::vector<std::string>>();
  s.predicate_names = j.at("predicates").get<std::vector<std::string>>();
  s.validate();
  return s;
}

inline void save_schema(const DatasetSchema& s, const std::string& path) {
  io::write_file_atomic(path, to_json(s).dump(2) + "\n");
}

inline DatasetSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw parse_error(path + ": " + e.what());
  }
  return schema_from_json(j);
}

inline nlohmann::json to_json(const AnnotatedImage& img) {
  nlohmann::json objects = nlohmann::json::array();
  for (const Region& r : img.regions) {
    nlohmann::json o = {{"box", {r.box.x1, r.box.y1, r.box.x2, r.box.y2}},
                        {"label", r.label}};
    if (!r.feature.empty()) o["feature"] = r.feature;
    objects.push_back(std::move(o));
  }
  nlohmann::json relations = nlohmann::json::array();
  for (const Triplet& t : img.triplets)
    relations.push_back({{"subj", t.subj}, {"obj", t.obj}, {"predicate", t.predicate}});
  return {{"image_id", img.image_id},
          {"width", img.width},
          {"height", img.height},
          {"objects", std::move(objects)},
          {"relations", std::move(relations)}};
}

inline AnnotatedImage image_from_json(const nlohmann::json& j) {
  AnnotatedImage img;
  img.image_id = j.at("image_id").get<std::string>();
  img.width = j.at("width").get<double>();
  img.height = j.at("height").get<double>();
  for (const auto& o : j.at("objects")) {
    Region r;
    const auto& b = o.at("box");
    r.box = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
             b.at(3).get<double>()};
    r.label = o.at("label").get<int>();
    if (o.contains("feature")) r.feature = o.at("feature").get<std::vector<double>>();
    img.regions.push_back(std::move(r));
  }
  if (j.contains("relations"))
    for (const auto& t : j.at("relations"))
      img.triplets.push_back({t.at("subj").get<int>(), t.at("obj").get<int>(),
                              t.at("predicate").get<int>()});
  return img;
}

inline void save_annotations(const std::vector<AnnotatedImage>& images,
                             const std::string& path) {
  std::ostringstream os;
  for (const AnnotatedImage& img : images) os << to_json(img).dump() << '\n';
  io::write_file_atomic(path, os.str());
}

inline std::vector<AnnotatedImage> load_annotations(const std::string& path,
                                                    const DatasetSchema& schema) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open " + path);
  std::vector<AnnotatedImage> images;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw parse_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    AnnotatedImage img;
    try {
      img = image_from_json(j);
    } catch (const nlohmann::json::exception& e) {
      throw parse_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    img.validate(schema);
    images.push_back(std::move(img));
  }
  return images;
}

}  // namespace kern
