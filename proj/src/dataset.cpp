#include "sim2real/dataset.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "sim2real/errors.hpp"
#include "sim2real/image_io.hpp"
#include "sim2real/io.hpp"

namespace sim2real {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(AnnotationKind kind) {
  switch (kind) {
    case AnnotationKind::segmentation: return "segmentation";
    case AnnotationKind::detection: return "detection";
    case AnnotationKind::none: return "none";
  }
  return "none";
}

std::string to_string(BoxFormat format) {
  return format == BoxFormat::normalized ? "normalized" : "pixel";
}

fs::path DatasetManifest::resolved_root() const {
  const fs::path r(root);
  return (r.is_absolute() ? r : base_dir / r).lexically_normal();
}

fs::path DatasetManifest::resolve(const ImageRecord& record) const {
  return (resolved_root() / record.path).lexically_normal();
}

const ImageRecord* DatasetManifest::find(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  return it == by_id_.end() ? nullptr : &records[it->second];
}

std::optional<int> DatasetManifest::category_index(std::string_view name) const {
  auto it = std::find(categories.begin(), categories.end(), name);
  if (it == categories.end()) return std::nullopt;
  return static_cast<int>(it - categories.begin());
}

void DatasetManifest::reindex() {
  by_id_.clear();
  for (std::size_t i = 0; i < records.size(); ++i) by_id_.emplace(records[i].id, i);
}

namespace {

template <typename T>
T required(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw ParseError(where + ": missing field '" + key + "'");
  }
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(where + ": field '" + key + "' has the wrong type (" + e.what() + ")");
  }
}

AnnotationKind parse_kind(const std::string& s) {
  if (s == "segmentation") return AnnotationKind::segmentation;
  if (s == "detection") return AnnotationKind::detection;
  if (s == "none") return AnnotationKind::none;
  throw ParseError("manifest: unknown annotation_kind '" + s + "'");
}

void check_record_file(const DatasetManifest& m, const ImageRecord& r,
                       const ManifestLoadOptions& options) {
  const fs::path p = m.resolve(r);
  if (!fs::is_regular_file(p)) {
    throw ValidationError("record '" + r.id + "': image not found at " + p.string());
  }
  if (!options.check_dimensions) return;
  ImageInfo info;
  try {
    info = probe_image(read_file(p));
  } catch (const DecodeError& e) {
    throw ValidationError("record '" + r.id + "': " + e.what());
  }
  if (info.width != r.width || info.height != r.height) {
    throw ValidationError("record '" + r.id + "': declared " + std::to_string(r.width) +
                          "x" + std::to_string(r.height) + " but image is " +
                          std::to_string(info.width) + "x" + std::to_string(info.height));
  }
}

}  // namespace

DatasetManifest manifest_from_json(const json& doc, const fs::path& base_dir,
                                   const ManifestLoadOptions& options) {
  if (!doc.is_object()) throw ParseError("manifest: top level must be an object");
  DatasetManifest m;
  m.base_dir = base_dir;
  m.name = required<std::string>(doc, "name", "manifest");
  m.root = required<std::string>(doc, "root", "manifest");
  m.annotation_kind = parse_kind(required<std::string>(doc, "annotation_kind", "manifest"));
  m.categories = required<std::vector<std::string>>(doc, "categories", "manifest");
  if (doc.contains("box_format")) {
    const auto fmt = required<std::string>(doc, "box_format", "manifest");
    if (fmt == "normalized") {
      m.box_format = BoxFormat::normalized;
    } else if (fmt != "pixel") {
      throw ParseError("manifest: unknown box_format '" + fmt + "'");
    }
  }
  const json& recs = doc.contains("records") ? doc.at("records") : json();
  if (!recs.is_array()) throw ParseError("manifest: 'records' must be an array");
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const std::string where = "manifest record #" + std::to_string(i);
    ImageRecord r;
    r.id = required<std::string>(recs[i], "id", where);
    r.path = required<std::string>(recs[i], "path", where);
    r.width = required<int>(recs[i], "width", where);
    r.height = required<int>(recs[i], "height", where);
    r.source_tag = recs[i].value("source_tag", std::string());
    m.records.push_back(std::move(r));
  }

  if (m.records.empty()) throw ValidationError("manifest '" + m.name + "' has no records");
  if (m.annotation_kind != AnnotationKind::none && m.categories.empty()) {
    throw ValidationError("manifest '" + m.name + "' declares " +
                          to_string(m.annotation_kind) + " annotations but no categories");
  }
  if (m.annotation_kind == AnnotationKind::segmentation && m.categories.size() > 255) {
    throw ValidationError("segmentation manifests support at most 255 categories");
  }
  std::unordered_set<std::string> cats;
  for (const auto& c : m.categories) {
    if (!cats.insert(c).second) throw ValidationError("duplicate category '" + c + "'");
  }
  std::unordered_set<std::string> seen;
  for (const auto& r : m.records) {
    if (r.id.empty()) throw ValidationError("record with empty id");
    if (!seen.insert(r.id).second) throw ValidationError("duplicate record id '" + r.id + "'");
    if (r.width <= 0 || r.height <= 0) {
      throw ValidationError("record '" + r.id + "': bad dimensions " +
                            std::to_string(r.width) + "x" + std::to_string(r.height));
    }
    if (r.path.empty()) throw ValidationError("record '" + r.id + "': empty path");
  }
  m.reindex();
  if (options.check_files) {
    for (const auto& r : m.records) check_record_file(m, r, options);
  }
  return m;
}

DatasetManifest load_manifest(const fs::path& path, const ManifestLoadOptions& options) {
  const std::string text = read_text_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return manifest_from_json(doc, path.parent_path(), options);
}

json manifest_to_json(const DatasetManifest& m) {
  json doc = json::object();
  doc["name"] = m.name;
  doc["root"] = m.root;
  doc["annotation_kind"] = to_string(m.annotation_kind);
  if (m.box_format != BoxFormat::pixel) doc["box_format"] = to_string(m.box_format);
  doc["categories"] = m.categories;
  json recs = json::array();
  for (const auto& r : m.records) {
    recs.push_back({{"id", r.id},
                    {"path", r.path},
                    {"width", r.width},
                    {"height", r.height},
                    {"source_tag", r.source_tag}});
  }
  doc["records"] = std::move(recs);
  return doc;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  write_file_atomic(path, manifest_to_json(manifest).dump(2) + "\n");
}

// ---------------------------------------------------------------------------

SegLabelMap load_label_map(const fs::path& path, std::uint8_t ignore_index) {
  IndexImage img;
  try {
    img = decode_index_png(read_file(path));
  } catch (const DecodeError& e) {
    throw DecodeError(path.string() + ": " + e.what());
  }
  return SegLabelMap{img.width, img.height, std::move(img.values), ignore_index};
}

void validate_label_map(const SegLabelMap& map, std::size_t category_count,
                        const ImageRecord* record) {
  if (map.labels.size() != static_cast<std::size_t>(map.width) * map.height) {
    throw DimensionMismatch("label buffer does not match " + std::to_string(map.width) +
                            "x" + std::to_string(map.height));
  }
  if (record && (record->width != map.width || record->height != map.height)) {
    throw DimensionMismatch("label map for '" + record->id + "' is " +
                            std::to_string(map.width) + "x" + std::to_string(map.height) +
                            ", record declares " + std::to_string(record->width) + "x" +
                            std::to_string(record->height));
  }
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      const auto v = map.at(x, y);
      if (v != map.ignore_index && v >= category_count) {
        throw LabelOutOfRange("label " + std::to_string(v) + " at (" + std::to_string(x) +
                              ", " + std::to_string(y) + ") exceeds " +
                              std::to_string(category_count) + " categories");
      }
    }
  }
}

CategoryMapping CategoryMapping::resolve(std::vector<MappingRule> rules,
                                         std::vector<std::string> source_categories) {
  CategoryMapping m;
  m.lut_.assign(source_categories.size(), -2);
  std::unordered_map<std::string, int> target_index;
  for (const auto& rule : rules) {
    auto it = std::find(source_categories.begin(), source_categories.end(), rule.source);
    if (it == source_categories.end()) {
      throw MappingError("rule for '" + rule.source + "' names an unknown source category");
    }
    const auto src = static_cast<std::size_t>(it - source_categories.begin());
    if (m.lut_[src] != -2) throw MappingError("source category '" + rule.source +
                                              "' has more than one rule");
    if (!rule.target) {
      m.lut_[src] = -1;
      continue;
    }
    auto [t, inserted] =
        target_index.emplace(*rule.target, static_cast<int>(m.target_.size()));
    if (inserted) m.target_.push_back(*rule.target);
    m.lut_[src] = t->second;
  }
  for (std::size_t i = 0; i < source_categories.size(); ++i) {
    if (m.lut_[i] == -2) {
      throw MappingError("source category '" + source_categories[i] + "' has no rule");
    }
  }
  if (m.target_.size() > 255) throw MappingError("more than 255 target categories");
  m.rules_ = std::move(rules);
  m.source_ = std::move(source_categories);
  return m;
}

CategoryMapping CategoryMapping::identity(const std::vector<std::string>& categories) {
  std::vector<MappingRule> rules;
  for (const auto& c : categories) rules.push_back({c, c});
  return resolve(std::move(rules), categories);
}

std::optional<std::uint8_t> CategoryMapping::map_index(std::size_t source_index) const {
  if (source_index >= lut_.size()) {
    throw MappingError("source index " + std::to_string(source_index) + " has no rule");
  }
  const int t = lut_[source_index];
  if (t < 0) return std::nullopt;
  return static_cast<std::uint8_t>(t);
}

std::vector<MappingRule> mapping_rules_from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("rules") || !doc.at("rules").is_array()) {
    throw ParseError("mapping: expected an object with a 'rules' array");
  }
  std::vector<MappingRule> rules;
  for (const auto& r : doc.at("rules")) {
    MappingRule rule;
    rule.source = required<std::string>(r, "source", "mapping rule");
    if (!r.contains("target")) throw ParseError("mapping rule '" + rule.source +
                                                "': missing field 'target'");
    if (!r.at("target").is_null()) rule.target = required<std::string>(r, "target", "mapping rule");
    rules.push_back(std::move(rule));
  }
  return rules;
}

namespace {
json parse_json_file(const fs::path& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}
}  // namespace

CategoryMapping load_category_mapping(const fs::path& path) {
  const json doc = parse_json_file(path);
  auto rules = mapping_rules_from_json(doc);
  std::vector<std::string> sources;
  if (doc.contains("source_categories")) {
    sources = required<std::vector<std::string>>(doc, "source_categories", "mapping");
  } else {
    for (const auto& r : rules) sources.push_back(r.source);
  }
  return CategoryMapping::resolve(std::move(rules), std::move(sources));
}

CategoryMapping load_category_mapping(const fs::path& path,
                                      const std::vector<std::string>& source_categories) {
  return CategoryMapping::resolve(mapping_rules_from_json(parse_json_file(path)),
                                  source_categories);
}

SegLabelMap apply_category_mapping(const SegLabelMap& map, const CategoryMapping& mapping) {
  const std::size_t n_src = mapping.source_categories().size();
  // Per-value lookup table; -1 marks values that are not valid source labels.
  std::array<int, 256> lut;
  lut.fill(-1);
  for (std::size_t v = 0; v < n_src; ++v) {
    const auto t = mapping.map_index(v);
    lut[v] = t ? *t : map.ignore_index;
  }
  lut[map.ignore_index] = map.ignore_index;
  if (mapping.target_categories().size() > map.ignore_index) {
    throw MappingError("target category count collides with ignore index " +
                       std::to_string(map.ignore_index));
  }

  SegLabelMap out{map.width, map.height, {}, map.ignore_index};
  out.labels.resize(map.labels.size());
  for (std::size_t i = 0; i < map.labels.size(); ++i) {
    const int t = lut[map.labels[i]];
    if (t < 0) {
      const int x = static_cast<int>(i % static_cast<std::size_t>(map.width));
      const int y = static_cast<int>(i / static_cast<std::size_t>(map.width));
      throw LabelOutOfRange("label " + std::to_string(map.labels[i]) + " at (" +
                            std::to_string(x) + ", " + std::to_string(y) +
                            ") has no mapping rule");
    }
    out.labels[i] = static_cast<std::uint8_t>(t);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string to_string(DetectionIssue::Kind kind) {
  switch (kind) {
    case DetectionIssue::Kind::clamped: return "clamped";
    case DetectionIssue::Kind::degenerate: return "degenerate";
    case DetectionIssue::Kind::unknown_image: return "unknown_image";
    case DetectionIssue::Kind::unknown_class: return "unknown_class";
    case DetectionIssue::Kind::bad_confidence: return "bad_confidence";
  }
  return "unknown";
}

namespace {

bool parse_double(std::string_view s, double& out) {
  // std::from_chars for double is available in libstdc++ 11.
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end;
}

}  // namespace

std::vector<DetectionAnnotation> parse_detections(std::string_view text,
                                                  const std::vector<std::string>& categories,
                                                  std::string_view source) {
  std::vector<DetectionAnnotation> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::vector<std::string> tok;
    for (std::string t; fields >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    const std::string where = std::string(source) + ":" + std::to_string(line_no);
    if (tok.size() != 6 && tok.size() != 7) {
      throw ParseError(where + ": expected 6 or 7 fields, found " + std::to_string(tok.size()));
    }
    DetectionAnnotation a;
    a.image_id = tok[0];
    a.line = line_no;
    int cls = 0;
    auto [p, ec] = std::from_chars(tok[1].data(), tok[1].data() + tok[1].size(), cls);
    if (ec == std::errc() && p == tok[1].data() + tok[1].size()) {
      a.class_index = cls;
    } else {
      auto it = std::find(categories.begin(), categories.end(), tok[1]);
      if (it == categories.end()) throw ParseError(where + ": unknown category '" + tok[1] + "'");
      a.class_index = static_cast<int>(it - categories.begin());
    }
    double v[4];
    for (int k = 0; k < 4; ++k) {
      if (!parse_double(tok[2 + k], v[k])) {
        throw ParseError(where + ": bad coordinate '" + tok[2 + k] + "'");
      }
    }
    a.box = Box{v[0], v[1], v[2], v[3]};
    if (tok.size() == 7) {
      double c = 0;
      if (!parse_double(tok[6], c)) throw ParseError(where + ": bad confidence '" + tok[6] + "'");
      a.confidence = c;
    }
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<DetectionAnnotation> load_detections(const fs::path& path,
                                                 const std::vector<std::string>& categories) {
  return parse_detections(read_text_file(path), categories, path.string());
}

std::size_t DetectionValidationReport::count(DetectionIssue::Kind kind) const {
  return static_cast<std::size_t>(std::count_if(
      issues.begin(), issues.end(), [&](const DetectionIssue& i) { return i.kind == kind; }));
}

DetectionValidationReport validate_detections(const DatasetManifest& manifest,
                                              std::vector<DetectionAnnotation> annotations) {
  if (manifest.annotation_kind != AnnotationKind::detection) {
    throw ValidationError("manifest '" + manifest.name + "' is not a detection dataset");
  }
  using Kind = DetectionIssue::Kind;
  DetectionValidationReport report;
  const auto n_classes = static_cast<int>(manifest.categories.size());
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    DetectionAnnotation& a = annotations[i];
    auto issue = [&](Kind kind, std::string msg) {
      report.issues.push_back({kind, i, a.image_id, a.line, std::move(msg)});
    };
    const ImageRecord* rec = manifest.find(a.image_id);
    if (rec == nullptr) {
      issue(Kind::unknown_image, "image '" + a.image_id + "' is not in the manifest");
      ++report.rejected;
      continue;
    }
    if (a.class_index < 0 || a.class_index >= n_classes) {
      issue(Kind::unknown_class, "class index " + std::to_string(a.class_index) +
                                     " outside [0, " + std::to_string(n_classes) + ")");
      ++report.rejected;
      continue;
    }
    if (a.confidence && !(*a.confidence >= 0.0 && *a.confidence <= 1.0)) {
      issue(Kind::bad_confidence, "confidence outside [0, 1]");
      ++report.rejected;
      continue;
    }
    if (manifest.box_format == BoxFormat::normalized) {
      a.box.x_min *= rec->width;
      a.box.x_max *= rec->width;
      a.box.y_min *= rec->height;
      a.box.y_max *= rec->height;
    }
    if (a.box.degenerate()) {
      issue(Kind::degenerate, "zero-area box dropped");
      ++report.rejected;
      continue;
    }
    const Box before = a.box;
    a.box.x_min = std::clamp(a.box.x_min, 0.0, static_cast<double>(rec->width));
    a.box.x_max = std::clamp(a.box.x_max, 0.0, static_cast<double>(rec->width));
    a.box.y_min = std::clamp(a.box.y_min, 0.0, static_cast<double>(rec->height));
    a.box.y_max = std::clamp(a.box.y_max, 0.0, static_cast<double>(rec->height));
    if (a.box.degenerate()) {
      issue(Kind::degenerate, "box lies outside the image and was dropped");
      ++report.rejected;
      continue;
    }
    if (!(a.box == before)) {
      std::ostringstream msg;
      msg << "clamped (" << before.x_min << ", " << before.y_min << ", " << before.x_max
          << ", " << before.y_max << ") to (" << a.box.x_min << ", " << a.box.y_min << ", "
          << a.box.x_max << ", " << a.box.y_max << ")";
      issue(Kind::clamped, msg.str());
    }
    report.accepted.push_back(std::move(a));
  }
  return report;
}

}  // namespace sim2real
