#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace sim2real {

enum class AnnotationKind { segmentation, detection, none };
enum class BoxFormat { pixel, normalized };

std::string to_string(AnnotationKind kind);
std::string to_string(BoxFormat format);

struct ImageRecord {
  std::string id;
  std::string path;  // relative to the manifest root
  int width = 0;
  int height = 0;
  std::string source_tag;

  bool operator==(const ImageRecord&) const = default;
};

// Catalog of images. Record order is the canonical iteration order for every
// downstream consumer (pipeline runs, embeddings, evaluation).
struct DatasetManifest {
  std::string name;
  std::string root;                   // as written in the manifest file
  std::filesystem::path base_dir;     // directory of the manifest file
  AnnotationKind annotation_kind = AnnotationKind::none;
  BoxFormat box_format = BoxFormat::pixel;
  std::vector<std::string> categories;
  std::vector<ImageRecord> records;

  std::filesystem::path resolved_root() const;
  std::filesystem::path resolve(const ImageRecord& record) const;
  const ImageRecord* find(std::string_view id) const;
  std::optional<int> category_index(std::string_view name) const;

  // Rebuilds the id lookup; call after mutating `records` by hand.
  void reindex();

 private:
  std::unordered_map<std::string, std::size_t> by_id_;
};

struct ManifestLoadOptions {
  bool check_files = true;       // every record path must exist
  bool check_dimensions = true;  // PNG/JPEG headers must agree with width/height
};

DatasetManifest load_manifest(const std::filesystem::path& path,
                              const ManifestLoadOptions& options = {});
DatasetManifest manifest_from_json(const nlohmann::json& doc,
                                   const std::filesystem::path& base_dir,
                                   const ManifestLoadOptions& options = {});
nlohmann::json manifest_to_json(const DatasetManifest& manifest);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Segmentation label maps

inline constexpr std::uint8_t kDefaultIgnoreIndex = 255;

struct SegLabelMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> labels;  // row-major
  std::uint8_t ignore_index = kDefaultIgnoreIndex;

  std::uint8_t at(int x, int y) const {
    return labels[static_cast<std::size_t>(y) * width + x];
  }
  bool operator==(const SegLabelMap&) const = default;
};

SegLabelMap load_label_map(const std::filesystem::path& path,
                           std::uint8_t ignore_index = kDefaultIgnoreIndex);

// Checks dimensions against `record` (when given) and that every label is
// below `category_count` or equal to the ignore index.
void validate_label_map(const SegLabelMap& map, std::size_t category_count,
                        const ImageRecord* record = nullptr);

// One rule per source category. An empty target means IGNORE.
struct MappingRule {
  std::string source;
  std::optional<std::string> target;
};

class CategoryMapping {
 public:
  // Throws MappingError when a source category has no rule, has two rules,
  // or a rule names a category outside `source_categories`.
  static CategoryMapping resolve(std::vector<MappingRule> rules,
                                 std::vector<std::string> source_categories);
  static CategoryMapping identity(const std::vector<std::string>& categories);

  const std::vector<MappingRule>& rules() const { return rules_; }
  const std::vector<std::string>& source_categories() const { return source_; }
  // Target categories in order of first appearance among the rules.
  const std::vector<std::string>& target_categories() const { return target_; }
  // Target index for a source index; nullopt for IGNORE.
  std::optional<std::uint8_t> map_index(std::size_t source_index) const;

 private:
  std::vector<MappingRule> rules_;
  std::vector<std::string> source_;
  std::vector<std::string> target_;
  std::vector<int> lut_;  // -1 = IGNORE
};

std::vector<MappingRule> mapping_rules_from_json(const nlohmann::json& doc);
// The file may carry its own "source_categories"; otherwise rule order
// defines the source index order.
CategoryMapping load_category_mapping(const std::filesystem::path& path);
CategoryMapping load_category_mapping(const std::filesystem::path& path,
                                      const std::vector<std::string>& source_categories);

SegLabelMap apply_category_mapping(const SegLabelMap& map, const CategoryMapping& mapping);

// ---------------------------------------------------------------------------
// Detection annotations

struct Box {
  double x_min = 0;
  double y_min = 0;
  double x_max = 0;
  double y_max = 0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  bool degenerate() const { return !(x_min < x_max && y_min < y_max); }
  bool operator==(const Box&) const = default;
};

struct DetectionAnnotation {
  std::string image_id;
  int class_index = 0;
  Box box;
  std::optional<double> confidence;
  int line = 0;  // 1-based source line, 0 when built in memory
};

// Line format: image_id class x_min y_min x_max y_max [confidence]
// `class` is an index or a category name. Blank lines and '#' comments are
// skipped. Throws ParseError naming `source` and the line.
std::vector<DetectionAnnotation> parse_detections(std::string_view text,
                                                  const std::vector<std::string>& categories,
                                                  std::string_view source = "<memory>");
std::vector<DetectionAnnotation> load_detections(const std::filesystem::path& path,
                                                 const std::vector<std::string>& categories);

struct DetectionIssue {
  enum class Kind { clamped, degenerate, unknown_image, unknown_class, bad_confidence };
  Kind kind;
  std::size_t index;  // position in the input list
  std::string image_id;
  int line;
  std::string message;
};

std::string to_string(DetectionIssue::Kind kind);

struct DetectionValidationReport {
  std::vector<DetectionIssue> issues;
  std::vector<DetectionAnnotation> accepted;  // clamped, pixel coordinates
  std::size_t rejected = 0;

  bool clean() const { return issues.empty(); }
  std::size_t count(DetectionIssue::Kind kind) const;
};

// Normalized manifests have their coordinates scaled to pixels first.
// Out-of-bounds boxes are clamped and reported; degenerate boxes, unknown
// images and unknown classes are reported and dropped.
DetectionValidationReport validate_detections(const DatasetManifest& manifest,
                                              std::vector<DetectionAnnotation> annotations);

}  // namespace sim2real
