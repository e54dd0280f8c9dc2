#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sim2real/dataset.hpp"

namespace sim2real {

struct Detection {
  std::string image_id;
  int class_index = 0;
  double confidence = 0;
  Box box;
};

// Predictions must carry a confidence; throws ValidationError otherwise.
std::vector<Detection> to_detections(const std::vector<DetectionAnnotation>& annotations);

enum class MatchFlag : std::uint8_t { tp, fp };

struct MatchResult {
  std::vector<MatchFlag> flags;        // descending confidence
  std::vector<double> confidences;     // aligned with flags
  std::vector<std::size_t> order;      // input index of each flag
  std::size_t n_gt = 0;

  std::size_t true_positives() const;
};

// Intersection over union of two boxes. Throws DegenerateBox.
double box_iou(const Box& a, const Box& b);

// Greedy matching for one image and one class. Detections are visited by
// descending confidence (ties keep input order); each takes the unmatched
// ground truth with the highest IoU >= threshold (lowest index on IoU ties).
MatchResult match_detections(std::span<const Detection> dets, std::span<const Box> gts,
                             double threshold = 0.5);

// All-point interpolated area under the precision/recall curve.
// Throws NoGroundTruth when n_gt == 0.
double average_precision(const MatchResult& match);

struct ClassAp {
  std::string name;
  std::optional<double> ap;  // nullopt when the class has no ground truth
  std::size_t n_gt = 0;
  std::size_t n_pred = 0;
  std::size_t true_positives = 0;
};

struct DetEvalReport {
  std::vector<ClassAp> per_class;
  double map50 = 0;
  double iou_threshold = 0.5;
  std::size_t n_images = 0;
  std::size_t n_gt = 0;
  std::size_t n_pred = 0;
};

// Per-class AP with matches pooled over all images, then the mean over
// classes that have ground truth. Throws NoDefinedClasses when none do.
DetEvalReport map50(std::span<const Detection> dets, std::span<const DetectionAnnotation> gts,
                    const DatasetManifest& manifest, double threshold = 0.5);

nlohmann::json to_json(const DetEvalReport& report);

}  // namespace sim2real
