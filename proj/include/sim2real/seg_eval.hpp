#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sim2real/dataset.hpp"

namespace sim2real {

// counts(g, p) = pixels whose ground truth is g and prediction is p.
// Column k is the void-pred column: the prediction carried the ignore index
// while the ground truth did not. Those pixels count against the GT class's
// union but never as an intersection.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t k);

  std::size_t k() const { return k_; }
  std::uint64_t at(std::size_t gt, std::size_t pred) const {
    return counts_[gt * (k_ + 1) + pred];
  }
  std::uint64_t void_pred(std::size_t gt) const { return at(gt, k_); }
  std::uint64_t pixels_evaluated() const { return evaluated_; }
  std::uint64_t pixels_ignored() const { return ignored_; }
  std::uint64_t void_pred_total() const;

  // Pixels whose GT equals gt.ignore_index are skipped. Throws
  // DimensionMismatch or LabelOutOfRange (naming the pixel).
  void accumulate(const SegLabelMap& gt, const SegLabelMap& pred);
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;  // k x (k + 1)
  std::uint64_t evaluated_ = 0;
  std::uint64_t ignored_ = 0;
};

ConfusionMatrix accumulate(ConfusionMatrix cm, const SegLabelMap& gt, const SegLabelMap& pred);

// IoU per class; nullopt where the class has an empty union.
std::vector<std::optional<double>> iou_per_class(const ConfusionMatrix& cm);

// Mean over classes with a defined IoU. Throws NoDefinedClasses.
double miou(const ConfusionMatrix& cm);

struct SegEvalOptions {
  std::filesystem::path gt_dir;
  std::filesystem::path pred_dir;
  std::optional<CategoryMapping> gt_mapping;    // source = manifest categories
  std::optional<CategoryMapping> pred_mapping;  // otherwise preds use evaluated indices
  std::uint8_t ignore_index = kDefaultIgnoreIndex;
  std::size_t threads = 0;
};

struct SegEvalReport {
  std::vector<std::string> categories;
  ConfusionMatrix matrix{0};
  std::vector<std::optional<double>> per_class_iou;
  double miou = 0;
  std::size_t n_images = 0;
};

// Loads <gt_dir>/<id>.png and <pred_dir>/<id>.png for every record and
// accumulates one dataset-wide confusion matrix.
SegEvalReport evaluate_segmentation(const DatasetManifest& manifest,
                                    const SegEvalOptions& options);

nlohmann::json to_json(const SegEvalReport& report);

}  // namespace sim2real
