#include "sim2real/seg_eval.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <exception>
#include <thread>

#include "sim2real/errors.hpp"

namespace sim2real {

ConfusionMatrix::ConfusionMatrix(std::size_t k) : k_(k), counts_(k * (k + 1), 0) {}

std::uint64_t ConfusionMatrix::void_pred_total() const {
  std::uint64_t total = 0;
  for (std::size_t g = 0; g < k_; ++g) total += void_pred(g);
  return total;
}

void ConfusionMatrix::accumulate(const SegLabelMap& gt, const SegLabelMap& pred) {
  if (gt.width != pred.width || gt.height != pred.height) {
    throw DimensionMismatch("ground truth is " + std::to_string(gt.width) + "x" +
                            std::to_string(gt.height) + ", prediction is " +
                            std::to_string(pred.width) + "x" + std::to_string(pred.height));
  }
  const std::size_t n = static_cast<std::size_t>(gt.width) * gt.height;
  if (gt.labels.size() != n || pred.labels.size() != n) {
    throw DimensionMismatch("label buffer size does not match map dimensions");
  }
  auto out_of_range = [&](const char* which, std::size_t i, unsigned v) {
    const auto x = i % static_cast<std::size_t>(gt.width);
    const auto y = i / static_cast<std::size_t>(gt.width);
    return LabelOutOfRange(std::string(which) + " label " + std::to_string(v) + " at (" +
                           std::to_string(x) + ", " + std::to_string(y) +
                           ") outside [0, " + std::to_string(k_) + ")");
  };
  // Validate before touching the counts so a bad map leaves them unchanged.
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned g = gt.labels[i];
    if (g == gt.ignore_index) continue;
    if (g >= k_) throw out_of_range("ground-truth", i, g);
    const unsigned p = pred.labels[i];
    if (p != pred.ignore_index && p >= k_) throw out_of_range("predicted", i, p);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned g = gt.labels[i];
    if (g == gt.ignore_index) {
      ++ignored_;
      continue;
    }
    const unsigned p = pred.labels[i];
    const std::size_t col = p == pred.ignore_index ? k_ : p;
    ++counts_[g * (k_ + 1) + col];
    ++evaluated_;
  }
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.k_ != k_) {
    throw DimensionMismatch("cannot merge confusion matrices with k=" + std::to_string(k_) +
                            " and k=" + std::to_string(other.k_));
  }
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  evaluated_ += other.evaluated_;
  ignored_ += other.ignored_;
  return *this;
}

ConfusionMatrix accumulate(ConfusionMatrix cm, const SegLabelMap& gt, const SegLabelMap& pred) {
  cm.accumulate(gt, pred);
  return cm;
}

std::vector<std::optional<double>> iou_per_class(const ConfusionMatrix& cm) {
  const std::size_t k = cm.k();
  std::vector<std::optional<double>> out(k);
  for (std::size_t c = 0; c < k; ++c) {
    std::uint64_t row = 0;  // includes the void-pred column
    std::uint64_t col = 0;
    for (std::size_t j = 0; j <= k; ++j) row += cm.at(c, j);
    for (std::size_t g = 0; g < k; ++g) col += cm.at(g, c);
    const std::uint64_t inter = cm.at(c, c);
    const std::uint64_t uni = row + col - inter;
    if (uni > 0) out[c] = static_cast<double>(inter) / static_cast<double>(uni);
  }
  return out;
}

double miou(const ConfusionMatrix& cm) {
  double sum = 0.0;
  std::size_t defined = 0;
  for (const auto& iou : iou_per_class(cm)) {
    if (!iou) continue;
    sum += *iou;
    ++defined;
  }
  if (defined == 0) throw NoDefinedClasses("no class has ground-truth or predicted pixels");
  return sum / static_cast<double>(defined);
}

namespace {

// Translates pred-mapping target indices into evaluated category indices.
std::array<std::uint8_t, 256> pred_to_eval_lut(const CategoryMapping& pred_mapping,
                                               const std::vector<std::string>& eval_categories,
                                               std::uint8_t ignore_index) {
  std::array<std::uint8_t, 256> lut;
  lut.fill(ignore_index);
  const auto& targets = pred_mapping.target_categories();
  for (std::size_t t = 0; t < targets.size(); ++t) {
    auto it = std::find(eval_categories.begin(), eval_categories.end(), targets[t]);
    if (it == eval_categories.end()) {
      throw MappingError("prediction mapping target '" + targets[t] +
                         "' is not an evaluated category");
    }
    lut[t] = static_cast<std::uint8_t>(it - eval_categories.begin());
  }
  return lut;
}

}  // namespace

SegEvalReport evaluate_segmentation(const DatasetManifest& manifest,
                                    const SegEvalOptions& options) {
  if (manifest.annotation_kind != AnnotationKind::segmentation) {
    throw ValidationError("manifest '" + manifest.name + "' is not a segmentation dataset");
  }
  const CategoryMapping gt_mapping =
      options.gt_mapping ? *options.gt_mapping : CategoryMapping::identity(manifest.categories);
  if (gt_mapping.source_categories() != manifest.categories) {
    throw MappingError("ground-truth mapping was not resolved against the manifest categories");
  }
  SegEvalReport report;
  report.categories = gt_mapping.target_categories();
  const std::size_t k = report.categories.size();
  std::optional<std::array<std::uint8_t, 256>> pred_lut;
  if (options.pred_mapping) {
    pred_lut = pred_to_eval_lut(*options.pred_mapping, report.categories, options.ignore_index);
  }

  const std::size_t n = manifest.records.size();
  std::size_t threads = options.threads ? options.threads
                                        : std::max(1u, std::thread::hardware_concurrency());
  threads = std::clamp<std::size_t>(threads, 1, n);
  std::vector<ConfusionMatrix> partial(threads, ConfusionMatrix(k));
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};

  auto worker = [&](std::size_t slot) {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        const ImageRecord& rec = manifest.records[i];
        SegLabelMap gt = load_label_map(options.gt_dir / (rec.id + ".png"), options.ignore_index);
        validate_label_map(gt, manifest.categories.size(), &rec);
        gt = apply_category_mapping(gt, gt_mapping);
        SegLabelMap pred =
            load_label_map(options.pred_dir / (rec.id + ".png"), options.ignore_index);
        if (pred.width != rec.width || pred.height != rec.height) {
          throw DimensionMismatch("prediction for '" + rec.id + "' is " +
                                  std::to_string(pred.width) + "x" +
                                  std::to_string(pred.height) + ", expected " +
                                  std::to_string(rec.width) + "x" + std::to_string(rec.height));
        }
        if (options.pred_mapping) {
          pred = apply_category_mapping(pred, *options.pred_mapping);
          for (auto& v : pred.labels) v = (*pred_lut)[v];
        }
        partial[slot].accumulate(gt, pred);
      } catch (const Error& e) {
        try {
          e.rethrow_with_context("image '" + manifest.records[i].id + "': ");
        } catch (...) {
          errors[i] = std::current_exception();
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker, t);
  worker(0);
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  report.matrix = ConfusionMatrix(k);
  for (const auto& p : partial) report.matrix += p;
  report.per_class_iou = iou_per_class(report.matrix);
  report.miou = miou(report.matrix);
  report.n_images = n;
  return report;
}

nlohmann::json to_json(const SegEvalReport& r) {
  nlohmann::json per_class = nlohmann::json::object();
  for (std::size_t c = 0; c < r.categories.size(); ++c) {
    per_class[r.categories[c]] =
        r.per_class_iou[c] ? nlohmann::json(*r.per_class_iou[c]) : nlohmann::json(nullptr);
  }
  return {{"metric", "miou"},
          {"per_class_iou", std::move(per_class)},
          {"miou", r.miou},
          {"categories", r.categories},
          {"n_images", r.n_images},
          {"pixels_evaluated", r.matrix.pixels_evaluated()},
          {"pixels_ignored", r.matrix.pixels_ignored()},
          {"pixels_void_pred", r.matrix.void_pred_total()},
          {"void_pred_policy", "counts_against_gt_class"}};
}

}  // namespace sim2real
