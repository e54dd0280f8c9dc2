#include "sim2real/det_eval.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <unordered_map>

#include "sim2real/errors.hpp"

namespace sim2real {

std::vector<Detection> to_detections(const std::vector<DetectionAnnotation>& annotations) {
  std::vector<Detection> out;
  out.reserve(annotations.size());
  for (const auto& a : annotations) {
    if (!a.confidence) {
      throw ValidationError("prediction for '" + a.image_id + "' (line " +
                            std::to_string(a.line) + ") has no confidence");
    }
    out.push_back({a.image_id, a.class_index, *a.confidence, a.box});
  }
  return out;
}

std::size_t MatchResult::true_positives() const {
  return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), MatchFlag::tp));
}

double box_iou(const Box& a, const Box& b) {
  if (a.degenerate() || b.degenerate()) throw DegenerateBox("box_iou on a zero-area box");
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

MatchResult match_detections(std::span<const Detection> dets, std::span<const Box> gts,
                             double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw ConfigError("IoU threshold must lie in (0, 1]");
  }
  MatchResult result;
  result.n_gt = gts.size();
  result.order.resize(dets.size());
  std::iota(result.order.begin(), result.order.end(), std::size_t{0});
  std::stable_sort(result.order.begin(), result.order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].confidence > dets[b].confidence;
  });
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t idx : result.order) {
    const Detection& d = dets[idx];
    double best = -1.0;
    std::size_t best_gt = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      const double iou = box_iou(d.box, gts[g]);
      if (iou >= threshold && iou > best) {
        best = iou;
        best_gt = g;
      }
    }
    if (best_gt < gts.size()) {
      taken[best_gt] = true;
      result.flags.push_back(MatchFlag::tp);
    } else {
      result.flags.push_back(MatchFlag::fp);
    }
    result.confidences.push_back(d.confidence);
  }
  return result;
}

double average_precision(const MatchResult& match) {
  if (match.n_gt == 0) throw NoGroundTruth("average precision is undefined without ground truth");
  const std::size_t n = match.flags.size();
  // Long double keeps the result correctly rounded on realistic sizes, so it
  // agrees bit for bit with an exact rational evaluation.
  std::vector<long double> precision(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (match.flags[i] == MatchFlag::tp) ++tp;
    precision[i] = static_cast<long double>(tp) / static_cast<long double>(i + 1);
  }
  // Envelope: precision at each rank becomes the best precision at any
  // equal or higher recall.
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  // Recall rises by 1/n_gt exactly at each true positive.
  long double area = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    if (match.flags[i] == MatchFlag::tp) area += precision[i];
  }
  return static_cast<double>(area / static_cast<long double>(match.n_gt));
}

DetEvalReport map50(std::span<const Detection> dets, std::span<const DetectionAnnotation> gts,
                    const DatasetManifest& manifest, double threshold) {
  if (manifest.annotation_kind != AnnotationKind::detection) {
    throw ValidationError("manifest '" + manifest.name + "' is not a detection dataset");
  }
  const std::size_t k = manifest.categories.size();
  auto check = [&](const std::string& image_id, int cls, const char* what) {
    if (manifest.find(image_id) == nullptr) {
      throw ValidationError(std::string(what) + " references unknown image '" + image_id + "'");
    }
    if (cls < 0 || static_cast<std::size_t>(cls) >= k) {
      throw ValidationError(std::string(what) + " has class index " + std::to_string(cls) +
                            " outside [0, " + std::to_string(k) + ")");
    }
  };

  // (class, image) -> input indices.
  using Key = std::pair<std::size_t, std::string>;
  std::map<Key, std::vector<std::size_t>> det_groups;
  std::map<Key, std::vector<Box>> gt_groups;
  std::vector<std::size_t> gt_per_class(k, 0);
  std::vector<std::size_t> pred_per_class(k, 0);
  for (std::size_t i = 0; i < dets.size(); ++i) {
    check(dets[i].image_id, dets[i].class_index, "detection");
    det_groups[{static_cast<std::size_t>(dets[i].class_index), dets[i].image_id}].push_back(i);
    ++pred_per_class[dets[i].class_index];
  }
  for (const auto& g : gts) {
    check(g.image_id, g.class_index, "ground truth");
    gt_groups[{static_cast<std::size_t>(g.class_index), g.image_id}].push_back(g.box);
    ++gt_per_class[g.class_index];
  }

  DetEvalReport report;
  report.iou_threshold = threshold;
  report.n_images = manifest.records.size();
  report.n_gt = gts.size();
  report.n_pred = dets.size();

  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t c = 0; c < k; ++c) {
    // Pool every image's matches for this class: (input index, flag).
    std::vector<std::pair<std::size_t, MatchFlag>> pooled;
    for (auto it = det_groups.lower_bound({c, std::string()});
         it != det_groups.end() && it->first.first == c; ++it) {
      std::vector<Detection> local;
      for (std::size_t i : it->second) local.push_back(dets[i]);
      auto g = gt_groups.find(it->first);
      const std::span<const Box> boxes =
          g == gt_groups.end() ? std::span<const Box>() : std::span<const Box>(g->second);
      const MatchResult m = match_detections(local, boxes, threshold);
      for (std::size_t r = 0; r < m.flags.size(); ++r) {
        pooled.emplace_back(it->second[m.order[r]], m.flags[r]);
      }
    }
    // Global ranking: descending confidence, ties by input order.
    std::sort(pooled.begin(), pooled.end(), [&](const auto& a, const auto& b) {
      if (dets[a.first].confidence != dets[b.first].confidence) {
        return dets[a.first].confidence > dets[b.first].confidence;
      }
      return a.first < b.first;
    });
    MatchResult merged;
    merged.n_gt = gt_per_class[c];
    for (const auto& [idx, flag] : pooled) {
      merged.flags.push_back(flag);
      merged.confidences.push_back(dets[idx].confidence);
      merged.order.push_back(idx);
    }
    ClassAp cls{manifest.categories[c], std::nullopt, merged.n_gt, pred_per_class[c],
                merged.true_positives()};
    if (merged.n_gt > 0) {
      cls.ap = average_precision(merged);
      sum += *cls.ap;
      ++defined;
    }
    report.per_class.push_back(std::move(cls));
  }
  if (defined == 0) throw NoDefinedClasses("no class has ground-truth boxes");
  report.map50 = sum / static_cast<double>(defined);
  return report;
}

nlohmann::json to_json(const DetEvalReport& r) {
  nlohmann::json per_class = nlohmann::json::object();
  nlohmann::json counts = nlohmann::json::object();
  std::vector<std::string> names;
  for (const auto& c : r.per_class) {
    per_class[c.name] = c.ap ? nlohmann::json(*c.ap) : nlohmann::json(nullptr);
    counts[c.name] = {{"n_gt", c.n_gt}, {"n_pred", c.n_pred}, {"tp", c.true_positives}};
    names.push_back(c.name);
  }
  return {{"metric", "map50"},
          {"per_class_ap", std::move(per_class)},
          {"per_class_counts", std::move(counts)},
          {"categories", names},
          {"map50", r.map50},
          {"iou_threshold", r.iou_threshold},
          {"interpolation", "all_point"},
          {"matching", "greedy"},
          {"n_images", r.n_images},
          {"n_gt", r.n_gt},
          {"n_pred", r.n_pred}};
}

}  // namespace sim2real
