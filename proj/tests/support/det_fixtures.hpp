#pragma once

#include <random>

#include "oracles.hpp"
#include "sim2real/det_eval.hpp"

namespace sim2real::testing {

struct Scene {
  std::vector<Detection> dets;
  std::vector<DetectionAnnotation> gts;
};

// Boxes on a small integer grid so IoU ties and exact 0.5 overlaps occur;
// confidences on a 0.1 grid so confidence ties occur too. Most detections
// are jittered copies of a ground-truth box.
inline Scene random_scene(std::mt19937& rng, const std::string& image_id, int n_classes,
                          int max_gt = 4, int max_det = 6) {
  std::uniform_int_distribution<int> coord(0, 12), size(1, 6), jitter(-2, 2);
  std::uniform_int_distribution<int> conf(1, 9);
  Scene s;
  for (int c = 0; c < n_classes; ++c) {
    const int ng = std::uniform_int_distribution<int>(0, max_gt)(rng);
    const int nd = std::uniform_int_distribution<int>(0, max_det)(rng);
    std::vector<Box> class_gts;
    for (int g = 0; g < ng; ++g) {
      const double x = coord(rng), y = coord(rng);
      const Box b{x, y, x + size(rng), y + size(rng)};
      class_gts.push_back(b);
      s.gts.push_back({image_id, c, b, std::nullopt, 0});
    }
    for (int d = 0; d < nd; ++d) {
      Box b;
      if (!class_gts.empty() && std::bernoulli_distribution(0.75)(rng)) {
        const Box& g = class_gts[std::uniform_int_distribution<std::size_t>(
            0, class_gts.size() - 1)(rng)];
        b = {g.x_min + jitter(rng) * 0.5, g.y_min + jitter(rng) * 0.5, g.x_max, g.y_max};
        if (b.degenerate()) b = g;
      } else {
        const double x = coord(rng), y = coord(rng);
        b = {x, y, x + size(rng), y + size(rng)};
      }
      s.dets.push_back({image_id, c, conf(rng) / 10.0, b});
    }
  }
  return s;
}

inline oracle::OBox to_obox(const Box& b) { return {b.x_min, b.y_min, b.x_max, b.y_max}; }

// Oracle flags (rank order) for one image and class.
inline std::vector<bool> oracle_flags(const std::vector<Detection>& dets,
                                      const std::vector<Box>& gts, double thr) {
  std::vector<oracle::OBox> od, og;
  std::vector<double> conf;
  for (const auto& d : dets) od.push_back(to_obox(d.box)), conf.push_back(d.confidence);
  for (const auto& g : gts) og.push_back(to_obox(g));
  const std::vector<int> assignment = oracle::exhaustive_greedy(od, conf, og, thr);
  std::vector<bool> flags;
  for (std::size_t i : oracle::rank_order(conf)) flags.push_back(assignment.at(i) >= 0);
  return flags;
}

}  // namespace sim2real::testing
