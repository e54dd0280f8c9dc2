#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace sim2real {

// Pipeline variants compared in a report, in table row order.
enum class Variant { synthetic, diffusion_only, im2im_only, hybrid };

std::string to_string(Variant v);
Variant parse_variant(std::string_view text);  // throws ValidationError

// Label attached to a metric result so the report knows where it belongs.
struct ResultLabel {
  std::string dataset;
  Variant variant = Variant::synthetic;
  std::string domain;  // kitti, cs, or "-" when the metric has no target domain
};

nlohmann::json to_json(const ResultLabel& label);

struct MetricCell {
  std::string metric;  // cmmd | miou | map50
  std::string dataset;
  Variant variant = Variant::synthetic;
  std::string domain;
  double value = 0;
  std::string source;  // file the value came from
};

struct ComparisonReport {
  std::vector<MetricCell> cells;  // canonical order: metric, dataset, variant, domain
  nlohmann::json metadata;
};

struct ReportInput {
  std::string source;
  nlohmann::json document;
};

// Builds a report from labelled metric results (cmmd / eval-seg / eval-det
// outputs) and optional run manifests (contributing config hashes and
// timestamps). Throws ConflictingCell when two results claim one cell and
// ValidationError for unlabelled or unknown results.
ComparisonReport build_report(const std::vector<ReportInput>& results,
                              const std::vector<ReportInput>& runs = {});

nlohmann::json to_json(const ComparisonReport& report);

// Aligned text tables, one per (metric, dataset). Depends only on the JSON
// form of the report.
std::string render_text(const nlohmann::json& report);

}  // namespace sim2real
