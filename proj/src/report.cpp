#include "sim2real/report.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "sim2real/errors.hpp"
#include "sim2real/version.hpp"

namespace sim2real {

using nlohmann::json;

std::string to_string(Variant v) {
  switch (v) {
    case Variant::synthetic: return "synthetic";
    case Variant::diffusion_only: return "diffusion_only";
    case Variant::im2im_only: return "im2im_only";
    case Variant::hybrid: return "hybrid";
  }
  return "synthetic";
}

Variant parse_variant(std::string_view text) {
  if (text == "synthetic") return Variant::synthetic;
  if (text == "diffusion_only") return Variant::diffusion_only;
  if (text == "im2im_only") return Variant::im2im_only;
  if (text == "hybrid") return Variant::hybrid;
  throw ValidationError("unknown variant '" + std::string(text) +
                        "' (synthetic|diffusion_only|im2im_only|hybrid)");
}

json to_json(const ResultLabel& label) {
  return {{"dataset", label.dataset},
          {"variant", to_string(label.variant)},
          {"domain", label.domain.empty() ? "-" : label.domain}};
}

namespace {

const std::vector<std::string> kMetrics = {"cmmd", "miou", "map50"};

int metric_rank(const std::string& m) {
  auto it = std::find(kMetrics.begin(), kMetrics.end(), m);
  return static_cast<int>(it - kMetrics.begin());
}

// kitti, cs, other names alphabetically, "-" last.
std::tuple<int, std::string> domain_rank(const std::string& d) {
  if (d == "kitti") return {0, d};
  if (d == "cs") return {1, d};
  if (d == "-") return {3, d};
  return {2, d};
}

bool cell_less(const MetricCell& a, const MetricCell& b) {
  return std::make_tuple(metric_rank(a.metric), a.dataset, static_cast<int>(a.variant),
                         domain_rank(a.domain)) <
         std::make_tuple(metric_rank(b.metric), b.dataset, static_cast<int>(b.variant),
                         domain_rank(b.domain));
}

std::string metric_title(const std::string& metric) {
  if (metric == "cmmd") return "CMMD (lower is better)";
  if (metric == "miou") return "mIoU (higher is better)";
  return "mAP@50 (higher is better)";
}

std::string format_value(const std::string& metric, double v) {
  char buf[64];
  if (metric == "cmmd") {
    std::snprintf(buf, sizeof(buf), "%.3f", v);
  } else {
    std::snprintf(buf, sizeof(buf), "%.2f%%", 100.0 * v);
  }
  return buf;
}

}  // namespace

ComparisonReport build_report(const std::vector<ReportInput>& results,
                              const std::vector<ReportInput>& runs) {
  if (results.empty()) throw ValidationError("report needs at least one metric result");
  ComparisonReport report;
  std::set<std::string> datasets;
  for (const auto& in : results) {
    const json& doc = in.document;
    if (!doc.is_object() || !doc.contains("metric") || !doc.at("metric").is_string()) {
      throw ValidationError(in.source + ": not a metric result (no 'metric' field)");
    }
    MetricCell cell;
    cell.metric = doc.at("metric").get<std::string>();
    if (metric_rank(cell.metric) == static_cast<int>(kMetrics.size())) {
      throw ValidationError(in.source + ": unknown metric '" + cell.metric + "'");
    }
    if (!doc.contains(cell.metric) || !doc.at(cell.metric).is_number()) {
      throw ValidationError(in.source + ": missing numeric '" + cell.metric + "' value");
    }
    cell.value = doc.at(cell.metric).get<double>();
    if (!doc.contains("label") || !doc.at("label").is_object()) {
      throw ValidationError(in.source + ": result has no label (pass --dataset/--variant/--domain)");
    }
    const json& label = doc.at("label");
    cell.dataset = label.value("dataset", std::string());
    cell.variant = parse_variant(label.value("variant", std::string()));
    cell.domain = label.value("domain", std::string("-"));
    if (cell.domain.empty()) cell.domain = "-";
    cell.source = in.source;
    for (const auto& existing : report.cells) {
      if (existing.metric == cell.metric && existing.dataset == cell.dataset &&
          existing.variant == cell.variant && existing.domain == cell.domain) {
        throw ConflictingCell("(" + to_string(cell.variant) + ", " + cell.domain + ") for " +
                              cell.metric + " on '" + cell.dataset + "' claimed by both " +
                              existing.source + " and " + cell.source);
      }
    }
    datasets.insert(cell.dataset);
    report.cells.push_back(std::move(cell));
  }
  std::stable_sort(report.cells.begin(), report.cells.end(), cell_less);

  json run_meta = json::array();
  for (const auto& r : runs) {
    run_meta.push_back({{"source", r.source},
                        {"config_hash", r.document.value("config_hash", std::string())},
                        {"dataset", r.document.value("dataset", std::string())},
                        {"started", r.document.value("started", std::string())},
                        {"finished", r.document.value("finished", std::string())}});
  }
  report.metadata = {{"datasets", datasets},
                     {"runs", std::move(run_meta)},
                     {"toolkit_version", kToolkitVersion}};
  return report;
}

json to_json(const ComparisonReport& report) {
  json cells = json::array();
  for (const auto& c : report.cells) {
    cells.push_back({{"metric", c.metric},
                     {"dataset", c.dataset},
                     {"variant", to_string(c.variant)},
                     {"domain", c.domain},
                     {"value", c.value},
                     {"source", c.source}});
  }
  // Tables: one per (metric, dataset), rows in variant order.
  json tables = json::array();
  std::size_t i = 0;
  while (i < report.cells.size()) {
    std::size_t j = i;
    while (j < report.cells.size() && report.cells[j].metric == report.cells[i].metric &&
           report.cells[j].dataset == report.cells[i].dataset) {
      ++j;
    }
    std::vector<std::string> domains;
    for (std::size_t k = i; k < j; ++k) domains.push_back(report.cells[k].domain);
    std::sort(domains.begin(), domains.end(),
              [](const auto& a, const auto& b) { return domain_rank(a) < domain_rank(b); });
    domains.erase(std::unique(domains.begin(), domains.end()), domains.end());
    json rows = json::array();
    for (std::size_t k = i; k < j;) {
      const Variant v = report.cells[k].variant;
      json values = json::object();
      for (; k < j && report.cells[k].variant == v; ++k) {
        values[report.cells[k].domain] = report.cells[k].value;
      }
      rows.push_back({{"variant", to_string(v)}, {"values", std::move(values)}});
    }
    tables.push_back({{"metric", report.cells[i].metric},
                      {"dataset", report.cells[i].dataset},
                      {"domains", domains},
                      {"rows", std::move(rows)}});
    i = j;
  }
  return {{"schema_version", kSchemaVersion},
          {"kind", "comparison_report"},
          {"cells", std::move(cells)},
          {"tables", std::move(tables)},
          {"metadata", report.metadata}};
}

std::string render_text(const json& report) {
  std::ostringstream out;
  bool first = true;
  for (const auto& table : report.at("tables")) {
    const std::string metric = table.at("metric").get<std::string>();
    const auto domains = table.at("domains").get<std::vector<std::string>>();
    std::vector<std::vector<std::string>> grid;
    std::vector<std::string> header = {"variant"};
    header.insert(header.end(), domains.begin(), domains.end());
    grid.push_back(header);
    for (const auto& row : table.at("rows")) {
      std::vector<std::string> line = {row.at("variant").get<std::string>()};
      for (const auto& d : domains) {
        const json& values = row.at("values");
        line.push_back(values.contains(d) ? format_value(metric, values.at(d).get<double>())
                                          : "-");
      }
      grid.push_back(std::move(line));
    }
    std::vector<std::size_t> width(header.size(), 0);
    for (const auto& line : grid) {
      for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
    }
    if (!first) out << '\n';
    first = false;
    out << metric_title(metric) << " | dataset: " << table.at("dataset").get<std::string>()
        << '\n';
    auto emit = [&](const std::vector<std::string>& line) {
      for (std::size_t c = 0; c < line.size(); ++c) {
        if (c == 0) {
          out << line[c] << std::string(width[c] - line[c].size(), ' ');
        } else {
          out << "  " << std::string(width[c] - line[c].size(), ' ') << line[c];
        }
      }
      out << '\n';
    };
    emit(grid[0]);
    for (std::size_t c = 0; c < width.size(); ++c) {
      out << (c ? "  " : "") << std::string(width[c], '-');
    }
    out << '\n';
    for (std::size_t r = 1; r < grid.size(); ++r) emit(grid[r]);
  }
  return out.str();
}

}  // namespace sim2real
