#include "sim2real/cli.hpp"

#include <cstdlib>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "sim2real/cmmd.hpp"
#include "sim2real/det_eval.hpp"
#include "sim2real/embedding.hpp"
#include "sim2real/errors.hpp"
#include "sim2real/io.hpp"
#include "sim2real/pipeline.hpp"
#include "sim2real/report.hpp"
#include "sim2real/run_config.hpp"
#include "sim2real/seg_eval.hpp"
#include "sim2real/version.hpp"

namespace sim2real {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct LabelArgs {
  std::string dataset;
  std::string variant;
  std::string domain;

  void add_to(CLI::App* app) {
    app->add_option("--dataset", dataset, "Dataset name recorded in the result label");
    app->add_option("--variant", variant,
                    "synthetic | diffusion_only | im2im_only | hybrid");
    app->add_option("--domain", domain, "Target domain of the variant (kitti, cs, -)");
  }

  // Attaches {"label": ...} when a variant was given.
  void apply(json& doc) const {
    if (variant.empty()) return;
    ResultLabel label{dataset, parse_variant(variant), domain.empty() ? "-" : domain};
    doc["label"] = to_json(label);
  }
};

void emit_json(const json& doc, const std::string& out_path, std::ostream& out) {
  const std::string text = doc.dump(2) + "\n";
  if (!out_path.empty()) write_file_atomic(out_path, text);
  out << text;
}

json read_json_file(const fs::path& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

// --- run --------------------------------------------------------------------

struct RunArgs {
  std::string config;
  std::string manifest;
  std::string cache_dir;
  std::string prompt_file;
  std::string out_dir;
  std::optional<std::int64_t> seed;
  std::optional<std::size_t> concurrency;
  std::optional<int> retries;
};

int cmd_run(const RunArgs& a, std::ostream& out, std::ostream& err) {
  RunSettings s = load_run_settings(a.config);
  // Precedence for the cache location: flag, then environment, then file.
  if (const char* env = std::getenv("SIM2REAL_CACHE_DIR"); env && *env) {
    s.pipeline.cache_dir = env;
  }
  if (!a.cache_dir.empty()) s.pipeline.cache_dir = a.cache_dir;
  if (!a.manifest.empty()) s.dataset = a.manifest;
  if (!a.out_dir.empty()) s.export_dir = fs::path(a.out_dir);
  if (a.concurrency) s.pipeline.concurrency = *a.concurrency;
  if (a.retries) s.pipeline.retries = *a.retries;
  for (auto& phase : s.pipeline.phases) {
    if (phase.kind != PhaseKind::diffusion_enhance) continue;
    if (!a.prompt_file.empty()) phase.prompt = read_prompt_file(a.prompt_file);
    if (a.seed) phase.seed = *a.seed;
  }
  if (s.dataset.empty()) throw ConfigError("no dataset manifest (config 'dataset' or --manifest)");

  const DatasetManifest dataset = load_manifest(s.dataset);
  RunOptions options;
  options.export_dir = s.export_dir;
  const RunManifest manifest = run_pipeline(s.pipeline, dataset, options);

  out << manifest.path.string() << "\n";
  for (const auto& img : manifest.images) {
    if (img.ok) continue;
    err << "failed: " << img.image_id << ": " << img.error_message.value_or("") << "\n";
  }
  err << manifest.images.size() - manifest.failed() << "/" << manifest.images.size()
      << " images ok, " << manifest.backend_requests << " backend requests"
      << (manifest.all_cached ? " (all cached)" : "") << "\n";
  return manifest.failed() ? kExitPartial : kExitOk;
}

// --- embed ------------------------------------------------------------------

struct EmbedArgs {
  std::string manifest;
  std::string endpoint;
  std::string out_path;
  std::size_t batch_size = 32;
  std::size_t concurrency = 1;
  int retries = 3;
};

int cmd_embed(const EmbedArgs& a, std::ostream& out) {
  const DatasetManifest m = load_manifest(a.manifest, {.check_files = true, .check_dimensions = false});
  EmbedOptions opt;
  opt.batch_size = a.batch_size;
  opt.concurrency = a.concurrency;
  opt.retry.max_attempts = a.retries;
  const EmbeddingMatrix e = embed_remote(a.endpoint, m, m.records, opt);
  write_embeddings(e, a.out_path);
  out << json{{"path", a.out_path}, {"n", e.rows()}, {"dims", e.dims()}}.dump() << "\n";
  return kExitOk;
}

// --- cmmd -------------------------------------------------------------------

struct CmmdArgs {
  std::string ref;
  std::string gen;
  std::string estimator = "biased";
  std::string out_path;
  CmmdConfig config;
  LabelArgs label;
};

int cmd_cmmd(CmmdArgs& a, std::ostream& out) {
  a.config.estimator = parse_estimator(a.estimator);
  const MmdReport r = cmmd(read_embeddings(a.ref), read_embeddings(a.gen), a.config);
  json doc = to_json(r);
  doc["config"]["normalized"] = true;
  doc["ref"] = a.ref;
  doc["gen"] = a.gen;
  doc["schema_version"] = kSchemaVersion;
  a.label.apply(doc);
  emit_json(doc, a.out_path, out);
  return kExitOk;
}

// --- eval-seg ---------------------------------------------------------------

struct SegArgs {
  std::string manifest;
  std::string gt_dir;
  std::string pred_dir;
  std::string mapping;
  std::string pred_mapping;
  int ignore_index = kDefaultIgnoreIndex;
  std::string out_path;
  LabelArgs label;
};

int cmd_eval_seg(const SegArgs& a, std::ostream& out) {
  const DatasetManifest m = load_manifest(a.manifest, {.check_files = false, .check_dimensions = false});
  SegEvalOptions opt;
  opt.gt_dir = a.gt_dir;
  opt.pred_dir = a.pred_dir;
  opt.ignore_index = static_cast<std::uint8_t>(a.ignore_index);
  if (!a.mapping.empty()) opt.gt_mapping = load_category_mapping(a.mapping, m.categories);
  if (!a.pred_mapping.empty()) opt.pred_mapping = load_category_mapping(a.pred_mapping);
  const SegEvalReport r = evaluate_segmentation(m, opt);
  json doc = to_json(r);
  doc["dataset"] = m.name;
  doc["ignore_index"] = a.ignore_index;
  doc["schema_version"] = kSchemaVersion;
  a.label.apply(doc);
  emit_json(doc, a.out_path, out);
  return kExitOk;
}

// --- eval-det ---------------------------------------------------------------

struct DetArgs {
  std::string manifest;
  std::string gt;
  std::string pred;
  double iou_threshold = 0.5;
  std::string out_path;
  LabelArgs label;
};

json validation_summary(const DetectionValidationReport& r, std::ostream& err,
                        const std::string& what) {
  for (const auto& issue : r.issues) {
    err << "warning: " << what << " line " << issue.line << " (" << issue.image_id
        << "): " << to_string(issue.kind) << ": " << issue.message << "\n";
  }
  using Kind = DetectionIssue::Kind;
  return {{"accepted", r.accepted.size()},
          {"rejected", r.rejected},
          {"clamped", r.count(Kind::clamped)},
          {"degenerate", r.count(Kind::degenerate)},
          {"unknown_image", r.count(Kind::unknown_image)},
          {"unknown_class", r.count(Kind::unknown_class)},
          {"bad_confidence", r.count(Kind::bad_confidence)}};
}

int cmd_eval_det(const DetArgs& a, std::ostream& out, std::ostream& err) {
  const DatasetManifest m = load_manifest(a.manifest, {.check_files = false, .check_dimensions = false});
  const auto gt = validate_detections(m, load_detections(a.gt, m.categories));
  const auto pred = validate_detections(m, load_detections(a.pred, m.categories));
  json validation = {{"gt", validation_summary(gt, err, a.gt)},
                     {"pred", validation_summary(pred, err, a.pred)}};
  const std::vector<Detection> dets = to_detections(pred.accepted);
  const DetEvalReport r = map50(dets, gt.accepted, m, a.iou_threshold);
  json doc = to_json(r);
  doc["dataset"] = m.name;
  doc["validation"] = std::move(validation);
  doc["schema_version"] = kSchemaVersion;
  a.label.apply(doc);
  emit_json(doc, a.out_path, out);
  return kExitOk;
}

// --- report -----------------------------------------------------------------

struct ReportArgs {
  std::vector<std::string> results;
  std::vector<std::string> runs;
  std::string out_path;
  std::string text_out;
  bool json_stdout = false;
};

int cmd_report(const ReportArgs& a, std::ostream& out) {
  std::vector<ReportInput> results;
  for (const auto& p : a.results) results.push_back({p, read_json_file(p)});
  std::vector<ReportInput> runs;
  for (const auto& p : a.runs) runs.push_back({p, read_json_file(p)});
  const json doc = to_json(build_report(results, runs));
  const std::string text = render_text(doc);
  if (!a.out_path.empty()) write_file_atomic(a.out_path, doc.dump(2) + "\n");
  if (!a.text_out.empty()) write_file_atomic(a.text_out, text);
  out << (a.json_stdout ? doc.dump(2) + "\n" : text);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"sim2real: two-phase photorealism enhancement pipeline and "
               "sim2real gap metrics (CMMD, mIoU, mAP@50)",
               "sim2real"};
  app.require_subcommand(0, 1);
  bool show_version = false;
  app.add_flag("--version", show_version, "Print toolkit and schema versions");

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Run the enhancement pipeline over a dataset");
  run->add_option("--config", run_args.config, "Run config file")->required();
  run->add_option("--manifest", run_args.manifest, "Dataset manifest (overrides config)");
  run->add_option("--cache-dir", run_args.cache_dir, "Artifact cache directory");
  run->add_option("--prompt-file", run_args.prompt_file, "Diffusion prompt override");
  run->add_option("--out-dir", run_args.out_dir, "Export final images as <id>.png here");
  run->add_option("--seed", run_args.seed, "Diffusion seed override");
  run->add_option("--concurrency", run_args.concurrency, "Images in flight")
      ->check(CLI::PositiveNumber);
  run->add_option("--retries", run_args.retries, "Attempts per request")
      ->check(CLI::PositiveNumber);

  EmbedArgs embed_args;
  auto* embed = app.add_subcommand("embed", "Embed every manifest image via /v1/embed");
  embed->add_option("--manifest", embed_args.manifest, "Dataset manifest")->required();
  embed->add_option("--endpoint", embed_args.endpoint, "Embedder base URL")->required();
  embed->add_option("--out", embed_args.out_path, "Output .semb file")->required();
  embed->add_option("--batch-size", embed_args.batch_size, "Images per request")
      ->check(CLI::PositiveNumber);
  embed->add_option("--concurrency", embed_args.concurrency, "Batches in flight")
      ->check(CLI::PositiveNumber);
  embed->add_option("--retries", embed_args.retries, "Attempts per request")
      ->check(CLI::PositiveNumber);

  CmmdArgs cmmd_args;
  auto* cmmd_cmd = app.add_subcommand("cmmd", "CMMD between two embedding files");
  cmmd_cmd->add_option("--ref", cmmd_args.ref, "Reference (real) embeddings")->required();
  cmmd_cmd->add_option("--gen", cmmd_args.gen, "Generated embeddings")->required();
  cmmd_cmd->add_option("--sigma", cmmd_args.config.sigma, "RBF bandwidth");
  cmmd_cmd->add_option("--scale", cmmd_args.config.scale, "Output multiplier");
  cmmd_cmd->add_option("--estimator", cmmd_args.estimator, "biased | unbiased");
  cmmd_cmd->add_option("--block", cmmd_args.config.block, "Tile edge")->check(CLI::PositiveNumber);
  cmmd_cmd->add_option("--threads", cmmd_args.config.threads, "Worker threads (0 = all cores)");
  cmmd_cmd->add_option("--out", cmmd_args.out_path, "Also write the JSON report here");
  cmmd_args.label.add_to(cmmd_cmd);

  SegArgs seg_args;
  auto* seg = app.add_subcommand("eval-seg", "mIoU of predicted label maps");
  seg->add_option("--manifest", seg_args.manifest, "Segmentation manifest")->required();
  seg->add_option("--gt-dir", seg_args.gt_dir, "Ground-truth index PNGs")->required();
  seg->add_option("--pred-dir", seg_args.pred_dir, "Predicted index PNGs")->required();
  seg->add_option("--mapping", seg_args.mapping, "Category mapping for ground truth");
  seg->add_option("--pred-mapping", seg_args.pred_mapping,
                  "Category mapping for predictions (default: already in evaluated space)");
  seg->add_option("--ignore-index", seg_args.ignore_index, "Ignored label value")
      ->check(CLI::Range(0, 255));
  seg->add_option("--out", seg_args.out_path, "Also write the JSON report here");
  seg_args.label.add_to(seg);

  DetArgs det_args;
  auto* det = app.add_subcommand("eval-det", "mAP@50 of predicted boxes");
  det->add_option("--manifest", det_args.manifest, "Detection manifest")->required();
  det->add_option("--gt", det_args.gt, "Ground-truth boxes")->required();
  det->add_option("--pred", det_args.pred, "Predicted boxes with confidence")->required();
  det->add_option("--iou-threshold", det_args.iou_threshold, "Match threshold")
      ->check(CLI::Range(0.0, 1.0));
  det->add_option("--out", det_args.out_path, "Also write the JSON report here");
  det_args.label.add_to(det);

  ReportArgs report_args;
  auto* report = app.add_subcommand("report", "Comparison tables from metric results");
  report->add_option("--result", report_args.results, "Labelled metric result JSON")
      ->required();
  report->add_option("--run", report_args.runs, "Run manifest(s) for metadata");
  report->add_option("--out", report_args.out_path, "Write the JSON report here");
  report->add_option("--text-out", report_args.text_out, "Write the text tables here");
  report->add_flag("--json", report_args.json_stdout, "Print JSON instead of text");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitFatal;
  }

  try {
    if (show_version) {
      out << "sim2real " << kToolkitVersion << " (schema v" << kSchemaVersion << ")\n";
      return kExitOk;
    }
    if (run->parsed()) return cmd_run(run_args, out, err);
    if (embed->parsed()) return cmd_embed(embed_args, out);
    if (cmmd_cmd->parsed()) return cmd_cmmd(cmmd_args, out);
    if (seg->parsed()) return cmd_eval_seg(seg_args, out);
    if (det->parsed()) return cmd_eval_det(det_args, out, err);
    if (report->parsed()) return cmd_report(report_args, out);
    err << app.help();
    return kExitFatal;
  } catch (const Error& e) {
    err << "error: " << e.kind() << ": " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
  }
  return kExitFatal;
}

}  // namespace sim2real
