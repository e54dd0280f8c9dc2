// Writes one or more JSON outputs of every kind into <out_dir> for schema
// validation. File names are <schema>__<n>.json; wire samples are prefixed
// "wire.". Everything goes through the CLI entry point and the stub backend.

#include <iostream>
#include <sstream>

#include "embedding_fixtures.hpp"
#include "json.hpp"
#include "sim2real/cli.hpp"
#include "sim2real/embedding.hpp"
#include "sim2real/image_io.hpp"
#include "sim2real/io.hpp"
#include "test_support.hpp"

using namespace sim2real;
using sim2real::testing::StubBackend;
using sim2real::testing::TempDir;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path g_out;
int g_failures = 0;

std::string cli(std::vector<std::string> args, int want_code = kExitOk) {
  args.insert(args.begin(), "sim2real");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != want_code) {
    std::cerr << "sim2real " << args[1] << " exited " << code << ": " << err.str();
    ++g_failures;
  }
  return out.str();
}

void save(const std::string& name, const std::string& text) {
  write_file_atomic(g_out / name, text);
  std::cout << "wrote " << name << "\n";
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: emit_schema_samples <out_dir>\n";
    return 1;
  }
  g_out = argv[1];
  fs::remove_all(g_out);
  fs::create_directories(g_out);
  TempDir dir;

  // Dataset manifest and a pipeline run (one failing image for the error shape).
  const fs::path manifest = sim2real::testing::write_png_dataset(dir / "data", 3);
  save("dataset_manifest__1.json", read_text_file(manifest));
  const std::string bad = sha256_hex(read_file(dir / "data" / "images" / "img_002.png"));
  {
    StubBackend stub({.fail_hashes = {bad}});
    write_file_atomic(dir / "run.toml",
                      "dataset = \"data/manifest.json\"\ncache_dir = \"cache\"\nretries = 2\n"
                      "backoff_base_ms = 1\n[[phase]]\nkind = \"diffusion_enhance\"\nendpoint = \"" +
                          stub.url() + "\"\n[[phase]]\nkind = \"im2im_translate\"\nendpoint = \"" +
                          stub.url() + "\"\ntarget_domain = \"cs\"\n");
    const std::string run_path =
        first_line(cli({"run", "--config", (dir / "run.toml").string()}, kExitPartial));
    save("run_manifest__1.json", read_text_file(run_path));
    const std::string cached =
        first_line(cli({"run", "--config", (dir / "run.toml").string()}, kExitPartial));
    save("run_manifest__2.json", read_text_file(cached));
    save("wire.enhance_request__1.json", stub.bodies("/v1/enhance").at(0));
    save("wire.translate_request__1.json", stub.bodies("/v1/translate").at(0));

    cli({"embed", "--manifest", manifest.string(), "--endpoint", stub.url(), "--out",
         (dir / "e.semb").string(), "--batch-size", "2"});
    save("wire.embed_request__1.json", stub.bodies("/v1/embed").at(0));
  }

  // CMMD, labelled and unlabelled.
  write_embeddings(sim2real::testing::gaussian_embeddings(30, 8, 1), dir / "ref.semb");
  write_embeddings(sim2real::testing::gaussian_embeddings(25, 8, 2, 0.5f), dir / "gen.semb");
  const std::string ref = (dir / "ref.semb").string(), gen = (dir / "gen.semb").string();
  save("cmmd_report__1.json", cli({"cmmd", "--ref", ref, "--gen", gen}));
  const std::vector<std::pair<std::string, std::string>> cells = {
      {"synthetic", "kitti"}, {"diffusion_only", "kitti"}, {"im2im_only", "kitti"}, {"hybrid", "kitti"}};
  std::vector<std::string> report_args = {"report"};
  int n = 2;
  for (const auto& [variant, domain] : cells) {
    const std::string name = "cmmd_report__" + std::to_string(n++) + ".json";
    cli({"cmmd", "--ref", ref, "--gen", gen, "--estimator", n % 2 ? "unbiased" : "biased",
         "--dataset", "vkitti2", "--variant", variant, "--domain", domain, "--out",
         (g_out / name).string()});
    std::cout << "wrote " << name << "\n";
    report_args.insert(report_args.end(), {"--result", (g_out / name).string()});
  }

  // Segmentation.
  json records = json::array();
  for (int i = 0; i < 2; ++i) {
    const std::string id = "s" + std::to_string(i);
    records.push_back({{"id", id}, {"path", id + ".png"}, {"width", 4}, {"height", 2}});
    write_file_atomic(dir / ("gt/" + id + ".png"), encode_index_png({4, 2, {0, 0, 1, 1, 2, 255, 0, 1}}));
    write_file_atomic(dir / ("pred/" + id + ".png"), encode_index_png({4, 2, {0, 1, 1, 1, 255, 0, 0, 1}}));
  }
  const json seg_manifest = {{"name", "segset"},
                             {"root", "."},
                             {"annotation_kind", "segmentation"},
                             {"categories", {"road", "car", "sky"}},
                             {"records", records}};
  write_file_atomic(dir / "seg.json", seg_manifest.dump(2));
  save("dataset_manifest__2.json", seg_manifest.dump(2));
  const std::string seg_out = (g_out / "seg_report__2.json").string();
  save("seg_report__1.json", cli({"eval-seg", "--manifest", (dir / "seg.json").string(), "--gt-dir",
                                  (dir / "gt").string(), "--pred-dir", (dir / "pred").string()}));
  cli({"eval-seg", "--manifest", (dir / "seg.json").string(), "--gt-dir", (dir / "gt").string(),
       "--pred-dir", (dir / "pred").string(), "--dataset", "vkitti2", "--variant", "hybrid",
       "--domain", "cs", "--out", seg_out});
  report_args.insert(report_args.end(), {"--result", seg_out});

  // Detection.
  records = json::array();
  for (int i = 0; i < 2; ++i) {
    records.push_back({{"id", "g" + std::to_string(i)}, {"path", "g.png"}, {"width", 100}, {"height", 50}});
  }
  const json det_manifest = {{"name", "detset"},
                             {"root", "."},
                             {"annotation_kind", "detection"},
                             {"categories", {"car", "person", "bus"}},
                             {"records", records}};
  write_file_atomic(dir / "det.json", det_manifest.dump(2));
  save("dataset_manifest__3.json", det_manifest.dump(2));
  write_file_atomic(dir / "gt.txt", std::string("g0 car 10 10 30 30\ng0 person 40 5 50 45\ng1 car 60 10 90 40\n"));
  write_file_atomic(dir / "pred.txt", std::string("g0 car 11 10 30 30 0.9\ng1 car 60 10 95 60 0.7\n"
                                                  "g1 person 0 0 5 5 0.2\ng1 bus 1 1 4 4 0.6\n"));
  const std::string det_out = (g_out / "det_report__2.json").string();
  save("det_report__1.json", cli({"eval-det", "--manifest", (dir / "det.json").string(), "--gt",
                                  (dir / "gt.txt").string(), "--pred", (dir / "pred.txt").string()}));
  cli({"eval-det", "--manifest", (dir / "det.json").string(), "--gt", (dir / "gt.txt").string(),
       "--pred", (dir / "pred.txt").string(), "--dataset", "gta", "--variant", "synthetic", "--out",
       det_out});
  report_args.insert(report_args.end(), {"--result", det_out});

  // Comparison report over everything labelled above.
  report_args.insert(report_args.end(), {"--run", (g_out / "run_manifest__1.json").string(), "--json"});
  save("comparison_report__1.json", cli(report_args));

  if (g_failures) {
    std::cerr << g_failures << " command(s) failed\n";
    return 1;
  }
  return 0;
}
