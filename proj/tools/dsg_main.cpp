// dsg: synthetic tabletop datasets with pixel-perfect keypoint and mask
// annotations. Subcommands cover the full pipeline (scene generation,
// rendering, texturing, COCO export), dataset splits, metric evaluation,
// a preview contact sheet, and the deterministic mock texturing backend.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dsg/http_backend.hpp"
#include "dsg/pipeline.hpp"

namespace {

struct ConfigOverrides {
  std::string out;
  int scenes = -1;
  int cameras = -1;
  int resolution = -1;
  int64_t seed = -1;
  std::string method;
  int concurrency = -1;
};

void add_config_options(CLI::App* cmd, std::string& config_path, ConfigOverrides& ov) {
  cmd->add_option("--config", config_path, "pipeline config JSON")->required();
  cmd->add_option("--out", ov.out, "output root (overrides config output_root)");
  cmd->add_option("--scenes", ov.scenes, "number of scenes (override)");
  cmd->add_option("--cameras", ov.cameras, "cameras per scene (override)");
  cmd->add_option("--resolution", ov.resolution, "image resolution (override)");
  cmd->add_option("--seed", ov.seed, "master seed (override)");
  cmd->add_option("--method", ov.method,
                  "texturing method: random|diff1|diff2|diff3|inpaint_baseline (override)");
  cmd->add_option("--jobs", ov.concurrency, "worker threads (override)");
}

dsg::PipelineConfig resolve_config(const std::string& path, const ConfigOverrides& ov) {
  dsg::PipelineConfig config = dsg::load_config(path);
  if (!ov.out.empty()) config.output_root = ov.out;
  if (ov.scenes >= 0) {
    config.scenes = ov.scenes;
    config.declared_images = -1;
  }
  if (ov.cameras >= 0) {
    config.cameras_per_scene = ov.cameras;
    config.declared_images = -1;
  }
  if (ov.resolution >= 0) {
    config.resolution = ov.resolution;
    config.diffusion.resolution = ov.resolution;
    config.randomization.resolution = ov.resolution;
  }
  if (ov.seed >= 0) config.master_seed = static_cast<uint64_t>(ov.seed);
  if (!ov.method.empty()) config.method = dsg::texture_method_from_name(ov.method);
  if (ov.concurrency >= 0) config.concurrency = ov.concurrency;
  config.randomization.cameras_per_scene = config.cameras_per_scene;
  if (config.output_root.empty()) dsg::fail(dsg::Errc::invalid_argument, "no output root set");
  config.validate();
  return config;
}

dsg::ClientFactory backend_factory(const std::string& backend_flag) {
  std::string backend = backend_flag;
  if (backend.empty()) {
    const char* env = std::getenv("DSG_BACKEND_URL");
    backend = env ? env : "mock";
  }
  if (backend == "mock") return dsg::mock_client_factory();
  return [backend] { return std::make_unique<dsg::HttpTexturingClient>(backend); };
}

void print_stats(const char* stage, const dsg::StageStats& s) {
  std::cout << stage << ": " << s.processed << " processed, " << s.skipped << " skipped";
  if (s.dropped) std::cout << ", " << s.dropped << " dropped";
  if (s.failed) std::cout << ", " << s.failed << " failed";
  if (s.backend_requests) std::cout << ", " << s.backend_requests << " backend requests";
  std::cout << "\n";
}

std::vector<int64_t> parse_sizes(const std::string& csv) {
  std::vector<int64_t> sizes;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) sizes.push_back(std::stoll(item));
  }
  if (sizes.empty()) dsg::fail(dsg::Errc::invalid_argument, "no split sizes given");
  return sizes;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dsg - synthetic tabletop dataset generator"};
  app.require_subcommand(1);

  std::string config_path, backend, manifest_path, gt_path, pred_path, task, sizes_csv;
  std::string root_dir, out_path = "report.json", preview_path = "preview.png", host = "0.0.0.0";
  ConfigOverrides ov;
  int port = 8080;
  int count = 16;
  int64_t split_seed = 0;
  double akd_penalty = -1.0;

  auto* gen = app.add_subcommand("gen-scenes", "compose randomized scene specs");
  add_config_options(gen, config_path, ov);

  auto* render = app.add_subcommand("render", "render depth/instance channels and annotations");
  add_config_options(render, config_path, ov);

  auto* texture = app.add_subcommand("texture", "texture rendered images");
  add_config_options(texture, config_path, ov);
  texture->add_option("--backend", backend, "mock or a backend base URL (default: $DSG_BACKEND_URL or mock)");

  auto* exp = app.add_subcommand("export", "write COCO annotations and the dataset manifest");
  add_config_options(exp, config_path, ov);

  auto* run = app.add_subcommand("run", "run all stages: scenes, render, texture, export");
  add_config_options(run, config_path, ov);
  run->add_option("--backend", backend, "mock or a backend base URL");

  auto* split = app.add_subcommand("split", "write nested dataset splits for scaling studies");
  split->add_option("--manifest", manifest_path, "dataset/manifest.jsonl path")->required();
  split->add_option("--sizes", sizes_csv, "comma-separated ascending sizes")->required();
  split->add_option("--seed", split_seed, "shuffle seed");
  split->add_option("--out", root_dir, "output directory")->required();

  auto* eval = app.add_subcommand("evaluate", "evaluate predictions against a COCO ground truth");
  eval->add_option("--task", task, "keypoints or segmentation")->required();
  eval->add_option("--gt", gt_path, "ground-truth COCO JSON")->required();
  eval->add_option("--pred", pred_path, "prediction results JSON")->required();
  eval->add_option("--out", out_path, "JSON report output path");
  eval->add_option("--missing-penalty", akd_penalty,
                   "AKD penalty for missing predictions in pixels (default: image diagonal)");

  auto* mock = app.add_subcommand("mock-server", "serve the deterministic mock texturing backend");
  mock->add_option("--port", port, "port to listen on");
  mock->add_option("--host", host, "bind address");

  auto* preview = app.add_subcommand("preview", "write a contact sheet with annotations overdrawn");
  preview->add_option("--root", root_dir, "dataset output root")->required();
  preview->add_option("--count", count, "number of tiles");
  preview->add_option("--out", preview_path, "output PNG")->capture_default_str();

  auto* demo = app.add_subcommand("demo-assets", "write sample meshes, prompts and a demo config");
  demo->add_option("--out", root_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      print_stats("gen-scenes", dsg::run_gen_scenes(resolve_config(config_path, ov)));
    } else if (render->parsed()) {
      print_stats("render", dsg::run_render(resolve_config(config_path, ov)));
    } else if (texture->parsed()) {
      print_stats("texture", dsg::run_texture(resolve_config(config_path, ov),
                                              backend_factory(backend)));
    } else if (exp->parsed()) {
      dsg::PipelineConfig config = resolve_config(config_path, ov);
      print_stats("export", dsg::run_export(config));
      std::cout << "wrote " << (config.output_root / "dataset" / "coco.json").string() << "\n";
    } else if (run->parsed()) {
      dsg::PipelineConfig config = resolve_config(config_path, ov);
      dsg::PipelineStats stats = dsg::run_pipeline(config, backend_factory(backend));
      print_stats("gen-scenes", stats.scenes);
      print_stats("render", stats.render);
      print_stats("texture", stats.texture);
      print_stats("export", stats.exported);
      std::cout << "dataset at " << config.output_root.string() << "\n";
    } else if (split->parsed()) {
      auto written = dsg::make_splits(manifest_path, parse_sizes(sizes_csv),
                                      static_cast<uint64_t>(split_seed), root_dir);
      for (const auto& p : written) std::cout << "wrote " << p.string() << "\n";
    } else if (eval->parsed()) {
      dsg::EvalReport report;
      if (task == "keypoints") {
        dsg::AkdOptions options;
        options.missing_penalty = akd_penalty;
        report = dsg::evaluate_keypoints(gt_path, pred_path, options);
      } else if (task == "segmentation") {
        report = dsg::evaluate_segmentation(gt_path, pred_path);
      } else {
        dsg::fail(dsg::Errc::invalid_argument, "task must be keypoints or segmentation");
      }
      std::cout << report.text;
      std::ofstream out(out_path);
      out << report.json.dump(2) << "\n";
      std::cout << "wrote " << out_path << "\n";
    } else if (mock->parsed()) {
      std::cout << "mock texturing backend listening on " << host << ":" << port << "\n";
      dsg::MockBackendServer server;
      server.run(port, host);
    } else if (preview->parsed()) {
      dsg::write_preview(root_dir, count, preview_path);
      std::cout << "wrote " << preview_path << "\n";
    } else if (demo->parsed()) {
      dsg::write_demo_assets(root_dir);
      std::cout << "wrote demo assets to " << root_dir << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
