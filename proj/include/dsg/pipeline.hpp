#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsg/annotations.hpp"
#include "dsg/coco.hpp"
#include "dsg/core.hpp"
#include "dsg/diffusion.hpp"
#include "dsg/manifest.hpp"
#include "dsg/metrics.hpp"
#include "dsg/prompts.hpp"
#include "dsg/rasterizer.hpp"
#include "dsg/scene.hpp"
#include "dsg/texturing.hpp"

namespace dsg {

// Dataset layout under output_root:
//   config.lock.json             resolved config + hash, written by gen-scenes
//   scenes/scene_XXXXXX.json     one SceneSpec per scene
//   renders/img_XXXXXX.*.png     depth / instance (+ empty-table variants)
//   annotations/img_XXXXXX.json  keypoints, bbox (or .dropped.json marker)
//   control/img_XXXXXX.png       diffusion control image (diffusion methods)
//   images/img_XXXXXX.png        final RGB (+ .failed.json on backend failure)
//   dataset/coco.json            COCO export
//   dataset/manifest.jsonl       header + one record per kept image
//   heatmaps/                    optional Gaussian target heatmaps
//   logs/*.jsonl                 per-image wall times (excluded from the
//                                byte-reproducibility guarantee)
//   splits/split_N.json          nested scaling-study splits

enum class TextureMethod { random, diff1, diff2, diff3, inpaint_baseline };

inline const char* texture_method_name(TextureMethod m) {
  switch (m) {
    case TextureMethod::random: return "random";
    case TextureMethod::diff1: return "diff1";
    case TextureMethod::diff2: return "diff2";
    case TextureMethod::diff3: return "diff3";
    case TextureMethod::inpaint_baseline: return "inpaint_baseline";
  }
  return "?";
}

inline TextureMethod texture_method_from_name(const std::string& s) {
  if (s == "random") return TextureMethod::random;
  if (s == "diff1") return TextureMethod::diff1;
  if (s == "diff2") return TextureMethod::diff2;
  if (s == "diff3") return TextureMethod::diff3;
  if (s == "inpaint_baseline") return TextureMethod::inpaint_baseline;
  fail(Errc::parse_error, "unknown texture method '" + s + "'");
}

inline bool is_diffusion_method(TextureMethod m) { return m != TextureMethod::random; }

struct PromptConfig {
  PromptStrategy strategy = PromptStrategy::classname;
  std::filesystem::path caption_file;   // strategy == captions
  std::filesystem::path pool_file;      // strategy == llm_combined (JSON)
  std::filesystem::path objects_file;   // alternative text pool
  std::filesystem::path surfaces_file;
};

struct PipelineConfig {
  std::string category = "demo";
  std::vector<std::string> keypoint_names;  // empty -> built-in schema for category
  std::filesystem::path mesh_dir;
  std::filesystem::path texture_dir;        // empty -> procedural textures only
  int scenes = 2500;
  int cameras_per_scene = 2;
  int declared_images = -1;                 // optional, validated against scenes*cameras
  int resolution = 512;
  uint64_t master_seed = 0;
  std::filesystem::path output_root;
  TextureMethod method = TextureMethod::random;
  DiffusionParams diffusion;
  StageOptions stages;
  PromptConfig prompt;
  ProceduralTextureParams procedural;
  int concurrency = 4;
  SceneRandomizationConfig randomization;
  bool emit_heatmaps = false;
  double heatmap_sigma = 8.0;

  int64_t images() const { return static_cast<int64_t>(scenes) * cameras_per_scene; }

  std::vector<std::string> schema() const {
    std::vector<std::string> names =
        keypoint_names.empty() ? category_keypoint_names(category) : keypoint_names;
    if (names.empty())
      fail(Errc::schema_error, "no keypoint schema for category '" + category +
                                   "'; set keypoint_names in the config");
    return names;
  }

  void validate() const {
    if (scenes < 1) fail(Errc::invalid_argument, "scenes must be >= 1");
    if (cameras_per_scene < 1) fail(Errc::invalid_argument, "cameras_per_scene must be >= 1");
    if (declared_images >= 0 && declared_images != images())
      fail(Errc::invalid_argument, "images must equal scenes * cameras_per_scene");
    if (resolution < 8) fail(Errc::invalid_argument, "resolution too small");
    if (category.empty()) fail(Errc::invalid_argument, "category must be set");
    if (concurrency < 1) fail(Errc::invalid_argument, "concurrency must be >= 1");
    diffusion.validate();
    if (diffusion.resolution != resolution)
      fail(Errc::invalid_argument, "diffusion resolution must match the render resolution");
    if (!procedural.cell_range.valid() || procedural.cell_range.min <= 0 ||
        !procedural.scale_range.valid() || procedural.scale_range.min <= 0)
      fail(Errc::invalid_argument, "procedural texture ranges must be positive with min <= max");
    if (is_diffusion_method(method)) {
      switch (prompt.strategy) {
        case PromptStrategy::classname:
          break;
        case PromptStrategy::captions:
          if (prompt.caption_file.empty())
            fail(Errc::invalid_argument, "captions strategy needs prompt.caption_file");
          break;
        case PromptStrategy::llm_combined:
          if (prompt.pool_file.empty() &&
              (prompt.objects_file.empty() || prompt.surfaces_file.empty()))
            fail(Errc::invalid_argument,
                 "llm_combined strategy needs prompt.pool_file or objects/surfaces files");
          break;
      }
    }
    SceneRandomizationConfig rand_check = randomization;
    rand_check.cameras_per_scene = cameras_per_scene;
    rand_check.resolution = resolution;
    rand_check.validate();
    schema();  // throws on missing schema
  }
};

inline nlohmann::json to_json(const PipelineConfig& c) {
  return {{"version", 1},
          {"category", c.category},
          {"keypoint_names", c.keypoint_names},
          {"mesh_dir", c.mesh_dir.string()},
          {"texture_dir", c.texture_dir.string()},
          {"counts",
           {{"scenes", c.scenes}, {"cameras_per_scene", c.cameras_per_scene}, {"images", c.images()}}},
          {"resolution", c.resolution},
          {"master_seed", c.master_seed},
          {"output_root", c.output_root.string()},
          {"texturing",
           {{"method", texture_method_name(c.method)},
            {"params",
             {{"conditioning_scale", c.diffusion.conditioning_scale},
              {"steps", c.diffusion.steps},
              {"guidance", c.diffusion.guidance}}},
            {"pad", c.stages.pad},
            {"dilation", c.stages.dilation},
            {"procedural",
             {{"cell_range", {c.procedural.cell_range.min, c.procedural.cell_range.max}},
              {"scale_range", {c.procedural.scale_range.min, c.procedural.scale_range.max}}}},
            {"prompt",
             {{"strategy", prompt_strategy_name(c.prompt.strategy)},
              {"caption_file", c.prompt.caption_file.string()},
              {"pool_file", c.prompt.pool_file.string()},
              {"objects_file", c.prompt.objects_file.string()},
              {"surfaces_file", c.prompt.surfaces_file.string()}}},
            {"concurrency", c.concurrency}}},
          {"randomization",
           {{"table_width_range", {c.randomization.table_width_range.min, c.randomization.table_width_range.max}},
            {"table_depth_range", {c.randomization.table_depth_range.min, c.randomization.table_depth_range.max}},
            {"table_yaw_range", {c.randomization.table_yaw_range.min, c.randomization.table_yaw_range.max}},
            {"object_yaw_range", {c.randomization.object_yaw_range.min, c.randomization.object_yaw_range.max}},
            {"object_xy_jitter", c.randomization.object_xy_jitter},
            {"camera_radius_range", {c.randomization.camera_radius_range.min, c.randomization.camera_radius_range.max}},
            {"camera_elevation_range", {c.randomization.camera_elevation_range.min, c.randomization.camera_elevation_range.max}},
            {"focal_px", c.randomization.focal_px},
            {"lookat_jitter", c.randomization.lookat_jitter}}},
          {"heatmaps", c.emit_heatmaps},
          {"heatmap_sigma", c.heatmap_sigma}};
}

inline PipelineConfig config_from_json(const nlohmann::json& j,
                                       const std::filesystem::path& base_dir = {}) {
  if (j.value("version", 0) != 1) fail(Errc::schema_error, "unsupported config schema version");
  PipelineConfig c;
  auto resolve = [&base_dir](const std::string& p) -> std::filesystem::path {
    if (p.empty()) return {};
    std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };
  c.category = j.value("category", c.category);
  if (j.contains("keypoint_names"))
    for (const auto& n : j.at("keypoint_names")) c.keypoint_names.push_back(n.get<std::string>());
  c.mesh_dir = resolve(j.value("mesh_dir", ""));
  c.texture_dir = resolve(j.value("texture_dir", ""));
  if (j.contains("counts")) {
    const auto& counts = j.at("counts");
    c.scenes = counts.value("scenes", c.scenes);
    c.cameras_per_scene = counts.value("cameras_per_scene", c.cameras_per_scene);
    if (counts.contains("images")) c.declared_images = counts.at("images").get<int>();
  }
  c.resolution = j.value("resolution", c.resolution);
  c.master_seed = j.value("master_seed", c.master_seed);
  if (j.contains("output_root")) c.output_root = resolve(j.at("output_root").get<std::string>());
  if (j.contains("texturing")) {
    const auto& t = j.at("texturing");
    c.method = texture_method_from_name(t.value("method", "random"));
    if (t.contains("params")) {
      const auto& p = t.at("params");
      c.diffusion.conditioning_scale = p.value("conditioning_scale", c.diffusion.conditioning_scale);
      c.diffusion.steps = p.value("steps", c.diffusion.steps);
      c.diffusion.guidance = p.value("guidance", c.diffusion.guidance);
    }
    c.stages.pad = t.value("pad", c.stages.pad);
    c.stages.dilation = t.value("dilation", c.stages.dilation);
    if (t.contains("procedural")) {
      const auto& p = t.at("procedural");
      if (p.contains("cell_range"))
        c.procedural.cell_range = {p.at("cell_range").at(0).get<double>(),
                                   p.at("cell_range").at(1).get<double>()};
      if (p.contains("scale_range"))
        c.procedural.scale_range = {p.at("scale_range").at(0).get<double>(),
                                    p.at("scale_range").at(1).get<double>()};
    }
    if (t.contains("prompt")) {
      const auto& p = t.at("prompt");
      c.prompt.strategy = prompt_strategy_from_name(p.value("strategy", "classname"));
      c.prompt.caption_file = resolve(p.value("caption_file", ""));
      c.prompt.pool_file = resolve(p.value("pool_file", ""));
      c.prompt.objects_file = resolve(p.value("objects_file", ""));
      c.prompt.surfaces_file = resolve(p.value("surfaces_file", ""));
    }
    c.concurrency = t.value("concurrency", c.concurrency);
  }
  if (j.contains("randomization")) {
    const auto& r = j.at("randomization");
    auto interval = [&r](const char* key, Interval fallback) {
      if (!r.contains(key)) return fallback;
      return Interval{r.at(key).at(0).get<double>(), r.at(key).at(1).get<double>()};
    };
    c.randomization.table_width_range = interval("table_width_range", c.randomization.table_width_range);
    c.randomization.table_depth_range = interval("table_depth_range", c.randomization.table_depth_range);
    c.randomization.table_yaw_range = interval("table_yaw_range", c.randomization.table_yaw_range);
    c.randomization.object_yaw_range = interval("object_yaw_range", c.randomization.object_yaw_range);
    c.randomization.object_xy_jitter = r.value("object_xy_jitter", c.randomization.object_xy_jitter);
    c.randomization.camera_radius_range =
        interval("camera_radius_range", c.randomization.camera_radius_range);
    c.randomization.camera_elevation_range =
        interval("camera_elevation_range", c.randomization.camera_elevation_range);
    c.randomization.focal_px = r.value("focal_px", c.randomization.focal_px);
    c.randomization.lookat_jitter = r.value("lookat_jitter", c.randomization.lookat_jitter);
  }
  c.emit_heatmaps = j.value("heatmaps", c.emit_heatmaps);
  c.heatmap_sigma = j.value("heatmap_sigma", c.heatmap_sigma);
  // Keep the derived scene-randomization fields in sync.
  c.randomization.cameras_per_scene = c.cameras_per_scene;
  c.randomization.resolution = c.resolution;
  c.diffusion.resolution = c.resolution;
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot read config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_error, path.string() + ": " + e.what());
  }
  return config_from_json(j, std::filesystem::absolute(path).parent_path());
}

// Identifies the generation parameters; where the dataset lands is excluded,
// so the same config written to two roots produces identical manifests.
inline std::string config_hash(const PipelineConfig& c) {
  nlohmann::json j = to_json(c);
  j.erase("output_root");
  uint64_t h = fnv1a64(j.dump());
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

// --- layout helpers ---

namespace paths {

inline std::string image_name(int64_t image_id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "img_%06lld", static_cast<long long>(image_id));
  return buf;
}
inline std::string scene_name(int64_t scene_id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%06lld", static_cast<long long>(scene_id));
  return buf;
}

}  // namespace paths

namespace detail {

// fn(index, worker): worker in [0, workers) identifies the executing lane,
// for per-worker state such as backend clients.
inline void parallel_for(size_t n, int workers, const std::function<void(size_t, int)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i, 0);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i, w);
      } catch (...) {
        errors[w] = std::current_exception();
        next.store(n);
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct StageTimer {
  std::vector<std::pair<int64_t, double>> entries;  // image_id, milliseconds
  std::mutex mutex;

  void add(int64_t image_id, double ms) {
    std::lock_guard<std::mutex> lock(mutex);
    entries.emplace_back(image_id, ms);
  }
  void write(const std::filesystem::path& path, const std::string& stage) {
    std::sort(entries.begin(), entries.end());
    std::ofstream out(path);
    for (const auto& [id, ms] : entries)
      out << nlohmann::json{{"image_id", id}, {"stage", stage}, {"ms", ms}}.dump() << "\n";
  }
};

inline void write_config_lock(const PipelineConfig& config) {
  nlohmann::json lock{{"config", to_json(config)}, {"hash", config_hash(config)}};
  std::ofstream out(config.output_root / "config.lock.json");
  out << lock.dump(2) << "\n";
}

inline void check_config_lock(const PipelineConfig& config) {
  auto path = config.output_root / "config.lock.json";
  if (!std::filesystem::exists(path)) {
    write_config_lock(config);
    return;
  }
  std::ifstream in(path);
  nlohmann::json j;
  in >> j;
  if (j.value("hash", "") != config_hash(config))
    fail(Errc::invalid_argument,
         "output root was produced by a different config (hash mismatch); use a fresh directory");
}

}  // namespace detail

// --- pipeline stages ---

struct StageStats {
  size_t processed = 0;  // produced in this run
  size_t skipped = 0;    // already present (resume)
  size_t dropped = 0;    // object not visible
  size_t failed = 0;     // texturing failures recorded in the manifest
  size_t backend_requests = 0;
};

inline StageStats run_gen_scenes(const PipelineConfig& config) {
  config.validate();
  std::filesystem::create_directories(config.output_root / "scenes");
  detail::check_config_lock(config);

  MeshCatalog catalog = load_mesh_catalog(config.mesh_dir);
  SceneRandomizationConfig rand_config = config.randomization;
  rand_config.cameras_per_scene = config.cameras_per_scene;
  rand_config.resolution = config.resolution;

  StageStats stats;
  std::atomic<size_t> made{0}, skipped{0};
  detail::parallel_for(static_cast<size_t>(config.scenes), config.concurrency, [&](size_t i, int) {
    auto path = config.output_root / "scenes" / (paths::scene_name(i) + ".json");
    if (std::filesystem::exists(path)) {
      ++skipped;
      return;
    }
    SceneSpec spec = compose_scene(static_cast<int64_t>(i), catalog, rand_config, config.master_seed);
    auto problems = validate_scene(spec, catalog, config.cameras_per_scene);
    if (!problems.empty())
      fail(Errc::invalid_argument, "scene " + std::to_string(i) + " invalid: " + problems.front());
    save_scene(spec, path);
    ++made;
  });
  stats.processed = made;
  stats.skipped = skipped;
  return stats;
}

inline StageStats run_render(const PipelineConfig& config) {
  config.validate();
  detail::check_config_lock(config);
  std::filesystem::create_directories(config.output_root / "renders");
  std::filesystem::create_directories(config.output_root / "annotations");
  std::filesystem::create_directories(config.output_root / "logs");

  MeshCatalog catalog = load_mesh_catalog(config.mesh_dir);
  StageStats stats;
  std::atomic<size_t> made{0}, skipped{0}, dropped{0};
  detail::StageTimer timer;

  detail::parallel_for(static_cast<size_t>(config.scenes), config.concurrency, [&](size_t s, int) {
    SceneSpec scene = load_scene(config.output_root / "scenes" / (paths::scene_name(s) + ".json"));
    const Mesh& object = catalog.by_ref(scene.object_ref);
    for (int c = 0; c < static_cast<int>(scene.cameras.size()); ++c) {
      int64_t image_id = static_cast<int64_t>(s) * config.cameras_per_scene + c;
      std::string name = paths::image_name(image_id);
      auto depth_path = config.output_root / "renders" / (name + ".depth.png");
      auto ann_path = config.output_root / "annotations" / (name + ".json");
      auto drop_path = config.output_root / "annotations" / (name + ".dropped.json");
      if (std::filesystem::exists(depth_path) &&
          (std::filesystem::exists(ann_path) || std::filesystem::exists(drop_path))) {
        ++skipped;
        continue;
      }
      auto t0 = std::chrono::steady_clock::now();
      Framebuffer fb = rasterize(scene, scene.cameras[c], catalog, false);
      Framebuffer fb_empty = render_depth_without_object(scene, scene.cameras[c], catalog);

      write_png16(depth_to_png16(fb), depth_path);
      write_png(instance_to_png(fb), config.output_root / "renders" / (name + ".instance.png"));
      write_png16(depth_to_png16(fb_empty),
                  config.output_root / "renders" / (name + ".empty_depth.png"));
      write_png(instance_to_png(fb_empty),
                config.output_root / "renders" / (name + ".empty_instance.png"));

      try {
        ImageAnnotation ann =
            annotate_image(scene, scene.cameras[c], fb, object, config.category, image_id, c);
        std::ofstream out(ann_path);
        out << to_json(ann).dump(2) << "\n";
      } catch (const Error& e) {
        if (e.code() != Errc::object_not_visible) throw;
        std::ofstream out(drop_path);
        out << nlohmann::json{{"image_id", image_id}, {"reason", "object not visible"}}.dump()
            << "\n";
        ++dropped;
      }
      timer.add(image_id, std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - t0).count());
      ++made;
    }
  });
  timer.write(config.output_root / "logs" / "render_timings.jsonl", "render");
  stats.processed = made;
  stats.skipped = skipped;
  stats.dropped = dropped;
  return stats;
}

using ClientFactory = std::function<std::unique_ptr<TexturingClient>()>;

inline ClientFactory mock_client_factory() {
  return [] { return std::make_unique<MockTexturingClient>(/*record_requests=*/false); };
}

// Prompts are pre-assigned per image id so neither worker count nor
// completion order can influence any output.
inline std::vector<PromptSpec> assign_prompts(const PipelineConfig& config) {
  size_t n = static_cast<size_t>(config.images());
  switch (config.prompt.strategy) {
    case PromptStrategy::classname: {
      std::vector<PromptSpec> prompts(n, classname_prompt(config.category));
      return prompts;
    }
    case PromptStrategy::captions:
      return sample_caption_prompts(config.prompt.caption_file, n, config.master_seed);
    case PromptStrategy::llm_combined: {
      DescriptionPool pool = !config.prompt.pool_file.empty()
                                 ? DescriptionPool::load_json(config.prompt.pool_file)
                                 : DescriptionPool::load_text(config.prompt.objects_file,
                                                              config.prompt.surfaces_file);
      return combine_descriptions(pool, n, config.master_seed);
    }
  }
  fail(Errc::invalid_argument, "unreachable prompt strategy");
}

inline StageStats run_texture(const PipelineConfig& config, const ClientFactory& client_factory) {
  config.validate();
  detail::check_config_lock(config);
  std::filesystem::create_directories(config.output_root / "images");
  std::filesystem::create_directories(config.output_root / "logs");
  const bool diffusion = is_diffusion_method(config.method);
  if (diffusion) std::filesystem::create_directories(config.output_root / "control");

  MeshCatalog catalog;
  TextureLibrary texture_lib;
  if (config.method == TextureMethod::random) {
    catalog = load_mesh_catalog(config.mesh_dir);
    texture_lib = TextureLibrary::load(config.texture_dir);
    texture_lib.procedural_params = config.procedural;
  }
  std::vector<PromptSpec> prompts;
  if (diffusion) prompts = assign_prompts(config);

  // Scene specs indexed by scene id (random shading needs poses and seeds;
  // diffusion methods work from the serialized renders alone).
  std::vector<SceneSpec> scenes(static_cast<size_t>(config.scenes));
  for (int s = 0; s < config.scenes; ++s)
    scenes[s] = load_scene(config.output_root / "scenes" / (paths::scene_name(s) + ".json"));

  StageStats stats;
  std::atomic<size_t> made{0}, skipped{0}, failed{0}, requests{0}, dropped{0};
  detail::StageTimer timer;
  size_t n = static_cast<size_t>(config.images());

  std::vector<std::unique_ptr<TexturingClient>> clients(static_cast<size_t>(config.concurrency));
  detail::parallel_for(n, config.concurrency, [&](size_t i, int worker) {
    std::unique_ptr<TexturingClient>& client = clients[worker];
    int64_t image_id = static_cast<int64_t>(i);
    int64_t scene_id = image_id / config.cameras_per_scene;
    int cam_index = static_cast<int>(image_id % config.cameras_per_scene);
    std::string name = paths::image_name(image_id);
    auto rgb_path = config.output_root / "images" / (name + ".png");
    auto failed_path = config.output_root / "images" / (name + ".failed.json");
    auto drop_path = config.output_root / "annotations" / (name + ".dropped.json");
    if (std::filesystem::exists(drop_path)) {
      ++dropped;
      return;
    }
    if (std::filesystem::exists(rgb_path)) {
      ++skipped;
      return;
    }

    const SceneSpec& scene = scenes[scene_id];
    auto t0 = std::chrono::steady_clock::now();

    try {
      if (config.method == TextureMethod::random) {
        Framebuffer fb = rasterize(scene, scene.cameras[cam_index], catalog, true);
        TextureAssignment assignment = assign_random_textures(scene, texture_lib, config.master_seed);
        SceneAppearance appearance = make_scene_appearance(scene, catalog, texture_lib, assignment);
        shade_framebuffer(fb, scene.cameras[cam_index], appearance);
        write_png(fb.rgb, rgb_path);
      } else {
        if (!client) client = client_factory();
        Framebuffer fb = framebuffer_from_pngs(
            read_png16(config.output_root / "renders" / (name + ".depth.png")),
            read_image_u8(config.output_root / "renders" / (name + ".instance.png")));
        DiffusionParams params = config.diffusion;
        params.resolution = config.resolution;
        params.seed = mix_u64(mix_u64(config.master_seed, static_cast<uint64_t>(image_id)),
                              static_cast<uint64_t>(Stream::diffusion));
        const PromptSpec& prompt = prompts[i];

        write_png(depth_to_control_image(fb).image, config.output_root / "control" / (name + ".png"));

        size_t calls_before = client->call_log().size();
        ImageU8 rgb;
        switch (config.method) {
          case TextureMethod::diff1:
            rgb = texture_one_stage(fb, prompt, params, *client);
            break;
          case TextureMethod::diff2:
            rgb = texture_two_stage(fb, prompt, params, *client, config.stages);
            break;
          case TextureMethod::diff3: {
            Framebuffer fb_empty = framebuffer_from_pngs(
                read_png16(config.output_root / "renders" / (name + ".empty_depth.png")),
                read_image_u8(config.output_root / "renders" / (name + ".empty_instance.png")));
            rgb = texture_three_stage(fb, fb_empty, prompt, params, *client, config.stages);
            break;
          }
          case TextureMethod::inpaint_baseline:
            rgb = texture_inpainting_baseline(fb, prompt, params, *client);
            break;
          case TextureMethod::random:
            break;  // handled above
        }
        requests += client->call_log().size() - calls_before;
        write_png(rgb, rgb_path);
        std::filesystem::remove(failed_path);  // a later success clears the marker
      }
      ++made;
    } catch (const Error& e) {
      if (e.code() != Errc::backend_error) throw;
      std::ofstream out(failed_path);
      out << nlohmann::json{{"image_id", image_id}, {"error", e.what()}}.dump() << "\n";
      ++failed;
    }
    timer.add(image_id, std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - t0).count());
  });

  timer.write(config.output_root / "logs" / "texture_timings.jsonl", "texture");
  stats.processed = made;
  stats.skipped = skipped;
  stats.failed = failed;
  stats.dropped = dropped;
  stats.backend_requests = requests;
  return stats;
}

inline StageStats run_export(const PipelineConfig& config) {
  config.validate();
  detail::check_config_lock(config);
  std::filesystem::create_directories(config.output_root / "dataset");
  if (config.emit_heatmaps) std::filesystem::create_directories(config.output_root / "heatmaps");

  const std::vector<std::string> schema = config.schema();
  DatasetManifest manifest;
  manifest.header.generator = std::string("dsg ") + kVersion;
  manifest.header.config_hash = config_hash(config);
  manifest.header.images = config.images();

  std::vector<PromptSpec> prompts;
  if (is_diffusion_method(config.method)) prompts = assign_prompts(config);

  std::vector<CocoExportRecord> records;
  StageStats stats;
  for (int64_t image_id = 0; image_id < config.images(); ++image_id) {
    std::string name = paths::image_name(image_id);
    auto ann_path = config.output_root / "annotations" / (name + ".json");
    auto drop_path = config.output_root / "annotations" / (name + ".dropped.json");
    if (std::filesystem::exists(drop_path)) {
      manifest.header.dropped_image_ids.push_back(image_id);
      ++stats.dropped;
      continue;
    }
    if (!std::filesystem::exists(ann_path))
      fail(Errc::io_error, "missing annotation for " + name + "; run the render stage first");

    std::ifstream ann_in(ann_path);
    nlohmann::json ann_json;
    ann_in >> ann_json;
    ImageAnnotation ann = annotation_from_json(ann_json);

    ImageU8 instance = read_image_u8(config.output_root / "renders" / (name + ".instance.png"));
    ImageU8 object_mask(instance.width, instance.height, 1);
    for (size_t k = 0; k < instance.data.size(); ++k)
      object_mask.data[k] = instance.data[k] == kObjectId ? 255 : 0;

    ManifestRecord rec;
    rec.image_id = image_id;
    rec.scene_id = ann.scene_id;
    rec.camera_index = ann.camera_index;
    rec.texture_method = texture_method_name(config.method);
    rec.prompt = is_diffusion_method(config.method) ? prompts[image_id].combined : "";
    rec.seed = mix_u64(mix_u64(config.master_seed, static_cast<uint64_t>(image_id)),
                       static_cast<uint64_t>(Stream::diffusion));
    rec.paths["depth"] = "renders/" + name + ".depth.png";
    rec.paths["mask"] = "renders/" + name + ".instance.png";
    if (is_diffusion_method(config.method)) rec.paths["control"] = "control/" + name + ".png";

    auto rgb_path = config.output_root / "images" / (name + ".png");
    auto failed_path = config.output_root / "images" / (name + ".failed.json");
    if (std::filesystem::exists(rgb_path)) {
      rec.paths["rgb"] = "images/" + name + ".png";
      rec.status = "ok";
    } else if (std::filesystem::exists(failed_path)) {
      std::ifstream fin(failed_path);
      nlohmann::json fj;
      fin >> fj;
      rec.status = "failed";
      rec.error = fj.value("error", "texturing failed");
      ++stats.failed;
    } else {
      fail(Errc::io_error, "missing image for " + name + "; run the texture stage first");
    }
    manifest.records.push_back(rec);

    CocoExportRecord coco_rec;
    coco_rec.image_id = image_id;
    coco_rec.file_name = "images/" + name + ".png";
    coco_rec.width = instance.width;
    coco_rec.height = instance.height;
    coco_rec.annotation = ann;
    coco_rec.object_mask = std::move(object_mask);
    records.push_back(std::move(coco_rec));

    if (config.emit_heatmaps) {
      HeatmapConfig hm{config.heatmap_sigma, config.resolution};
      auto channels = generate_heatmaps(ann.keypoints, schema, hm);
      for (size_t ci = 0; ci < channels.size(); ++ci) {
        ImageU8 png(channels[ci].width, channels[ci].height, 1);
        for (size_t k = 0; k < png.data.size(); ++k)
          png.data[k] = to_u8(channels[ci].data[k] * 255.0);
        write_png(png, config.output_root / "heatmaps" / (name + "_" + schema[ci] + ".png"));
      }
    }
    ++stats.processed;
  }

  manifest.header.dropped = static_cast<int64_t>(manifest.header.dropped_image_ids.size());
  manifest.header.records = static_cast<int64_t>(manifest.records.size());
  write_manifest(manifest, config.output_root / "dataset" / "manifest.jsonl");
  export_coco(records, config.category, schema, config.output_root / "dataset" / "coco.json");
  return stats;
}

struct PipelineStats {
  StageStats scenes, render, texture, exported;
};

// Scenes -> render -> texture -> export. Rerunning skips completed images,
// so an interrupted run resumes to an identical dataset.
inline PipelineStats run_pipeline(const PipelineConfig& config, const ClientFactory& factory) {
  PipelineStats stats;
  stats.scenes = run_gen_scenes(config);
  stats.render = run_render(config);
  stats.texture = run_texture(config, factory);
  stats.exported = run_export(config);
  return stats;
}

// --- dataset splits (scaling study) ---

// Nested, seed-deterministic splits: one shuffled order, prefix per size, so
// every smaller split is a subset of every larger one.
inline std::vector<std::filesystem::path> make_splits(const std::filesystem::path& manifest_path,
                                                      std::vector<int64_t> sizes, uint64_t seed,
                                                      const std::filesystem::path& out_dir) {
  for (size_t i = 1; i < sizes.size(); ++i)
    if (sizes[i] <= sizes[i - 1]) fail(Errc::invalid_argument, "split sizes must be ascending");
  DatasetManifest manifest = read_manifest(manifest_path);
  std::vector<int64_t> ids;
  for (const auto& r : manifest.records)
    if (r.status == "ok") ids.push_back(r.image_id);
  if (!sizes.empty() && sizes.back() > static_cast<int64_t>(ids.size()))
    fail(Errc::size_exceeds_dataset,
         "largest split (" + std::to_string(sizes.back()) + ") exceeds usable dataset size (" +
             std::to_string(ids.size()) + ")");

  Rng rng = Rng::from_stream(seed, 0, Stream::split);
  for (size_t i = ids.size(); i > 1; --i) {
    size_t j = rng.uniform_index(i);
    std::swap(ids[i - 1], ids[j]);
  }

  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  for (int64_t size : sizes) {
    std::vector<int64_t> split(ids.begin(), ids.begin() + size);
    std::sort(split.begin(), split.end());
    nlohmann::json j{{"version", 1}, {"seed", seed}, {"size", size}, {"image_ids", split}};
    auto path = out_dir / ("split_" + std::to_string(size) + ".json");
    std::ofstream out(path);
    out << j.dump() << "\n";
    written.push_back(path);
  }
  return written;
}

// --- evaluation reports ---

struct EvalReport {
  nlohmann::json json;
  std::string text;
};

inline EvalReport evaluate_keypoints(const std::filesystem::path& gt_path,
                                     const std::filesystem::path& pred_path,
                                     const AkdOptions& options = {}) {
  CocoDataset gt = parse_coco(gt_path);
  auto preds = parse_keypoint_results(pred_path);
  AkdReport report = akd(gt, preds, options);

  EvalReport out;
  out.json = {{"task", "keypoints"},
              {"akd_px", report.mean_px},
              {"per_channel", report.per_channel},
              {"pairs", report.pairs},
              {"missing_predictions", report.missing}};
  std::ostringstream os;
  os << "metric                          value\n";
  os << "------------------------------  ----------\n";
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%-30s  %10.3f\n", "AKD (px)", report.mean_px);
  os << buf;
  for (const auto& [name, value] : report.per_channel) {
    std::snprintf(buf, sizeof(buf), "  %-28s  %10.3f\n", name.c_str(), value);
    os << buf;
  }
  std::snprintf(buf, sizeof(buf), "%-30s  %10zu\n", "evaluated pairs", report.pairs);
  os << buf;
  std::snprintf(buf, sizeof(buf), "%-30s  %10zu\n", "missing predictions", report.missing);
  os << buf;
  out.text = os.str();
  return out;
}

inline EvalReport evaluate_segmentation(const std::filesystem::path& gt_path,
                                        const std::filesystem::path& pred_path) {
  CocoDataset gt = parse_coco(gt_path);
  auto dets = parse_segmentation_results(pred_path);
  MapReport report = coco_map(gt, dets);

  EvalReport out;
  nlohmann::json per_threshold = nlohmann::json::object();
  for (size_t i = 0; i < report.thresholds.size(); ++i) {
    char key[16];
    std::snprintf(key, sizeof(key), "AP@%.2f", report.thresholds[i]);
    per_threshold[key] = report.ap[i];
  }
  out.json = {{"task", "segmentation"}, {"map", report.map}, {"per_threshold", per_threshold}};
  std::ostringstream os;
  os << "metric                          value\n";
  os << "------------------------------  ----------\n";
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%-30s  %10.4f\n", "mAP@[0.50:0.95]", report.map);
  os << buf;
  for (size_t i = 0; i < report.thresholds.size(); ++i) {
    char label[32];
    std::snprintf(label, sizeof(label), "AP@%.2f", report.thresholds[i]);
    std::snprintf(buf, sizeof(buf), "  %-28s  %10.4f\n", label, report.ap[i]);
    os << buf;
  }
  out.text = os.str();
  return out;
}

// --- preview contact sheet ---

// Tiles up to `count` finished images with the object-mask outline and the
// keypoints drawn on top (visible filled, occluded hollow).
inline void write_preview(const std::filesystem::path& output_root, int count,
                          const std::filesystem::path& out_png) {
  DatasetManifest manifest = read_manifest(output_root / "dataset" / "manifest.jsonl");
  std::vector<const ManifestRecord*> ok;
  for (const auto& r : manifest.records)
    if (r.status == "ok") ok.push_back(&r);
  if (ok.empty()) fail(Errc::io_error, "no finished images to preview");
  count = std::min<int>(count, static_cast<int>(ok.size()));

  int grid = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(count))));
  int tile = 0;
  ImageU8 sheet;
  for (int k = 0; k < count; ++k) {
    const ManifestRecord& rec = *ok[k];
    ImageU8 rgb = read_image_u8(output_root / rec.paths.at("rgb"));
    ImageU8 instance = read_image_u8(output_root / rec.paths.at("mask"));
    if (tile == 0) {
      tile = rgb.width;
      sheet = ImageU8(grid * tile, grid * tile, 3);
    }

    // Object mask outline in red.
    for (int y = 0; y < rgb.height; ++y)
      for (int x = 0; x < rgb.width; ++x) {
        if (instance.at(x, y) != kObjectId) continue;
        bool boundary = x == 0 || y == 0 || x == rgb.width - 1 || y == rgb.height - 1 ||
                        instance.at(x - 1, y) != kObjectId || instance.at(x + 1, y) != kObjectId ||
                        instance.at(x, y - 1) != kObjectId || instance.at(x, y + 1) != kObjectId;
        if (boundary) {
          rgb.at(x, y, 0) = 255;
          rgb.at(x, y, 1) = 32;
          rgb.at(x, y, 2) = 32;
        }
      }

    // Keypoint crosses.
    std::string name = paths::image_name(rec.image_id);
    std::ifstream ann_in(output_root / "annotations" / (name + ".json"));
    if (ann_in) {
      nlohmann::json aj;
      ann_in >> aj;
      ImageAnnotation ann = annotation_from_json(aj);
      for (const auto& kp : ann.keypoints) {
        if (kp.state == KeypointState::outside) continue;
        int cx = static_cast<int>(std::lround(kp.pixel.x));
        int cy = static_cast<int>(std::lround(kp.pixel.y));
        bool visible = kp.state == KeypointState::visible;
        for (int d = -3; d <= 3; ++d) {
          auto mark = [&](int x, int y) {
            if (x < 0 || x >= rgb.width || y < 0 || y >= rgb.height) return;
            rgb.at(x, y, 0) = visible ? 32 : 255;
            rgb.at(x, y, 1) = visible ? 255 : 160;
            rgb.at(x, y, 2) = 32;
          };
          mark(cx + d, cy);
          mark(cx, cy + d);
        }
      }
    }
    blit(sheet, rgb, (k % grid) * tile, (k / grid) * tile);
  }
  write_png(sheet, out_png);
}

// --- demo assets (offline quickstart) ---

// Writes three convex meshes with surface keypoints, prompt sources, and a
// small ready-to-run config.
inline void write_demo_assets(const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir / "meshes");
  std::filesystem::create_directories(out_dir / "prompts");

  Mesh box = make_box(0.12, 0.08, 0.1);
  box.keypoints3d["top"] = {0, 0, 0.05};
  box.keypoints3d["base"] = {0.06, 0.04, -0.05};
  box.keypoints3d["side"] = {0.06, 0.0, 0.0};
  save_mesh_obj(box, out_dir / "meshes" / "box.obj");

  Mesh prism = make_prism(8, 0.05, 0.15);
  prism.keypoints3d["top"] = {0, 0, 0.075};
  prism.keypoints3d["base"] = {0.05, 0.0, -0.075};
  prism.keypoints3d["side"] = {0.05, 0.0, 0.0};
  save_mesh_obj(prism, out_dir / "meshes" / "prism.obj");

  Mesh ball = make_uv_sphere(0.06, 12, 16);
  ball.keypoints3d["top"] = {0, 0, 0.06};
  ball.keypoints3d["base"] = {0.06 * std::sin(kPi / 12.0), 0.0, -0.06 * std::cos(kPi / 12.0)};
  ball.keypoints3d["side"] = {0.06, 0.0, 0.0};
  save_mesh_obj(ball, out_dir / "meshes" / "ball.obj");

  std::ofstream(out_dir / "prompts" / "pool.json") << nlohmann::json{
      {"objects",
       {"a glossy red ceramic object", "a matte blue plastic object",
        "a weathered wooden object with visible grain", "a brushed steel object"}},
      {"surfaces",
       {"a rustic oak table", "a white marble countertop", "a dark slate surface",
        "a bamboo desk with fine stripes"}}}.dump(2)
                                             << "\n";
  std::ofstream(out_dir / "prompts" / "captions.txt")
      << "a small object on a wooden desk\n"
         "a product photo on a bright table\n"
         "an object resting on a kitchen counter\n";

  nlohmann::json config{
      {"version", 1},
      {"category", "demo"},
      {"keypoint_names", {"top", "base", "side"}},
      {"mesh_dir", "meshes"},
      {"texture_dir", ""},
      {"counts", {{"scenes", 10}, {"cameras_per_scene", 2}, {"images", 20}}},
      {"resolution", 256},
      {"master_seed", 20240607},
      {"output_root", "out"},
      {"texturing",
       {{"method", "diff1"},
        {"params", {{"conditioning_scale", 1.5}, {"steps", 30}, {"guidance", 7.5}}},
        {"pad", 16},
        {"dilation", 8},
        {"prompt", {{"strategy", "llm_combined"}, {"pool_file", "prompts/pool.json"}}},
        {"concurrency", 4}}}};
  std::ofstream(out_dir / "config.json") << config.dump(2) << "\n";
}

}  // namespace dsg
