#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "dsg/http_backend.hpp"
#include "dsg/pipeline.hpp"
#include "test_util.hpp"

using namespace dsg;
using Catch::Matchers::WithinAbs;

namespace {

PipelineConfig tiny_config(const std::filesystem::path& assets,
                           const std::filesystem::path& out, TextureMethod method,
                           int scenes = 2) {
  PipelineConfig config = load_config(assets / "config.json");
  config.output_root = out;
  config.scenes = scenes;
  config.declared_images = -1;
  config.resolution = 96;
  config.diffusion.resolution = 96;
  config.randomization.resolution = 96;
  config.method = method;
  config.concurrency = 2;
  config.validate();
  return config;
}

std::map<std::string, std::vector<char>> read_tree(const std::filesystem::path& root,
                                                   const std::vector<std::string>& subdirs) {
  std::map<std::string, std::vector<char>> files;
  for (const std::string& sub : subdirs) {
    auto dir = root / sub;
    if (!std::filesystem::exists(dir)) continue;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
      if (!e.is_regular_file()) continue;
      std::ifstream in(e.path(), std::ios::binary);
      std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                              std::istreambuf_iterator<char>());
      files[std::filesystem::relative(e.path(), root).string()] = std::move(bytes);
    }
  }
  return files;
}

// GT-as-predictions: keypoint scores from the v flag (2 -> 1.0, else 0), one
// segmentation detection per annotation with score 1.
void write_self_predictions(const std::filesystem::path& coco_path,
                            const std::filesystem::path& kp_out,
                            const std::filesystem::path& seg_out) {
  std::ifstream in(coco_path);
  nlohmann::json gt;
  in >> gt;
  nlohmann::json kp = nlohmann::json::array();
  nlohmann::json seg = nlohmann::json::array();
  for (const auto& ann : gt.at("annotations")) {
    nlohmann::json triplets = nlohmann::json::array();
    const auto& k = ann.at("keypoints");
    for (size_t i = 0; i + 2 < k.size(); i += 3) {
      triplets.push_back(k.at(i));
      triplets.push_back(k.at(i + 1));
      triplets.push_back(k.at(i + 2).get<int>() == 2 ? 1.0 : 0.0);
    }
    kp.push_back({{"image_id", ann.at("image_id")}, {"category_id", 1}, {"keypoints", triplets}});
    seg.push_back({{"image_id", ann.at("image_id")},
                   {"category_id", 1},
                   {"score", 1.0},
                   {"segmentation", ann.at("segmentation")}});
  }
  std::ofstream(kp_out) << kp.dump();
  std::ofstream(seg_out) << seg.dump();
}

}  // namespace

TEST_CASE("pipeline smoke run produces a consistent dataset", "[pipeline]") {
  test::TempDir assets("assets");
  write_demo_assets(assets.path());
  test::TempDir out("out");
  PipelineConfig config = tiny_config(assets.path(), out.path() / "d", TextureMethod::diff1);

  PipelineStats stats = run_pipeline(config, mock_client_factory());
  CHECK(stats.render.processed == 4);
  CHECK(stats.texture.backend_requests == 4);  // one request per image

  DatasetManifest manifest = read_manifest(config.output_root / "dataset" / "manifest.jsonl");
  CHECK(manifest.header.images == 4);
  CHECK(manifest.header.records + manifest.header.dropped == 4);
  CHECK(manifest.header.config_hash == config_hash(config));
  for (const auto& rec : manifest.records) {
    CHECK(rec.status == "ok");
    CHECK(!rec.prompt.empty());
    CHECK(std::filesystem::exists(config.output_root / rec.paths.at("rgb")));
    CHECK(std::filesystem::exists(config.output_root / rec.paths.at("depth")));
    CHECK(std::filesystem::exists(config.output_root / rec.paths.at("mask")));
    CHECK(std::filesystem::exists(config.output_root / rec.paths.at("control")));
  }

  CocoDataset coco = parse_coco(config.output_root / "dataset" / "coco.json");
  CHECK(coco.images.size() == manifest.records.size());
  CHECK(coco.annotations.size() == manifest.records.size());
  CHECK(coco.keypoint_names == config.schema());
}

TEST_CASE("two pipeline runs are byte-identical", "[pipeline]") {
  test::TempDir assets("assets");
  write_demo_assets(assets.path());
  const std::vector<std::string> compare = {"scenes", "renders", "annotations",
                                            "control", "images", "dataset"};
  for (TextureMethod method : {TextureMethod::random, TextureMethod::diff2}) {
    test::TempDir out_a("runA");
    test::TempDir out_b("runB");
    PipelineConfig a = tiny_config(assets.path(), out_a.path() / "d", method);
    PipelineConfig b = tiny_config(assets.path(), out_b.path() / "d", method);
    run_pipeline(a, mock_client_factory());
    run_pipeline(b, mock_client_factory());

    auto tree_a = read_tree(a.output_root, compare);
    auto tree_b = read_tree(b.output_root, compare);
    REQUIRE(!tree_a.empty());
    REQUIRE(tree_a.size() == tree_b.size());
    for (const auto& [rel, bytes] : tree_a) {
      INFO(texture_method_name(method) << ": " << rel);
      REQUIRE(tree_b.count(rel) == 1);
      REQUIRE(bytes == tree_b.at(rel));
    }
  }
}

TEST_CASE("interrupted texture stage resumes to identical output", "[pipeline]") {
  test::TempDir assets("assets");
  write_demo_assets(assets.path());
  test::TempDir out("out");
  PipelineConfig config = tiny_config(assets.path(), out.path() / "d", TextureMethod::diff1);
  run_pipeline(config, mock_client_factory());

  auto target = config.output_root / "images" / "img_000002.png";
  std::ifstream in(target, std::ios::binary);
  std::vector<char> original((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  std::filesystem::remove(target);

  StageStats stats = run_texture(config, mock_client_factory());
  CHECK(stats.processed == 1);
  CHECK(stats.skipped == 3);
  std::ifstream in2(target, std::ios::binary);
  std::vector<char> regenerated((std::istreambuf_iterator<char>(in2)),
                                std::istreambuf_iterator<char>());
  CHECK(regenerated == original);

  StageStats exported = run_export(config);
  CHECK(exported.failed == 0);
}

TEST_CASE("backend failures are recorded and the pipeline continues", "[pipeline]") {
  test::TempDir assets("assets");
  write_demo_assets(assets.path());
  test::TempDir out("out");
  PipelineConfig config = tiny_config(assets.path(), out.path() / "d", TextureMethod::diff1);
  config.concurrency = 1;

  run_gen_scenes(config);
  run_render(config);

  // Every submission fails: all images end up recorded as failed.
  auto failing_factory = [] {
    auto client = std::make_unique<MockTexturingClient>(false);
    client->fail_next(1000000);
    return client;
  };
  StageStats stats = run_texture(config, failing_factory);
  CHECK(stats.failed == 4);
  CHECK(stats.processed == 0);

  StageStats exported = run_export(config);
  CHECK(exported.failed == 4);
  DatasetManifest manifest = read_manifest(config.output_root / "dataset" / "manifest.jsonl");
  for (const auto& rec : manifest.records) {
    CHECK(rec.status == "failed");
    CHECK(!rec.error.empty());
    CHECK(rec.paths.count("rgb") == 0);
  }

  // A later rerun with a healthy backend repairs the dataset.
  StageStats retry = run_texture(config, mock_client_factory());
  CHECK(retry.processed == 4);
  run_export(config);
  DatasetManifest repaired = read_manifest(config.output_root / "dataset" / "manifest.jsonl");
  for (const auto& rec : repaired.records) CHECK(rec.status == "ok");
}

TEST_CASE("splits are nested, deterministic and validated", "[pipeline]") {
  test::TempDir assets("assets");
  write_demo_assets(assets.path());
  test::TempDir out("out");
  PipelineConfig config = tiny_config(assets.path(), out.path() / "d", TextureMethod::random, 4);
  run_pipeline(config, mock_client_factory());
  auto manifest_path = config.output_root / "dataset" / "manifest.jsonl";

  test::TempDir splits("splits");
  auto written = make_splits(manifest_path, {2, 4, 8}, 7, splits.path());
  REQUIRE(written.size() == 3);

  std::vector<std::set<int64_t>> sets;
  for (const auto& p : written) {
    std::ifstream in(p);
    nlohmann::json j;
    in >> j;
    std::set<int64_t> ids;
    for (const auto& v : j.at("image_ids")) ids.insert(v.get<int64_t>());
    CHECK(static_cast<int64_t>(ids.size()) == j.at("size").get<int64_t>());
    sets.push_back(std::move(ids));
  }
  for (size_t i = 1; i < sets.size(); ++i)
    for (int64_t id : sets[i - 1]) CHECK(sets[i].count(id) == 1);

  // Deterministic per seed.
  test::TempDir splits2("splits2");
  auto written2 = make_splits(manifest_path, {2, 4, 8}, 7, splits2.path());
  std::ifstream a(written[0]), b(written2[0]);
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);

  CHECK_THROWS_MATCHES(make_splits(manifest_path, {2, 100}, 7, splits.path()), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == Errc::size_exceeds_dataset;
                       }));
  CHECK_THROWS_AS(make_splits(manifest_path, {4, 2}, 7, splits.path()), Error);
}

TEST_CASE("evaluating the ground truth against itself is perfect", "[pipeline]") {
  test::TempDir assets("assets");
  write_demo_assets(assets.path());
  test::TempDir out("out");
  PipelineConfig config = tiny_config(assets.path(), out.path() / "d", TextureMethod::random);
  run_pipeline(config, mock_client_factory());

  auto coco_path = config.output_root / "dataset" / "coco.json";
  auto kp_path = out.path() / "kp_preds.json";
  auto seg_path = out.path() / "seg_preds.json";
  write_self_predictions(coco_path, kp_path, seg_path);

  EvalReport kp_report = evaluate_keypoints(coco_path, kp_path);
  CHECK_THAT(kp_report.json.at("akd_px").get<double>(), WithinAbs(0.0, 1e-12));

  EvalReport seg_report = evaluate_segmentation(coco_path, seg_path);
  CHECK_THAT(seg_report.json.at("map").get<double>(), WithinAbs(1.0, 1e-12));
  CHECK(seg_report.text.find("mAP") != std::string::npos);
}

TEST_CASE("texturing over HTTP matches the in-process mock", "[pipeline][http]") {
  test::TempDir assets("assets");
  write_demo_assets(assets.path());

  MockBackendServer server;
  server.start(18475);
  ClientFactory http_factory = [url = server.url()] {
    return std::make_unique<HttpTexturingClient>(url, /*max_retries=*/1, /*backoff_initial_ms=*/10);
  };

  test::TempDir out_http("http");
  test::TempDir out_local("local");
  PipelineConfig via_http = tiny_config(assets.path(), out_http.path() / "d", TextureMethod::diff2);
  PipelineConfig local = tiny_config(assets.path(), out_local.path() / "d", TextureMethod::diff2);
  run_pipeline(via_http, http_factory);
  run_pipeline(local, mock_client_factory());
  server.stop();

  auto tree_a = read_tree(via_http.output_root, {"images", "control"});
  auto tree_b = read_tree(local.output_root, {"images", "control"});
  REQUIRE(!tree_a.empty());
  REQUIRE(tree_a.size() == tree_b.size());
  for (const auto& [rel, bytes] : tree_a) {
    INFO(rel);
    REQUIRE(bytes == tree_b.at(rel));
  }
}

TEST_CASE("evaluation without ground truth annotations fails cleanly", "[pipeline]") {
  test::TempDir dir("eval");
  std::ofstream(dir.path() / "gt.json")
      << R"({"images": [{"id": 0, "width": 8, "height": 8}], "categories": [], "annotations": []})";
  std::ofstream(dir.path() / "preds.json") << "[]";
  CHECK_THROWS_MATCHES(evaluate_segmentation(dir.path() / "gt.json", dir.path() / "preds.json"),
                       Error, Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == Errc::no_ground_truth;
                       }));
}

TEST_CASE("config JSON round trip preserves the hash", "[pipeline]") {
  test::TempDir assets("assets");
  write_demo_assets(assets.path());
  PipelineConfig config = load_config(assets.path() / "config.json");
  std::string hash = config_hash(config);

  PipelineConfig back = config_from_json(to_json(config));
  CHECK(config_hash(back) == hash);
  CHECK(back.scenes == config.scenes);
  CHECK(back.method == config.method);
  CHECK(back.prompt.strategy == config.prompt.strategy);
}

TEST_CASE("config validation catches inconsistent counts", "[pipeline]") {
  PipelineConfig config;
  config.category = "demo";
  config.keypoint_names = {"top"};
  config.mesh_dir = ".";
  config.output_root = "x";
  config.scenes = 10;
  config.cameras_per_scene = 2;
  config.declared_images = 19;  // != 20
  CHECK_THROWS_AS(config.validate(), Error);

  config.declared_images = 20;
  CHECK_NOTHROW(config.validate());
}

TEST_CASE("paper-scale defaults validate to 2500 scenes and 5000 images", "[pipeline]") {
  PipelineConfig config;
  config.category = "mug";
  config.mesh_dir = ".";
  config.output_root = "x";
  CHECK(config.scenes == 2500);
  CHECK(config.cameras_per_scene == 2);
  CHECK(config.resolution == 512);
  CHECK(config.images() == 5000);
  CHECK(config.diffusion.conditioning_scale == 1.5);
  CHECK_NOTHROW(config.validate());
}

TEST_CASE("reusing an output root with a different config is rejected", "[pipeline]") {
  test::TempDir assets("assets");
  write_demo_assets(assets.path());
  test::TempDir out("out");
  PipelineConfig config = tiny_config(assets.path(), out.path() / "d", TextureMethod::random);
  run_gen_scenes(config);

  PipelineConfig other = config;
  other.master_seed += 1;
  CHECK_THROWS_AS(run_gen_scenes(other), Error);
}
