#include <catch2/catch_amalgamated.hpp>

#include <future>

#include "dsg/scene.hpp"
#include "test_util.hpp"

using namespace dsg;
using Catch::Matchers::WithinAbs;

namespace {

MeshCatalog demo_catalog() {
  MeshCatalog cat;
  cat.ids = {"box", "prism"};
  Mesh box = make_box(0.12, 0.08, 0.1);
  box.keypoints3d["top"] = {0, 0, 0.05};
  box.keypoints3d["corner"] = {0.06, 0.04, -0.05};
  cat.meshes.push_back(box);
  cat.meshes.push_back(make_prism(8, 0.05, 0.15));
  return cat;
}

}  // namespace

TEST_CASE("compose_scene is deterministic", "[scene]") {
  auto cat = demo_catalog();
  SceneRandomizationConfig cfg;
  SceneSpec a = compose_scene(17, cat, cfg, 12345);
  SceneSpec b = compose_scene(17, cat, cfg, 12345);
  CHECK(to_json(a).dump() == to_json(b).dump());

  SceneSpec c = compose_scene(17, cat, cfg, 54321);
  CHECK(to_json(a).dump() != to_json(c).dump());
}

TEST_CASE("composed objects rest on the table plane", "[scene]") {
  auto cat = demo_catalog();
  SceneRandomizationConfig cfg;
  for (int id = 0; id < 50; ++id) {
    SceneSpec s = compose_scene(id, cat, cfg, 7);
    Aabb box = mesh_aabb(cat.by_ref(s.object_ref), s.object_pose);
    CHECK_THAT(box.min.z, WithinAbs(0.0, 1e-9));
  }
}

TEST_CASE("all composed scenes satisfy the validator", "[scene]") {
  auto cat = demo_catalog();
  SceneRandomizationConfig cfg;
  for (int id = 0; id < 200; ++id) {
    SceneSpec s = compose_scene(id, cat, cfg, 99);
    auto problems = validate_scene(s, cat, cfg.cameras_per_scene);
    INFO("scene " << id << ": " << (problems.empty() ? "ok" : problems.front()));
    CHECK(problems.empty());
  }
}

TEST_CASE("table widths span the configured interval", "[scene]") {
  auto cat = demo_catalog();
  SceneRandomizationConfig cfg;
  double lo = 1e9, hi = -1e9;
  for (int id = 0; id < 1000; ++id) {
    SceneSpec s = compose_scene(id, cat, cfg, 31);
    lo = std::min(lo, s.table.width);
    hi = std::max(hi, s.table.width);
    CHECK(s.table.width >= cfg.table_width_range.min);
    CHECK(s.table.width <= cfg.table_width_range.max);
  }
  double covered = (hi - lo) / (cfg.table_width_range.max - cfg.table_width_range.min);
  CHECK(covered >= 0.95);
}

TEST_CASE("parallel composition matches sequential", "[scene]") {
  auto cat = demo_catalog();
  SceneRandomizationConfig cfg;
  std::vector<std::string> sequential;
  for (int id = 0; id < 32; ++id)
    sequential.push_back(to_json(compose_scene(id, cat, cfg, 5)).dump());

  std::vector<std::future<std::string>> jobs;
  for (int id = 0; id < 32; ++id)
    jobs.push_back(std::async(std::launch::async, [&cat, &cfg, id] {
      return to_json(compose_scene(id, cat, cfg, 5)).dump();
    }));
  for (int i = 0; i < 32; ++i) CHECK(jobs[i].get() == sequential[i]);
}

TEST_CASE("placement fails for an object larger than the table", "[scene]") {
  MeshCatalog cat;
  cat.ids = {"slab"};
  cat.meshes.push_back(make_box(2.0, 2.0, 0.1));
  SceneRandomizationConfig cfg;
  cfg.table_width_range = {0.5, 0.6};
  cfg.table_depth_range = {0.5, 0.6};
  CHECK_THROWS_MATCHES(compose_scene(0, cat, cfg, 1), Error,
                       Catch::Matchers::Predicate<Error>(
                           [](const Error& e) { return e.code() == Errc::placement_failure; }));
}

TEST_CASE("default configuration matches the 2500x2 dataset shape", "[scene]") {
  SceneRandomizationConfig cfg;
  CHECK(cfg.cameras_per_scene == 2);
  CHECK(2500 * cfg.cameras_per_scene == 5000);
  CHECK(cfg.resolution == 512);
}

TEST_CASE("sample_camera_pose respects a degenerate top-down range", "[scene]") {
  SceneRandomizationConfig cfg;
  cfg.camera_elevation_range = {89.0, 90.0};
  cfg.camera_radius_range = {1.0, 1.0};
  cfg.lookat_jitter = 0.0;
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    PinholeCamera cam = sample_camera_pose(rng, {0, 0, 0.05}, cfg);
    CHECK_THAT(cam.pose.translation.z, WithinAbs(1.05, 0.01));
  }
}

TEST_CASE("sampled cameras keep the object center in the central 80%", "[scene]") {
  SceneRandomizationConfig cfg;
  Rng rng(8);
  Vec3 center{0.05, -0.02, 0.04};
  for (int i = 0; i < 1000; ++i) {
    PinholeCamera cam = sample_camera_pose(rng, center, cfg);
    Vec3 p = cam.world_to_camera(center);
    REQUIRE(p.z > 0);
    Vec2 px = project_point(p, cam);
    CHECK(px.x >= 0.1 * (cam.width - 1));
    CHECK(px.x <= 0.9 * (cam.width - 1));
    CHECK(px.y >= 0.1 * (cam.height - 1));
    CHECK(px.y <= 0.9 * (cam.height - 1));
  }
}

TEST_CASE("sampled camera radius and elevation match the configured shell", "[scene]") {
  SceneRandomizationConfig cfg;
  cfg.lookat_jitter = 0.0;  // shell centered exactly on the object center
  Rng rng(9);
  Vec3 center{0, 0, 0.05};
  for (int i = 0; i < 1000; ++i) {
    PinholeCamera cam = sample_camera_pose(rng, center, cfg);
    Vec3 offset = cam.pose.translation - center;
    double r = norm(offset);
    CHECK(r >= cfg.camera_radius_range.min - 1e-9);
    CHECK(r <= cfg.camera_radius_range.max + 1e-9);
    double elev = rad_to_deg(std::asin(std::clamp(offset.z / r, -1.0, 1.0)));
    CHECK(elev >= cfg.camera_elevation_range.min - 1e-6);
    CHECK(elev <= cfg.camera_elevation_range.max + 1e-6);
  }
}

TEST_CASE("scene specs survive a JSON round trip", "[scene]") {
  auto cat = demo_catalog();
  SceneRandomizationConfig cfg;
  SceneSpec s = compose_scene(4, cat, cfg, 77);
  test::TempDir dir("scene");
  save_scene(s, dir.path() / "s.json");
  SceneSpec back = load_scene(dir.path() / "s.json");
  CHECK(to_json(back).dump() == to_json(s).dump());
}

TEST_CASE("scene randomization config validates its ranges", "[scene]") {
  SceneRandomizationConfig cfg;
  cfg.table_width_range = {1.0, 0.5};
  CHECK_THROWS_AS(cfg.validate(), Error);

  SceneRandomizationConfig cfg2;
  cfg2.cameras_per_scene = 0;
  CHECK_THROWS_AS(cfg2.validate(), Error);
}
