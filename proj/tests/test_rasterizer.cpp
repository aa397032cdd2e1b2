#include <catch2/catch_amalgamated.hpp>

#include "dsg/rasterizer.hpp"
#include "test_util.hpp"

using namespace dsg;
using Catch::Matchers::WithinAbs;

namespace {

PinholeCamera origin_camera(int res = 128, double focal = 0) {
  PinholeCamera cam;
  cam.width = cam.height = res;
  cam.fx = cam.fy = focal > 0 ? focal : res;
  cam.cx = cam.cy = res / 2.0;
  cam.pose = RigidTransform::identity();  // at origin, viewing world -z
  return cam;
}

// Quad spanning [-half, half]^2 in world x,y at world z = z_plane.
Mesh quad_at(double z_plane, double half = 10.0) {
  Mesh m;
  m.vertices = {{-half, -half, z_plane},
                {half, -half, z_plane},
                {half, half, z_plane},
                {-half, half, z_plane}};
  m.triangles = {{0, 1, 2}, {0, 2, 3}};
  return m;
}

SceneSpec manual_scene(const Vec3& eye, const Vec3& target) {
  SceneSpec scene;
  scene.scene_id = 0;
  scene.object_ref = "box";
  scene.object_pose = RigidTransform::identity();
  scene.object_pose.translation = {0, 0, 0.05};  // rest a 0.1-high box on z=0
  scene.table = TableSpec{1.0, 1.0, 0.0, {0, 0, 0}};
  PinholeCamera cam;
  cam.width = cam.height = 160;
  cam.fx = cam.fy = 160;
  cam.cx = cam.cy = 80;
  Vec3 up{0, 0, 1};
  if (std::abs(dot(normalized(target - eye), up)) > 0.999) up = {0, 1, 0};
  cam.pose = look_at(eye, target, up);
  scene.cameras = {cam};
  scene.seed = 1;
  return scene;
}

MeshCatalog box_catalog() {
  MeshCatalog cat;
  cat.ids = {"box"};
  Mesh box = make_box(0.1, 0.1, 0.1);
  box.keypoints3d["top"] = {0, 0, 0.05};
  box.keypoints3d["side"] = {0.05, 0, 0};
  cat.meshes.push_back(box);
  return cat;
}

}  // namespace

TEST_CASE("full-frustum quad fills the framebuffer at its depth", "[rasterizer]") {
  Mesh quad = quad_at(-2.0);
  RenderObject obj{&quad, RigidTransform::identity(), 1};
  auto cam = origin_camera();
  Framebuffer fb = rasterize_objects({&obj, 1}, cam, false);
  for (int y = 0; y < fb.height; ++y)
    for (int x = 0; x < fb.width; ++x) {
      REQUIRE(fb.instance[fb.index(x, y)] == 1);
      REQUIRE_THAT(fb.depth[fb.index(x, y)], WithinAbs(2.0, 1e-5));
    }
}

TEST_CASE("z-buffer keeps the nearer of two quads", "[rasterizer]") {
  Mesh near_quad = quad_at(-1.0, 0.4);  // covers the image center only
  Mesh far_quad = quad_at(-2.0);
  std::vector<RenderObject> objs = {{&far_quad, RigidTransform::identity(), 1},
                                    {&near_quad, RigidTransform::identity(), 2}};
  auto cam = origin_camera();
  Framebuffer fb = rasterize_objects(objs, cam, false);

  size_t idx_center = fb.index(64, 64);
  CHECK(fb.instance[idx_center] == 2);
  CHECK_THAT(fb.depth[idx_center], WithinAbs(1.0, 1e-5));
  size_t idx_corner = fb.index(2, 2);
  CHECK(fb.instance[idx_corner] == 1);
  CHECK_THAT(fb.depth[idx_corner], WithinAbs(2.0, 1e-5));

  // Mask/depth consistency: the instance channel is the argmin-depth surface.
  for (int y = 0; y < fb.height; ++y)
    for (int x = 0; x < fb.width; ++x) {
      float d = fb.depth[fb.index(x, y)];
      uint8_t id = fb.instance[fb.index(x, y)];
      REQUIRE(d < kNoDepth);
      if (id == 1) REQUIRE_THAT(d, WithinAbs(2.0, 1e-5));
    }
}

TEST_CASE("tilted plane depth matches the analytic ray-plane oracle", "[rasterizer]") {
  // Plane through (0,0,-2) with a tilted normal, rendered from a posed camera.
  Mesh quad = quad_at(0.0, 6.0);
  RigidTransform pose{Mat3::rotation_z(0.3), {0.1, -0.2, -2.0}};
  // Tilt: rotate about x by 0.5 rad, then the z-yaw above.
  double c = std::cos(0.5), s = std::sin(0.5);
  Mat3 tilt{{1, 0, 0, 0, c, -s, 0, s, c}};
  pose.rotation = pose.rotation * tilt;
  RenderObject obj{&quad, pose, 1};

  PinholeCamera cam = origin_camera(512, 512);
  cam.pose = look_at({0.3, 0.2, 0.5}, {0.1, -0.2, -2.0}, {0, 1, 0});

  Framebuffer fb = rasterize_objects({&obj, 1}, cam, false);

  Vec3 n = pose.rotation.col(2);  // plane normal (local z axis)
  Vec3 q = pose.translation;
  Vec3 origin = cam.pose.translation;

  size_t covered = 0, within = 0;
  for (int y = 0; y < fb.height; ++y)
    for (int x = 0; x < fb.width; ++x) {
      if (fb.instance[fb.index(x, y)] == 0) continue;
      ++covered;
      Vec3 dir = cam.pixel_direction(x, y);
      double t = dot(n, q - origin) / dot(n, dir);
      Vec3 hit = origin + dir * t;
      double expected = cam.world_to_camera(hit).z;
      if (std::abs(expected - fb.depth[fb.index(x, y)]) < 1e-3) ++within;
    }
  REQUIRE(covered > 100000);
  CHECK(static_cast<double>(within) / covered >= 0.999);
}

TEST_CASE("empty scene renders all background", "[rasterizer]") {
  auto cam = origin_camera(32);
  Framebuffer fb = rasterize_objects({}, cam, false);
  for (size_t i = 0; i < fb.instance.size(); ++i) {
    CHECK(fb.instance[i] == 0);
    CHECK(std::isinf(fb.depth[i]));
  }
}

TEST_CASE("keypoint on the nearest surface is visible", "[rasterizer]") {
  auto cat = box_catalog();
  SceneSpec scene = manual_scene({0.4, 0.3, 0.5}, {0, 0, 0.05});
  Framebuffer fb = rasterize(scene, scene.cameras[0], cat, false);
  auto kps = classify_keypoints(scene, scene.cameras[0], fb, cat.by_ref("box"));
  REQUIRE(kps.size() == 2);
  for (const auto& kp : kps) {
    if (kp.name == "top") CHECK(kp.state == KeypointState::visible);
  }
  // Watertightness: every visible keypoint's rounded pixel is on the object.
  for (const auto& kp : kps) {
    if (kp.state != KeypointState::visible) continue;
    int px = (int)std::lround(kp.pixel.x), py = (int)std::lround(kp.pixel.y);
    CHECK(fb.instance[fb.index(px, py)] == kObjectId);
  }
}

TEST_CASE("an occluder plane between camera and keypoint occludes it", "[rasterizer]") {
  auto cat = box_catalog();
  SceneSpec scene = manual_scene({0, 0, 1.0}, {0, 0, 0.05});

  Mesh table = make_table_mesh(scene.table);
  Mesh occluder = quad_at(0.0, 0.2);
  RigidTransform occ_pose{Mat3::identity(), {0, 0, 0.5}};  // between camera and box

  std::vector<RenderObject> objs = {{&table, table_pose(scene.table), kTableId},
                                    {&cat.by_ref("box"), scene.object_pose, kObjectId},
                                    {&occluder, occ_pose, kTableId}};
  Framebuffer fb = rasterize_objects(objs, scene.cameras[0], false);
  auto kps = classify_keypoints(scene, scene.cameras[0], fb, cat.by_ref("box"));
  for (const auto& kp : kps) CHECK(kp.state == KeypointState::occluded);
}

TEST_CASE("keypoints projecting off-image are outside", "[rasterizer]") {
  auto cat = box_catalog();
  // Camera looks away to the side; the box projects far off-image.
  SceneSpec scene = manual_scene({0.5, 0, 0.2}, {0.5, 5.0, 0.2});
  Framebuffer fb = rasterize(scene, scene.cameras[0], cat, false);
  auto kps = classify_keypoints(scene, scene.cameras[0], fb, cat.by_ref("box"));
  for (const auto& kp : kps) CHECK(kp.state == KeypointState::outside);
}

TEST_CASE("render without object removes only object pixels", "[rasterizer]") {
  auto cat = box_catalog();
  SceneSpec scene = manual_scene({0.4, 0.3, 0.5}, {0, 0, 0.05});
  Framebuffer full = rasterize(scene, scene.cameras[0], cat, false);
  Framebuffer empty = render_depth_without_object(scene, scene.cameras[0], cat);

  size_t object_pixels = 0;
  for (int y = 0; y < full.height; ++y)
    for (int x = 0; x < full.width; ++x) {
      size_t i = full.index(x, y);
      CHECK(empty.instance[i] != kObjectId);
      if (full.instance[i] == kObjectId) {
        ++object_pixels;
      } else {
        // Non-object pixels are identical between the two renders.
        CHECK(empty.instance[i] == full.instance[i]);
        if (!std::isinf(full.depth[i])) CHECK(empty.depth[i] == full.depth[i]);
      }
    }
  CHECK(object_pixels > 0);
}

TEST_CASE("instance labels are resolution independent", "[rasterizer]") {
  auto cat = box_catalog();
  SceneSpec scene = manual_scene({0.45, 0.35, 0.5}, {0, 0, 0.05});
  PinholeCamera lo = with_resolution(scene.cameras[0], 512, 512);
  PinholeCamera hi = with_resolution(lo, 1024, 1024);

  Framebuffer fb_lo = rasterize(scene, lo, cat, false);
  Framebuffer fb_hi = rasterize(scene, hi, cat, false);

  size_t agree = 0, total = 0;
  for (int y = 0; y < lo.height; ++y)
    for (int x = 0; x < lo.width; ++x) {
      int counts[3] = {0, 0, 0};
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) counts[fb_hi.instance[fb_hi.index(2 * x + dx, 2 * y + dy)]]++;
      int majority = 0;
      for (int k = 1; k < 3; ++k)
        if (counts[k] > counts[majority]) majority = k;
      ++total;
      if (majority == fb_lo.instance[fb_lo.index(x, y)]) ++agree;
    }
  CHECK(static_cast<double>(agree) / total >= 0.95);
}

TEST_CASE("depth PNG encoding round-trips to 0.1 mm", "[rasterizer]") {
  auto cat = box_catalog();
  SceneSpec scene = manual_scene({0.4, 0.3, 0.5}, {0, 0, 0.05});
  Framebuffer fb = rasterize(scene, scene.cameras[0], cat, false);
  ImageU16 png = depth_to_png16(fb);
  ImageU8 inst = instance_to_png(fb);
  Framebuffer back = framebuffer_from_pngs(png, inst);

  for (int y = 0; y < fb.height; ++y)
    for (int x = 0; x < fb.width; ++x) {
      size_t i = fb.index(x, y);
      CHECK(back.instance[i] == fb.instance[i]);
      if (std::isinf(fb.depth[i])) {
        CHECK(std::isinf(back.depth[i]));
      } else {
        CHECK_THAT(back.depth[i], WithinAbs(fb.depth[i], kDepthPngScale / 2 + 1e-7));
      }
    }
}

TEST_CASE("rasterization is deterministic", "[rasterizer]") {
  auto cat = box_catalog();
  SceneSpec scene = manual_scene({0.4, 0.3, 0.5}, {0, 0, 0.05});
  Framebuffer a = rasterize(scene, scene.cameras[0], cat, true);
  Framebuffer b = rasterize(scene, scene.cameras[0], cat, true);
  CHECK(a.depth == b.depth);
  CHECK(a.instance == b.instance);
}
