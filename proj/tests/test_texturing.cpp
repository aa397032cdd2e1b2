#include <catch2/catch_amalgamated.hpp>

#include <map>

#include "dsg/texturing.hpp"
#include "test_util.hpp"

using namespace dsg;
using Catch::Matchers::WithinAbs;

namespace {

MeshCatalog box_catalog() {
  MeshCatalog cat;
  cat.ids = {"box"};
  cat.meshes.push_back(make_box(0.1, 0.1, 0.1));
  return cat;
}

SceneSpec tiny_scene(int64_t id = 0) {
  SceneSpec scene;
  scene.scene_id = id;
  scene.object_ref = "box";
  scene.object_pose = {Mat3::identity(), {0, 0, 0.05}};
  scene.table = TableSpec{1.0, 1.0, 0.0, {0, 0, 0}};
  PinholeCamera cam;
  cam.width = cam.height = 96;
  cam.fx = cam.fy = 96;
  cam.cx = cam.cy = 48;
  cam.pose = look_at({0.4, 0.3, 0.45}, {0, 0, 0.05}, {0, 0, 1});
  scene.cameras = {cam};
  scene.seed = mix_u64(123, static_cast<uint64_t>(id));
  return scene;
}

}  // namespace

TEST_CASE("texture assignment is deterministic per scene and seed", "[texturing]") {
  TextureLibrary lib = TextureLibrary::load("");
  SceneSpec scene = tiny_scene(5);
  TextureAssignment a = assign_random_textures(scene, lib, 42);
  TextureAssignment b = assign_random_textures(scene, lib, 42);
  CHECK(a.object_texture == b.object_texture);
  CHECK(a.table_texture == b.table_texture);
  CHECK(a.environment == b.environment);
  CHECK(a.object_scale == b.object_scale);

  TextureAssignment c = assign_random_textures(scene, lib, 43);
  CHECK((a.object_texture != c.object_texture || a.table_texture != c.table_texture ||
         a.environment != c.environment || a.object_scale != c.object_scale));
}

TEST_CASE("single-texture library always picks that texture", "[texturing]") {
  test::TempDir dir("texlib");
  std::filesystem::create_directories(dir.path() / "textures");
  ImageU8 img(4, 4, 3);
  for (auto& v : img.data) v = 200;
  write_png(img, dir.path() / "textures" / "only.png");

  TextureLibrary lib = TextureLibrary::load(dir.path(), /*procedural=*/false);
  REQUIRE(lib.texture_source_count() == 1);
  Rng rng(1);
  for (int i = 0; i < 20; ++i) CHECK(lib.sample_texture_ref(rng) == "file:only.png");
}

TEST_CASE("texture draws are uniform over the library", "[texturing]") {
  test::TempDir dir("texlib");
  std::filesystem::create_directories(dir.path() / "textures");
  const int n_textures = 8;
  ImageU8 img(2, 2, 3);
  for (int i = 0; i < n_textures; ++i)
    write_png(img, dir.path() / "textures" / ("t" + std::to_string(i) + ".png"));

  TextureLibrary lib = TextureLibrary::load(dir.path(), /*procedural=*/false);
  REQUIRE(lib.texture_source_count() == n_textures);

  const int draws = 10000;
  std::map<std::string, int> counts;
  Rng rng(7);
  for (int i = 0; i < draws; ++i) counts[lib.sample_texture_ref(rng)]++;

  double p = 1.0 / n_textures;
  double sigma = std::sqrt(draws * p * (1 - p));
  for (const auto& [ref, count] : counts) {
    INFO(ref << " count " << count);
    CHECK(std::abs(count - draws * p) <= 3 * sigma);
  }
}

TEST_CASE("empty library without procedural generators throws", "[texturing]") {
  TextureLibrary lib = TextureLibrary::load("", /*procedural=*/false);
  Rng rng(1);
  CHECK_THROWS_MATCHES(lib.sample_texture_ref(rng), Error,
                       Catch::Matchers::Predicate<Error>(
                           [](const Error& e) { return e.code() == Errc::empty_library; }));
}

TEST_CASE("environment sampling maps poles and equator correctly", "[texturing]") {
  // 8x4 image: top row white elsewhere dark; red texels around the u=0.5
  // equator sample so the (1,0,0) direction reads red.
  ImageU8 env(8, 4, 3);
  for (int x = 0; x < 8; ++x)
    for (int c = 0; c < 3; ++c) env.at(x, 0, c) = 255;
  for (int x : {3, 4})
    for (int y : {1, 2}) env.at(x, y, 0) = 255;
  Texture tex;
  tex.kind = Texture::Kind::image;
  tex.image = env;

  Color top = sample_environment({0, 0, 1}, tex);
  CHECK_THAT(top.r, WithinAbs(1.0, 1e-9));
  CHECK_THAT(top.g, WithinAbs(1.0, 1e-9));

  Color front = sample_environment({1, 0, 0}, tex);
  CHECK_THAT(front.r, WithinAbs(1.0, 1e-9));
  CHECK_THAT(front.g, WithinAbs(0.0, 1e-9));

  Color down = sample_environment({0, 0, -1}, tex);
  CHECK_THAT(down.r, WithinAbs(0.0, 1e-9));
}

TEST_CASE("constant-color environment returns that color everywhere", "[texturing]") {
  Texture tex;
  tex.kind = Texture::Kind::constant;
  tex.a = {0.25, 0.5, 0.75};
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    Vec3 v = test::random_vec(rng);
    if (norm(v) < 1e-6) continue;
    Color c = sample_environment(normalized(v), tex);
    CHECK_THAT(c.r, WithinAbs(0.25, 1e-12));
    CHECK_THAT(c.g, WithinAbs(0.5, 1e-12));
    CHECK_THAT(c.b, WithinAbs(0.75, 1e-12));
  }
}

TEST_CASE("checker lookup flips across a half-period", "[texturing]") {
  Texture tex;
  tex.kind = Texture::Kind::checker;
  tex.cell = 0.5;
  tex.a = {1, 1, 1};
  tex.b = {0, 0, 0};
  Color c1 = texture_lookup(tex, {0.1, 0.1});
  Color c2 = texture_lookup(tex, {0.6, 0.1});
  CHECK_THAT(c1.r, WithinAbs(1.0, 1e-12));
  CHECK_THAT(c2.r, WithinAbs(0.0, 1e-12));
}

TEST_CASE("image lookup wraps around", "[texturing]") {
  ImageU8 img(8, 8, 3);
  Rng rng(5);
  for (auto& v : img.data) v = static_cast<uint8_t>(rng.uniform_index(256));
  Texture tex;
  tex.kind = Texture::Kind::image;
  tex.image = img;
  Color a = texture_lookup(tex, {1.25, 0.25});
  Color b = texture_lookup(tex, {0.25, 0.25});
  CHECK_THAT(a.r, WithinAbs(b.r, 1e-12));
  CHECK_THAT(a.g, WithinAbs(b.g, 1e-12));
  CHECK_THAT(a.b, WithinAbs(b.b, 1e-12));
}

TEST_CASE("shading fills rgb and leaves annotation channels untouched", "[texturing]") {
  auto cat = box_catalog();
  SceneSpec scene = tiny_scene();
  TextureLibrary lib = TextureLibrary::load("");
  TextureAssignment assign = assign_random_textures(scene, lib, 9);

  Framebuffer fb = rasterize(scene, scene.cameras[0], cat, true);
  std::vector<float> depth_before = fb.depth;
  std::vector<uint8_t> instance_before = fb.instance;

  SceneAppearance app = make_scene_appearance(scene, cat, lib, assign);
  shade_framebuffer(fb, scene.cameras[0], app);

  CHECK(fb.rgb.width == fb.width);
  CHECK(fb.depth == depth_before);
  CHECK(fb.instance == instance_before);

  // Shading twice gives identical pixels.
  ImageU8 first = fb.rgb;
  shade_framebuffer(fb, scene.cameras[0], app);
  CHECK(fb.rgb == first);
}

TEST_CASE("procedural texture refs resolve deterministically", "[texturing]") {
  TextureLibrary lib = TextureLibrary::load("");
  Texture t1 = lib.resolve("proc:checker:12345");
  Texture t2 = lib.resolve("proc:checker:12345");
  CHECK(t1.kind == Texture::Kind::checker);
  CHECK(t1.a.r == t2.a.r);
  CHECK(t1.cell == t2.cell);

  Texture t3 = lib.resolve("proc:noise:999");
  CHECK(t3.kind == Texture::Kind::noise);
  Color c1 = texture_lookup(t3, {0.3, 0.7});
  Color c2 = texture_lookup(t3, {0.3, 0.7});
  CHECK(c1.r == c2.r);
}
