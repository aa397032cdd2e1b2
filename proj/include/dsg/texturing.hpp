#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dsg/core.hpp"
#include "dsg/image.hpp"
#include "dsg/image_io.hpp"
#include "dsg/rasterizer.hpp"
#include "dsg/rng.hpp"
#include "dsg/scene.hpp"

namespace dsg {

struct Color {
  double r = 0, g = 0, b = 0;  // linear-ish [0,1]

  Color operator*(double s) const { return {r * s, g * s, b * s}; }
  Color operator+(const Color& o) const { return {r + o.r, g + o.g, b + o.b}; }
};

inline Color lerp(const Color& a, const Color& b, double t) {
  return a * (1 - t) + b * t;
}

// A texture is either an image or a procedural pattern whose parameters are
// derived from a seed; both are addressable by a reference string so that
// assignments stay serializable:
//   file:<relpath>        image under <root>/textures/
//   envfile:<relpath>     equirectangular image under <root>/envmaps/
//   proc:checker:<seed>   procedural checker
//   proc:stripes:<seed>   procedural stripes
//   proc:noise:<seed>     procedural value noise
//   proc:gradient:<seed>  procedural environment gradient
struct Texture {
  enum class Kind { image, constant, checker, stripes, noise, env_gradient };

  Kind kind = Kind::constant;
  std::string ref;
  ImageU8 image;  // kind == image
  Color a{0.8, 0.8, 0.8}, b{0.2, 0.2, 0.2};
  double cell = 0.25;   // checker/stripe period in uv units
  double angle = 0.0;   // stripes orientation, radians
  uint64_t noise_seed = 0;
};

namespace detail {

inline Color random_color(Rng& rng) {
  return {rng.uniform(), rng.uniform(), rng.uniform()};
}

// Smooth value noise in [0,1]; lattice values hashed from the seed.
inline double value_noise(double u, double v, uint64_t seed, int octaves) {
  auto lattice = [seed](int64_t x, int64_t y, int oct) {
    uint64_t h = mix_u64(mix_u64(mix_u64(seed, static_cast<uint64_t>(x)),
                                 static_cast<uint64_t>(y)),
                         static_cast<uint64_t>(oct));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
  };
  double total = 0, amp = 1, amp_sum = 0, freq = 1;
  for (int o = 0; o < octaves; ++o) {
    double x = u * freq, y = v * freq;
    int64_t x0 = static_cast<int64_t>(std::floor(x)), y0 = static_cast<int64_t>(std::floor(y));
    double fx = x - x0, fy = y - y0;
    double sx = fx * fx * (3 - 2 * fx), sy = fy * fy * (3 - 2 * fy);
    double v00 = lattice(x0, y0, o), v10 = lattice(x0 + 1, y0, o);
    double v01 = lattice(x0, y0 + 1, o), v11 = lattice(x0 + 1, y0 + 1, o);
    double val = v00 * (1 - sx) * (1 - sy) + v10 * sx * (1 - sy) + v01 * (1 - sx) * sy +
                 v11 * sx * sy;
    total += val * amp;
    amp_sum += amp;
    amp *= 0.5;
    freq *= 2;
  }
  return total / amp_sum;
}

inline double wrap01(double x) { return x - std::floor(x); }

// Bilinear sample with wrap-around addressing in both axes.
inline Color sample_image_wrap(const ImageU8& img, double u, double v) {
  double x = wrap01(u) * img.width - 0.5;
  double y = wrap01(v) * img.height - 0.5;
  int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  double fx = x - x0, fy = y - y0;
  auto texel = [&](int xi, int yi) {
    xi = ((xi % img.width) + img.width) % img.width;
    yi = ((yi % img.height) + img.height) % img.height;
    if (img.channels == 1) {
      double g = img.at(xi, yi) / 255.0;
      return Color{g, g, g};
    }
    return Color{img.at(xi, yi, 0) / 255.0, img.at(xi, yi, 1) / 255.0, img.at(xi, yi, 2) / 255.0};
  };
  return texel(x0, y0) * ((1 - fx) * (1 - fy)) + texel(x0 + 1, y0) * (fx * (1 - fy)) +
         texel(x0, y0 + 1) * ((1 - fx) * fy) + texel(x0 + 1, y0 + 1) * (fx * fy);
}

// Same, but v clamps instead of wrapping (equirectangular maps).
inline Color sample_image_equirect(const ImageU8& img, double u, double v) {
  double x = wrap01(u) * img.width - 0.5;
  double y = std::clamp(v, 0.0, 1.0) * img.height - 0.5;
  int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  double fx = x - x0, fy = y - y0;
  auto texel = [&](int xi, int yi) {
    xi = ((xi % img.width) + img.width) % img.width;
    yi = std::clamp(yi, 0, img.height - 1);
    if (img.channels == 1) {
      double g = img.at(xi, yi) / 255.0;
      return Color{g, g, g};
    }
    return Color{img.at(xi, yi, 0) / 255.0, img.at(xi, yi, 1) / 255.0, img.at(xi, yi, 2) / 255.0};
  };
  return texel(x0, y0) * ((1 - fx) * (1 - fy)) + texel(x0 + 1, y0) * (fx * (1 - fy)) +
         texel(x0, y0 + 1) * ((1 - fx) * fy) + texel(x0 + 1, y0 + 1) * (fx * fy);
}

}  // namespace detail

inline Color texture_lookup(const Texture& tex, Vec2 uv) {
  switch (tex.kind) {
    case Texture::Kind::image:
      return detail::sample_image_wrap(tex.image, uv.x, uv.y);
    case Texture::Kind::constant:
      return tex.a;
    case Texture::Kind::checker: {
      int64_t cu = static_cast<int64_t>(std::floor(uv.x / tex.cell));
      int64_t cv = static_cast<int64_t>(std::floor(uv.y / tex.cell));
      return ((cu + cv) & 1) == 0 ? tex.a : tex.b;
    }
    case Texture::Kind::stripes: {
      double u = uv.x * std::cos(tex.angle) + uv.y * std::sin(tex.angle);
      int64_t band = static_cast<int64_t>(std::floor(u / tex.cell));
      return (band & 1) == 0 ? tex.a : tex.b;
    }
    case Texture::Kind::noise:
      return lerp(tex.a, tex.b, detail::value_noise(uv.x * 8, uv.y * 8, tex.noise_seed, 3));
    case Texture::Kind::env_gradient:
      return lerp(tex.a, tex.b, uv.y);  // uv.y in [0,1], 0 = up
  }
  return tex.a;
}

// Equirectangular environment lookup: u = (atan2(y,x)+pi)/2pi, v = acos(z)/pi
// (z up, v = 0 at the zenith), bilinear-filtered.
inline Color sample_environment(const Vec3& direction, const Texture& env) {
  double len = norm(direction);
  if (std::abs(len - 1.0) > 1e-6) fail(Errc::invalid_argument, "direction must be unit length");
  double u = (std::atan2(direction.y, direction.x) + kPi) / (2.0 * kPi);
  double v = std::acos(std::clamp(direction.z, -1.0, 1.0)) / kPi;
  if (env.kind == Texture::Kind::image) return detail::sample_image_equirect(env.image, u, v);
  return texture_lookup(env, {u, v});
}

// --- library & assignment ---

struct TextureAssignment {
  std::string object_texture;
  std::string table_texture;
  std::string environment;
  double object_scale = 1.0;  // texture tiles per uv unit / per meter (triplanar)
  double table_scale = 1.0;
  uint64_t seed = 0;
};

// Parameter ranges for the procedural generators; the pipeline exposes these
// in the main config file.
struct ProceduralTextureParams {
  Interval cell_range{0.1, 0.5};   // checker/stripe period, uv units
  Interval scale_range{0.25, 4.0}; // texture tiles per uv unit, sampled log-uniformly
};

class TextureLibrary {
 public:
  ProceduralTextureParams procedural_params;

  // Scans root/textures/*.{png,jpg,jpeg} and root/envmaps/*.{png,jpg,jpeg}.
  // Procedural generators keep the library non-empty with zero assets.
  static TextureLibrary load(const std::filesystem::path& root, bool procedural = true) {
    TextureLibrary lib;
    lib.root_ = root;
    lib.procedural_ = procedural;
    auto scan = [](const std::filesystem::path& dir, std::vector<std::string>& out) {
      if (!std::filesystem::is_directory(dir)) return;
      std::vector<std::string> names;
      for (const auto& e : std::filesystem::directory_iterator(dir)) {
        auto ext = e.path().extension().string();
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") names.push_back(e.path().filename().string());
      }
      std::sort(names.begin(), names.end());
      out = std::move(names);
    };
    if (!root.empty()) {
      scan(root / "textures", lib.texture_files_);
      scan(root / "envmaps", lib.envmap_files_);
    }
    return lib;
  }

  size_t texture_source_count() const { return texture_files_.size() + (procedural_ ? 3 : 0); }
  size_t env_source_count() const { return envmap_files_.size() + (procedural_ ? 1 : 0); }
  const std::vector<std::string>& texture_files() const { return texture_files_; }

  std::string sample_texture_ref(Rng& rng) const {
    size_t n = texture_source_count();
    if (n == 0) fail(Errc::empty_library, "no texture sources registered");
    size_t k = rng.uniform_index(n);
    if (k < texture_files_.size()) return "file:" + texture_files_[k];
    static const char* kinds[] = {"checker", "stripes", "noise"};
    return std::string("proc:") + kinds[k - texture_files_.size()] + ":" +
           std::to_string(rng.next_u64());
  }

  std::string sample_env_ref(Rng& rng) const {
    size_t n = env_source_count();
    if (n == 0) fail(Errc::empty_library, "no environment sources registered");
    size_t k = rng.uniform_index(n);
    if (k < envmap_files_.size()) return "envfile:" + envmap_files_[k];
    return "proc:gradient:" + std::to_string(rng.next_u64());
  }

  Texture resolve(const std::string& ref) const {
    Texture tex;
    tex.ref = ref;
    if (ref.rfind("file:", 0) == 0) {
      tex.kind = Texture::Kind::image;
      tex.image = read_image_u8(root_ / "textures" / ref.substr(5));
      return tex;
    }
    if (ref.rfind("envfile:", 0) == 0) {
      tex.kind = Texture::Kind::image;
      tex.image = read_image_u8(root_ / "envmaps" / ref.substr(8));
      return tex;
    }
    if (ref.rfind("proc:", 0) == 0) {
      std::string rest = ref.substr(5);
      auto colon = rest.find(':');
      if (colon == std::string::npos) fail(Errc::parse_error, "bad texture ref: " + ref);
      std::string kind = rest.substr(0, colon);
      uint64_t seed = std::stoull(rest.substr(colon + 1));
      Rng rng(seed);
      tex.a = detail::random_color(rng);
      tex.b = detail::random_color(rng);
      tex.cell = rng.uniform(procedural_params.cell_range.min, procedural_params.cell_range.max);
      tex.angle = rng.uniform(0.0, kPi);
      tex.noise_seed = rng.next_u64();
      if (kind == "checker") tex.kind = Texture::Kind::checker;
      else if (kind == "stripes") tex.kind = Texture::Kind::stripes;
      else if (kind == "noise") tex.kind = Texture::Kind::noise;
      else if (kind == "gradient") tex.kind = Texture::Kind::env_gradient;
      else fail(Errc::parse_error, "unknown procedural texture kind: " + kind);
      return tex;
    }
    fail(Errc::parse_error, "unknown texture ref: " + ref);
  }

 private:
  std::filesystem::path root_;
  std::vector<std::string> texture_files_;
  std::vector<std::string> envmap_files_;
  bool procedural_ = true;
};

// Uniform draw over (image + procedural) sources per scene element, plus a
// log-uniform texture scale (default [0.25, 4] tiles); deterministic per
// (scene_id, seed).
inline TextureAssignment assign_random_textures(const SceneSpec& scene, const TextureLibrary& lib,
                                                uint64_t seed) {
  Rng rng = Rng::from_stream(seed, static_cast<uint64_t>(scene.scene_id), Stream::texture);
  const Interval& scale = lib.procedural_params.scale_range;
  TextureAssignment out;
  out.seed = seed;
  out.object_texture = lib.sample_texture_ref(rng);
  out.table_texture = lib.sample_texture_ref(rng);
  out.environment = lib.sample_env_ref(rng);
  out.object_scale = std::exp(rng.uniform(std::log(scale.min), std::log(scale.max)));
  out.table_scale = std::exp(rng.uniform(std::log(scale.min), std::log(scale.max)));
  return out;
}

// --- shading ---

struct SurfaceAppearance {
  Texture texture;
  double scale = 1.0;
  bool mesh_has_uv = false;
  RigidTransform pose;  // world -> used to derive local normals for triplanar
};

struct SceneAppearance {
  SurfaceAppearance table;
  SurfaceAppearance object;
  Texture environment;
  Vec3 light_dir{0, 0, 1};  // unit, toward the light
  double ambient = 0.3;
};

inline SceneAppearance make_scene_appearance(const SceneSpec& scene, const MeshCatalog& meshes,
                                             const TextureLibrary& lib,
                                             const TextureAssignment& assignment) {
  SceneAppearance app;
  app.table.texture = lib.resolve(assignment.table_texture);
  app.table.scale = assignment.table_scale;
  app.table.mesh_has_uv = false;
  app.table.pose = table_pose(scene.table);
  app.object.texture = lib.resolve(assignment.object_texture);
  app.object.scale = assignment.object_scale;
  app.object.mesh_has_uv = meshes.by_ref(scene.object_ref).has_uvs();
  app.object.pose = scene.object_pose;
  app.environment = lib.resolve(assignment.environment);

  // One directional light per scene, from the scene's own seed.
  Rng rng = Rng::from_stream(scene.seed, 0, Stream::light);
  double elevation = deg_to_rad(rng.uniform(30.0, 80.0));
  double azimuth = rng.uniform(0.0, 2.0 * kPi);
  app.light_dir = {std::cos(elevation) * std::cos(azimuth),
                   std::cos(elevation) * std::sin(azimuth), std::sin(elevation)};
  return app;
}

namespace detail {

// Triplanar fallback for meshes without UVs: project local position along the
// dominant axis of the local normal; coordinates are meters * scale.
inline Vec2 triplanar_uv(const Vec3& local_pos, const Vec3& local_normal, double scale) {
  double ax = std::abs(local_normal.x), ay = std::abs(local_normal.y),
         az = std::abs(local_normal.z);
  Vec2 uv;
  if (az >= ax && az >= ay) uv = {local_pos.x, local_pos.y};
  else if (ax >= ay) uv = {local_pos.y, local_pos.z};
  else uv = {local_pos.x, local_pos.z};
  return {uv.x * scale, uv.y * scale};
}

}  // namespace detail

// Fills fb.rgb: textured Lambert for covered pixels, environment lookup along
// the pixel ray for background. Depth/instance/keypoint channels are never
// touched -- texturing only ever produces RGB.
inline void shade_framebuffer(Framebuffer& fb, const PinholeCamera& cam,
                              const SceneAppearance& app) {
  if (!fb.has_aux) fail(Errc::invalid_argument, "shading requires aux channels");
  fb.rgb = ImageU8(fb.width, fb.height, 3);
  for (int y = 0; y < fb.height; ++y) {
    for (int x = 0; x < fb.width; ++x) {
      size_t i = fb.index(x, y);
      Color c;
      if (fb.instance[i] == kBackgroundId) {
        c = sample_environment(cam.pixel_direction(x, y), app.environment);
      } else {
        const SurfaceAppearance& surf = fb.instance[i] == kObjectId ? app.object : app.table;
        Vec2 uv;
        if (surf.mesh_has_uv) {
          uv = {fb.aux_uv[i].x * surf.scale, fb.aux_uv[i].y * surf.scale};
        } else {
          Vec3 local_normal = surf.pose.rotation.transposed() * fb.aux_normal[i];
          uv = detail::triplanar_uv(fb.aux_local[i], local_normal, surf.scale);
        }
        Color base = texture_lookup(surf.texture, uv);
        double diffuse = std::max(0.0, dot(fb.aux_normal[i], app.light_dir));
        double s = app.ambient + (1.0 - app.ambient) * diffuse;
        c = base * s;
      }
      fb.rgb.at(x, y, 0) = to_u8(c.r * 255.0);
      fb.rgb.at(x, y, 1) = to_u8(c.g * 255.0);
      fb.rgb.at(x, y, 2) = to_u8(c.b * 255.0);
    }
  }
}

}  // namespace dsg
