#pragma once

#include <filesystem>
#include <string>

#include "dsg/geometry.hpp"
#include "dsg/rng.hpp"

namespace dsg::test {

// Uniform-ish random rotation: orthonormalize a random frame (Gram-Schmidt),
// then fix the handedness. Good enough as a property-test generator.
inline Mat3 random_rotation(Rng& rng) {
  Vec3 a{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  Vec3 b{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  while (norm(a) < 1e-3) a = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  while (norm(cross(a, b)) < 1e-3) b = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  Vec3 x = normalized(a);
  Vec3 z = normalized(cross(a, b));
  Vec3 y = cross(z, x);
  return Mat3::from_cols(x, y, z);
}

inline RigidTransform random_rigid(Rng& rng, double t_range = 2.0) {
  return {random_rotation(rng),
          {rng.uniform(-t_range, t_range), rng.uniform(-t_range, t_range),
           rng.uniform(-t_range, t_range)}};
}

inline Vec3 random_vec(Rng& rng, double r = 1.0) {
  return {rng.uniform(-r, r), rng.uniform(-r, r), rng.uniform(-r, r)};
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("dsg_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace dsg::test
