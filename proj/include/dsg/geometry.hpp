#pragma once

#include <array>
#include <cmath>
#include <limits>

#include "dsg/core.hpp"

// Coordinate conventions, used everywhere:
//  * World frame: right-handed, z up, meters. The table top lies in z = 0.
//  * Camera pose (RigidTransform, camera-to-world): local +x right, +y up,
//    and the camera views along its local -z axis.
//  * Camera (projection) frame: +x right, +y down, +z forward, so points in
//    front of the camera have z > 0 and u = fx*x/z + cx, v = fy*y/z + cy
//    hold without sign juggling. It is the pose frame rotated 180 degrees
//    about x (diag(1,-1,-1)).
//  * Pixel coordinates are continuous with pixel (i, j) centered at (i, j);
//    image +x right, +y down.

namespace dsg {

constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double d) { return d * kPi / 180.0; }
inline double rad_to_deg(double r) { return r * 180.0 / kPi; }

struct Vec2 {
  double x = 0, y = 0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  bool operator==(const Vec2& o) const = default;
};

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  bool operator==(const Vec3& o) const = default;
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }
inline Vec3 normalized(const Vec3& v) {
  double n = norm(v);
  if (n == 0.0) fail(Errc::invalid_argument, "cannot normalize zero vector");
  return v * (1.0 / n);
}
inline double distance(const Vec2& a, const Vec2& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

// Row-major 3x3 matrix.
struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Mat3 identity() { return Mat3{}; }

  static Mat3 from_rows(const Vec3& r0, const Vec3& r1, const Vec3& r2) {
    return Mat3{{r0.x, r0.y, r0.z, r1.x, r1.y, r1.z, r2.x, r2.y, r2.z}};
  }
  static Mat3 from_cols(const Vec3& c0, const Vec3& c1, const Vec3& c2) {
    return Mat3{{c0.x, c1.x, c2.x, c0.y, c1.y, c2.y, c0.z, c1.z, c2.z}};
  }
  static Mat3 rotation_z(double yaw) {
    double c = std::cos(yaw), s = std::sin(yaw);
    return Mat3{{c, -s, 0, s, c, 0, 0, 0, 1}};
  }

  double at(int r, int c) const { return m[3 * r + c]; }

  Vec3 row(int r) const { return {m[3 * r], m[3 * r + 1], m[3 * r + 2]}; }
  Vec3 col(int c) const { return {m[c], m[c + 3], m[c + 6]}; }

  Vec3 operator*(const Vec3& v) const {
    return {dot(row(0), v), dot(row(1), v), dot(row(2), v)};
  }
  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        r.m[3 * i + j] = dot(row(i), o.col(j));
    return r;
  }
  Mat3 transposed() const {
    return Mat3{{m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]}};
  }
  double determinant() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }
  bool operator==(const Mat3& o) const = default;
};

// Largest absolute entry of R^T R - I; 0 for a perfectly orthonormal matrix.
inline double orthonormality_error(const Mat3& r) {
  Mat3 g = r.transposed() * r;
  double worst = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      worst = std::max(worst, std::abs(g.at(i, j) - (i == j ? 1.0 : 0.0)));
  return worst;
}

struct RigidTransform {
  Mat3 rotation;
  Vec3 translation;

  static RigidTransform identity() { return {}; }

  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }

  RigidTransform inverse() const {
    Mat3 rt = rotation.transposed();
    return {rt, -(rt * translation)};
  }
  bool operator==(const RigidTransform& o) const = default;
};

// (a o b)(p) == a(b(p)).
inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

// Camera-to-world pose with the camera at `eye` viewing toward `target`
// along its local -z; local +y is aligned with up_hint as far as possible.
inline RigidTransform look_at(const Vec3& eye, const Vec3& target, const Vec3& up_hint) {
  Vec3 view = target - eye;
  double vn = norm(view);
  if (vn < 1e-12) fail(Errc::degenerate_frame, "look_at: eye equals target");
  view = view * (1.0 / vn);

  Vec3 x_axis = cross(view, up_hint);
  if (norm(x_axis) < 1e-9 * norm(up_hint)) {
    fail(Errc::degenerate_frame, "look_at: up_hint parallel to viewing direction");
  }
  x_axis = normalized(x_axis);
  Vec3 z_axis = -view;                 // camera looks along -z
  Vec3 y_axis = cross(z_axis, x_axis); // unit by construction
  return {Mat3::from_cols(x_axis, y_axis, z_axis), eye};
}

struct PinholeCamera {
  double fx = 0, fy = 0;  // focal lengths, pixels
  double cx = 0, cy = 0;  // principal point, pixels
  int width = 0, height = 0;
  RigidTransform pose;    // camera-to-world

  bool intrinsics_valid() const {
    return fx > 0 && fy > 0 && cx >= 0 && cx < width && cy >= 0 && cy < height;
  }

  // World point -> camera (projection) frame: z > 0 in front of the camera.
  Vec3 world_to_camera(const Vec3& p_world) const {
    Vec3 v = pose.rotation.transposed() * (p_world - pose.translation);
    return {v.x, -v.y, -v.z};
  }
  Vec3 camera_to_world(const Vec3& p_cam) const {
    return pose * Vec3{p_cam.x, -p_cam.y, -p_cam.z};
  }
  // Unit world-space direction through pixel (u, v).
  Vec3 pixel_direction(double u, double v) const {
    Vec3 d{(u - cx) / fx, (v - cy) / fy, 1.0};
    return normalized(pose.rotation * Vec3{d.x, -d.y, -d.z});
  }
};

// p is in the camera (projection) frame; the result may lie outside the
// image bounds -- the caller classifies.
inline Vec2 project_point(const Vec3& p, const PinholeCamera& cam) {
  if (p.z <= 0.0) fail(Errc::behind_camera, "project_point: z <= 0");
  return {cam.fx * p.x / p.z + cam.cx, cam.fy * p.y / p.z + cam.cy};
}

// Inverse of project_point at known depth z (camera-frame z, meters).
inline Vec3 unproject_pixel(double u, double v, double z, const PinholeCamera& cam) {
  return {(u - cam.cx) / cam.fx * z, (v - cam.cy) / cam.fy * z, z};
}

struct Aabb {
  Vec3 min{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
           std::numeric_limits<double>::infinity()};
  Vec3 max{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
           -std::numeric_limits<double>::infinity()};

  bool empty() const { return min.x > max.x; }
  Vec3 center() const { return (min + max) * 0.5; }
  Vec3 extent() const { return max - min; }

  void extend(const Vec3& p) {
    min = {std::min(min.x, p.x), std::min(min.y, p.y), std::min(min.z, p.z)};
    max = {std::max(max.x, p.x), std::max(max.y, p.y), std::max(max.z, p.z)};
  }
};

}  // namespace dsg
