#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "dsg/core.hpp"

namespace dsg {

// Row-major, interleaved image. Channel counts used here: 1 (gray/masks),
// 3 (RGB, in that order -- conversion to BGR happens only at the codec
// boundary in image_io.hpp).
template <typename T>
struct Image {
  int width = 0, height = 0, channels = 1;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, int c, T fill = T{}) : width(w), height(h), channels(c) {
    data.assign(static_cast<size_t>(w) * h * c, fill);
  }

  bool empty() const { return data.empty(); }
  size_t index(int x, int y, int c = 0) const {
    return (static_cast<size_t>(y) * width + x) * channels + c;
  }
  T& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
  const T& at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }

  bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }

  bool operator==(const Image& o) const = default;
};

using ImageU8 = Image<uint8_t>;
using ImageU16 = Image<uint16_t>;
using ImageF = Image<float>;

inline uint8_t to_u8(double v) {
  return static_cast<uint8_t>(std::clamp(std::lround(v), 0l, 255l));
}

// Bilinear resize; samples are taken at pixel centers (align-corners off).
template <typename T>
Image<T> resize_bilinear(const Image<T>& src, int w, int h) {
  if (src.empty()) fail(Errc::invalid_argument, "resize of empty image");
  if (w == src.width && h == src.height) return src;
  Image<T> out(w, h, src.channels);
  const double sx = static_cast<double>(src.width) / w;
  const double sy = static_cast<double>(src.height) / h;
  for (int y = 0; y < h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    double wy = fy - y0;
    int y0c = std::clamp(y0, 0, src.height - 1);
    int y1c = std::clamp(y0 + 1, 0, src.height - 1);
    for (int x = 0; x < w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      double wx = fx - x0;
      int x0c = std::clamp(x0, 0, src.width - 1);
      int x1c = std::clamp(x0 + 1, 0, src.width - 1);
      for (int c = 0; c < src.channels; ++c) {
        double v00 = src.at(x0c, y0c, c), v10 = src.at(x1c, y0c, c);
        double v01 = src.at(x0c, y1c, c), v11 = src.at(x1c, y1c, c);
        double v = v00 * (1 - wx) * (1 - wy) + v10 * wx * (1 - wy) + v01 * (1 - wx) * wy +
                   v11 * wx * wy;
        if constexpr (std::is_floating_point_v<T>)
          out.at(x, y, c) = static_cast<T>(v);
        else
          out.at(x, y, c) = static_cast<T>(std::clamp<double>(std::round(v), 0,
                                                              std::numeric_limits<T>::max()));
      }
    }
  }
  return out;
}

template <typename T>
Image<T> resize_nearest(const Image<T>& src, int w, int h) {
  if (src.empty()) fail(Errc::invalid_argument, "resize of empty image");
  Image<T> out(w, h, src.channels);
  for (int y = 0; y < h; ++y) {
    int sy = std::clamp(static_cast<int>((y + 0.5) * src.height / h), 0, src.height - 1);
    for (int x = 0; x < w; ++x) {
      int sx = std::clamp(static_cast<int>((x + 0.5) * src.width / w), 0, src.width - 1);
      for (int c = 0; c < src.channels; ++c) out.at(x, y, c) = src.at(sx, sy, c);
    }
  }
  return out;
}

template <typename T>
Image<T> crop(const Image<T>& src, int x0, int y0, int w, int h) {
  if (x0 < 0 || y0 < 0 || x0 + w > src.width || y0 + h > src.height || w <= 0 || h <= 0)
    fail(Errc::invalid_argument, "crop out of bounds");
  Image<T> out(w, h, src.channels);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < src.channels; ++c) out.at(x, y, c) = src.at(x0 + x, y0 + y, c);
  return out;
}

// Pastes src into dst at (x0, y0); the region must fit.
template <typename T>
void blit(Image<T>& dst, const Image<T>& src, int x0, int y0) {
  if (dst.channels != src.channels) fail(Errc::shape_mismatch, "blit channel mismatch");
  if (x0 < 0 || y0 < 0 || x0 + src.width > dst.width || y0 + src.height > dst.height)
    fail(Errc::invalid_argument, "blit out of bounds");
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      for (int c = 0; c < src.channels; ++c) dst.at(x0 + x, y0 + y, c) = src.at(x, y, c);
}

// Integer pixel rectangle, max-exclusive is not used: [x0, x1] x [y0, y1].
struct PixelBox {
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;
  bool empty() const { return x1 < x0 || y1 < y0; }
  int width() const { return x1 - x0 + 1; }
  int height() const { return y1 - y0 + 1; }
};

inline PixelBox mask_bbox(const ImageU8& mask) {
  PixelBox box{mask.width, mask.height, -1, -1};
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(x, y)) {
        box.x0 = std::min(box.x0, x);
        box.y0 = std::min(box.y0, y);
        box.x1 = std::max(box.x1, x);
        box.y1 = std::max(box.y1, y);
      }
  return box;
}

inline size_t count_nonzero(const ImageU8& mask) {
  size_t n = 0;
  for (uint8_t v : mask.data) n += v != 0;
  return n;
}

}  // namespace dsg
