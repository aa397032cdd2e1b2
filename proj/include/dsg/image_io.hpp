#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "dsg/core.hpp"
#include "dsg/image.hpp"

// All file and in-memory image codecs go through OpenCV's imgcodecs. This is
// the only place cv::Mat appears; the rest of the code uses dsg::Image with
// RGB channel order.

namespace dsg {

namespace detail {

inline cv::Mat to_mat(const ImageU8& img) {
  cv::Mat m(img.height, img.width, img.channels == 3 ? CV_8UC3 : CV_8UC1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      if (img.channels == 3) {
        // RGB -> BGR
        m.at<cv::Vec3b>(y, x) = {img.at(x, y, 2), img.at(x, y, 1), img.at(x, y, 0)};
      } else {
        m.at<uint8_t>(y, x) = img.at(x, y);
      }
    }
  return m;
}

inline cv::Mat to_mat(const ImageU16& img) {
  cv::Mat m(img.height, img.width, CV_16UC1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) m.at<uint16_t>(y, x) = img.at(x, y);
  return m;
}

inline ImageU8 u8_from_mat(const cv::Mat& m) {
  if (m.empty()) fail(Errc::io_error, "failed to decode image");
  ImageU8 img(m.cols, m.rows, m.channels() >= 3 ? 3 : 1);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) {
      if (m.channels() == 1) {
        img.at(x, y) = m.at<uint8_t>(y, x);
      } else if (m.channels() == 3) {
        auto px = m.at<cv::Vec3b>(y, x);
        img.at(x, y, 0) = px[2];
        img.at(x, y, 1) = px[1];
        img.at(x, y, 2) = px[0];
      } else {
        auto px = m.at<cv::Vec4b>(y, x);  // drop alpha
        img.at(x, y, 0) = px[2];
        img.at(x, y, 1) = px[1];
        img.at(x, y, 2) = px[0];
      }
    }
  return img;
}

}  // namespace detail

inline void write_png(const ImageU8& img, const std::filesystem::path& path) {
  if (!cv::imwrite(path.string(), detail::to_mat(img)))
    fail(Errc::io_error, "cannot write " + path.string());
}

inline void write_png16(const ImageU16& img, const std::filesystem::path& path) {
  if (!cv::imwrite(path.string(), detail::to_mat(img)))
    fail(Errc::io_error, "cannot write " + path.string());
}

inline ImageU8 read_image_u8(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) fail(Errc::io_error, "cannot read " + path.string());
  if (m.depth() != CV_8U) fail(Errc::io_error, path.string() + ": expected 8-bit image");
  return detail::u8_from_mat(m);
}

inline ImageU16 read_png16(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) fail(Errc::io_error, "cannot read " + path.string());
  if (m.type() != CV_16UC1) fail(Errc::io_error, path.string() + ": expected 16-bit gray PNG");
  ImageU16 img(m.cols, m.rows, 1);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) img.at(x, y) = m.at<uint16_t>(y, x);
  return img;
}

inline std::vector<uint8_t> encode_png(const ImageU8& img) {
  std::vector<uint8_t> buf;
  if (!cv::imencode(".png", detail::to_mat(img), buf))
    fail(Errc::io_error, "png encode failed");
  return buf;
}

inline ImageU8 decode_png(const std::vector<uint8_t>& bytes) {
  cv::Mat m = cv::imdecode(bytes, cv::IMREAD_UNCHANGED);
  if (m.empty() || m.depth() != CV_8U) fail(Errc::io_error, "png decode failed");
  return detail::u8_from_mat(m);
}

// --- base64 (used by the texturing wire protocol) ---

inline std::string base64_encode(const std::vector<uint8_t>& in) {
  static const char* tbl = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  size_t i = 0;
  for (; i + 3 <= in.size(); i += 3) {
    uint32_t v = (in[i] << 16) | (in[i + 1] << 8) | in[i + 2];
    out.push_back(tbl[(v >> 18) & 63]);
    out.push_back(tbl[(v >> 12) & 63]);
    out.push_back(tbl[(v >> 6) & 63]);
    out.push_back(tbl[v & 63]);
  }
  if (i + 1 == in.size()) {
    uint32_t v = in[i] << 16;
    out.push_back(tbl[(v >> 18) & 63]);
    out.push_back(tbl[(v >> 12) & 63]);
    out += "==";
  } else if (i + 2 == in.size()) {
    uint32_t v = (in[i] << 16) | (in[i + 1] << 8);
    out.push_back(tbl[(v >> 18) & 63]);
    out.push_back(tbl[(v >> 12) & 63]);
    out.push_back(tbl[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

inline std::vector<uint8_t> base64_decode(const std::string& in) {
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<uint8_t> out;
  uint32_t acc = 0;
  int bits = 0;
  for (char c : in) {
    if (c == '=' || c == '\n' || c == '\r') continue;
    int v = val(c);
    if (v < 0) fail(Errc::parse_error, "invalid base64 character");
    acc = (acc << 6) | static_cast<uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<uint8_t>((acc >> bits) & 0xff));
    }
  }
  return out;
}

inline std::string image_to_base64_png(const ImageU8& img) {
  return base64_encode(encode_png(img));
}

inline ImageU8 base64_png_to_image(const std::string& b64) {
  return decode_png(base64_decode(b64));
}

}  // namespace dsg
