#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "facegen/errors.hpp"

namespace facegen::img {

// Interleaved 8-bit RGB.
struct ImageU8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // size = width * height * 3, row-major

  bool empty() const { return width == 0 || height == 0; }
  std::uint8_t* pixel(int x, int y) { return rgb.data() + 3 * (static_cast<std::size_t>(y) * width + x); }
  const std::uint8_t* pixel(int x, int y) const {
    return rgb.data() + 3 * (static_cast<std::size_t>(y) * width + x);
  }
};

ImageU8 make_image(int width, int height, std::uint8_t r = 0, std::uint8_t g = 0, std::uint8_t b = 0);

// PNG, 8-bit, no interlace. Decoding accepts grayscale / RGB / RGBA
// (gray +/- alpha expanded, alpha dropped) and all five scanline filters;
// encoding emits RGB with zlib-compressed unfiltered scanlines.
std::vector<std::uint8_t> encode_png(const ImageU8& image);
ImageU8 decode_png(const std::uint8_t* data, std::size_t size);
ImageU8 decode_png(const std::vector<std::uint8_t>& data);

// Binary PPM (P6), handy for quick fixtures.
std::vector<std::uint8_t> encode_ppm(const ImageU8& image);
ImageU8 decode_ppm(const std::uint8_t* data, std::size_t size);

void write_image(const ImageU8& image, const std::string& path);  // by extension: .png / .ppm
ImageU8 read_image(const std::string& path);

ImageU8 crop(const ImageU8& image, int x, int y, int w, int h);
ImageU8 resize_bilinear(const ImageU8& image, int out_w, int out_h);

// Model-space conversion: column vector of length 3*h*w in [-1, 1],
// channel-major (all red, then green, then blue; row-major within a
// channel). This is the flat layout the networks consume and produce.
template <class S>
Eigen::Matrix<S, Eigen::Dynamic, 1> to_column(const ImageU8& image) {
  const std::size_t plane = static_cast<std::size_t>(image.width) * image.height;
  Eigen::Matrix<S, Eigen::Dynamic, 1> col(3 * plane);
  for (std::size_t i = 0; i < plane; ++i)
    for (int ch = 0; ch < 3; ++ch)
      col[ch * plane + i] = S(image.rgb[3 * i + ch]) / S(127.5) - S(1);
  return col;
}

template <class S>
ImageU8 from_column(const Eigen::Matrix<S, Eigen::Dynamic, 1>& col, int width, int height) {
  const std::size_t plane = static_cast<std::size_t>(width) * height;
  if (static_cast<std::size_t>(col.size()) != 3 * plane)
    throw ValidationError("from_column: size does not match 3*w*h");
  ImageU8 out = make_image(width, height);
  for (std::size_t i = 0; i < plane; ++i)
    for (int ch = 0; ch < 3; ++ch) {
      const double v = (static_cast<double>(col[ch * plane + i]) + 1.0) * 127.5;
      out.rgb[3 * i + ch] = static_cast<std::uint8_t>(std::min(255.0, std::max(0.0, std::round(v))));
    }
  return out;
}

}  // namespace facegen::img
