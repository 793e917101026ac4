#include "facegen/image.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace facegen::img {

namespace {

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t read_u32_be(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4], const std::vector<std::uint8_t>& payload) {
  put_u32_be(out, static_cast<std::uint32_t>(payload.size()));
  const std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  const uLong crc = ::crc32(0L, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start));
  put_u32_be(out, static_cast<std::uint32_t>(crc));
}

std::vector<std::uint8_t> zlib_deflate(const std::uint8_t* data, std::size_t size) {
  uLongf bound = compressBound(static_cast<uLong>(size));
  std::vector<std::uint8_t> out(bound);
  if (compress2(out.data(), &bound, data, static_cast<uLong>(size), 6) != Z_OK)
    throw IoError("png: deflate failed");
  out.resize(bound);
  return out;
}

std::vector<std::uint8_t> zlib_inflate(const std::uint8_t* data, std::size_t size, std::size_t expected) {
  std::vector<std::uint8_t> out(expected);
  uLongf out_len = static_cast<uLongf>(expected);
  const int rc = uncompress(out.data(), &out_len, data, static_cast<uLong>(size));
  if (rc != Z_OK || out_len != expected) throw IoError("png: inflate failed or size mismatch");
  return out;
}

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace

ImageU8 make_image(int width, int height, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  if (width <= 0 || height <= 0) throw ValidationError("make_image: dimensions must be positive");
  ImageU8 im;
  im.width = width;
  im.height = height;
  im.rgb.resize(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < im.rgb.size(); i += 3) {
    im.rgb[i] = r;
    im.rgb[i + 1] = g;
    im.rgb[i + 2] = b;
  }
  return im;
}

std::vector<std::uint8_t> encode_png(const ImageU8& image) {
  if (image.empty()) throw ValidationError("encode_png: empty image");
  static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> out(sig, sig + 8);

  std::vector<std::uint8_t> ihdr;
  put_u32_be(ihdr, static_cast<std::uint32_t>(image.width));
  put_u32_be(ihdr, static_cast<std::uint32_t>(image.height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // color type: truecolor
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter method
  ihdr.push_back(0);  // no interlace
  append_chunk(out, "IHDR", ihdr);

  const std::size_t stride = static_cast<std::size_t>(image.width) * 3;
  std::vector<std::uint8_t> raw((stride + 1) * image.height);
  for (int y = 0; y < image.height; ++y) {
    raw[y * (stride + 1)] = 0;  // filter: none
    std::memcpy(raw.data() + y * (stride + 1) + 1, image.rgb.data() + y * stride, stride);
  }
  append_chunk(out, "IDAT", zlib_deflate(raw.data(), raw.size()));
  append_chunk(out, "IEND", {});
  return out;
}

ImageU8 decode_png(const std::uint8_t* data, std::size_t size) {
  static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (size < 8 || std::memcmp(data, sig, 8) != 0) throw IoError("png: bad signature");

  std::size_t pos = 8;
  int width = 0, height = 0, bit_depth = 0, color_type = 0;
  std::vector<std::uint8_t> idat;
  bool seen_ihdr = false, seen_iend = false;
  while (pos + 8 <= size && !seen_iend) {
    const std::uint32_t len = read_u32_be(data + pos);
    if (pos + 12 + len > size) throw IoError("png: truncated chunk");
    const char* type = reinterpret_cast<const char*>(data + pos + 4);
    const std::uint8_t* payload = data + pos + 8;
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw IoError("png: bad IHDR");
      width = static_cast<int>(read_u32_be(payload));
      height = static_cast<int>(read_u32_be(payload + 4));
      bit_depth = payload[8];
      color_type = payload[9];
      if (payload[12] != 0) throw IoError("png: interlaced images not supported");
      if (bit_depth != 8) throw IoError("png: only 8-bit depth supported");
      if (color_type != 0 && color_type != 2 && color_type != 4 && color_type != 6)
        throw IoError("png: unsupported color type");
      seen_ihdr = true;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), payload, payload + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      seen_iend = true;
    }
    pos += 12 + len;
  }
  if (!seen_ihdr || width <= 0 || height <= 0) throw IoError("png: missing or invalid IHDR");

  const int channels = color_type == 0 ? 1 : color_type == 2 ? 3 : color_type == 4 ? 2 : 4;
  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  std::vector<std::uint8_t> raw = zlib_inflate(idat.data(), idat.size(), (stride + 1) * height);

  // Undo per-scanline filters in place.
  std::vector<std::uint8_t> pixels(stride * height);
  for (int y = 0; y < height; ++y) {
    const std::uint8_t filter = raw[y * (stride + 1)];
    const std::uint8_t* src = raw.data() + y * (stride + 1) + 1;
    std::uint8_t* dst = pixels.data() + y * stride;
    const std::uint8_t* prev = y > 0 ? pixels.data() + (y - 1) * stride : nullptr;
    for (std::size_t i = 0; i < stride; ++i) {
      const int a = i >= static_cast<std::size_t>(channels) ? dst[i - channels] : 0;
      const int b = prev ? prev[i] : 0;
      const int c = (prev && i >= static_cast<std::size_t>(channels)) ? prev[i - channels] : 0;
      int v = src[i];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default: throw IoError("png: unknown scanline filter");
      }
      dst[i] = static_cast<std::uint8_t>(v & 0xff);
    }
  }

  ImageU8 out = make_image(width, height);
  for (std::size_t i = 0; i < static_cast<std::size_t>(width) * height; ++i) {
    const std::uint8_t* p = pixels.data() + i * channels;
    switch (color_type) {
      case 0: out.rgb[3 * i] = out.rgb[3 * i + 1] = out.rgb[3 * i + 2] = p[0]; break;
      case 4: out.rgb[3 * i] = out.rgb[3 * i + 1] = out.rgb[3 * i + 2] = p[0]; break;
      default:
        out.rgb[3 * i] = p[0];
        out.rgb[3 * i + 1] = p[1];
        out.rgb[3 * i + 2] = p[2];
    }
  }
  return out;
}

ImageU8 decode_png(const std::vector<std::uint8_t>& data) { return decode_png(data.data(), data.size()); }

std::vector<std::uint8_t> encode_ppm(const ImageU8& image) {
  if (image.empty()) throw ValidationError("encode_ppm: empty image");
  std::string header = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.rgb.begin(), image.rgb.end());
  return out;
}

ImageU8 decode_ppm(const std::uint8_t* data, std::size_t size) {
  std::string text(reinterpret_cast<const char*>(data), std::min<std::size_t>(size, 128));
  int width = 0, height = 0, maxval = 0, consumed = 0;
  if (std::sscanf(text.c_str(), "P6 %d %d %d%n", &width, &height, &maxval, &consumed) != 3 || maxval != 255)
    throw IoError("ppm: bad header");
  const std::size_t offset = static_cast<std::size_t>(consumed) + 1;  // single whitespace after maxval
  const std::size_t need = static_cast<std::size_t>(width) * height * 3;
  if (size < offset + need) throw IoError("ppm: truncated payload");
  ImageU8 out = make_image(width, height);
  std::memcpy(out.rgb.data(), data + offset, need);
  return out;
}

void write_image(const ImageU8& image, const std::string& path) {
  std::vector<std::uint8_t> bytes;
  if (path.ends_with(".png"))
    bytes = encode_png(image);
  else if (path.ends_with(".ppm"))
    bytes = encode_ppm(image);
  else
    throw ValidationError("write_image: unsupported extension (use .png or .ppm): " + path);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("write_image: cannot open " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write_image: short write to " + path);
}

ImageU8 read_image(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("read_image: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() >= 8 && bytes[1] == 'P' && bytes[2] == 'N' && bytes[3] == 'G')
    return decode_png(bytes.data(), bytes.size());
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes.data(), bytes.size());
  throw IoError("read_image: unrecognized format: " + path);
}

ImageU8 crop(const ImageU8& image, int x, int y, int w, int h) {
  if (w <= 0 || h <= 0) throw ValidationError("crop: empty box");
  if (x < 0 || y < 0 || x + w > image.width || y + h > image.height)
    throw ValidationError("crop: box outside image");
  ImageU8 out = make_image(w, h);
  for (int row = 0; row < h; ++row)
    std::memcpy(out.rgb.data() + static_cast<std::size_t>(row) * w * 3,
                image.pixel(x, y + row), static_cast<std::size_t>(w) * 3);
  return out;
}

ImageU8 resize_bilinear(const ImageU8& image, int out_w, int out_h) {
  if (out_w <= 0 || out_h <= 0) throw ValidationError("resize: dimensions must be positive");
  if (out_w == image.width && out_h == image.height) return image;
  ImageU8 out = make_image(out_w, out_h);
  const double sx = static_cast<double>(image.width) / out_w;
  const double sy = static_cast<double>(image.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    // Half-pixel center alignment.
    const double fy = std::min(std::max((y + 0.5) * sy - 0.5, 0.0), image.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::min(std::max((x + 0.5) * sx - 0.5, 0.0), image.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      for (int ch = 0; ch < 3; ++ch) {
        const double v = (1 - wy) * ((1 - wx) * image.pixel(x0, y0)[ch] + wx * image.pixel(x1, y0)[ch]) +
                         wy * ((1 - wx) * image.pixel(x0, y1)[ch] + wx * image.pixel(x1, y1)[ch]);
        out.rgb[3 * (static_cast<std::size_t>(y) * out_w + x) + ch] =
            static_cast<std::uint8_t>(std::min(255.0, std::max(0.0, std::round(v))));
      }
    }
  }
  return out;
}

}  // namespace facegen::img
