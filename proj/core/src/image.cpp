#include "foley/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>

#include "foley/error.hpp"

namespace foley::video {

GrayImage to_gray(const RgbImage& rgb) {
  GrayImage g(rgb.height, rgb.width);
  for (std::size_t i = 0; i < g.pixels.size(); ++i) {
    const double* p = &rgb.pixels[i * 3];
    g.pixels[i] = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
  }
  return g;
}

RgbImage gray_to_rgb(const GrayImage& gray) {
  RgbImage out(gray.height, gray.width);
  for (std::size_t i = 0; i < gray.pixels.size(); ++i) {
    out.pixels[i * 3] = out.pixels[i * 3 + 1] = out.pixels[i * 3 + 2] = gray.pixels[i];
  }
  return out;
}

namespace {

struct Tap {
  std::size_t lo;
  std::size_t hi;
  double frac;
};

std::vector<Tap> bilinear_taps(std::size_t src, std::size_t dst) {
  std::vector<Tap> taps(dst);
  const double scale = static_cast<double>(src) / static_cast<double>(dst);
  for (std::size_t i = 0; i < dst; ++i) {
    double pos = (static_cast<double>(i) + 0.5) * scale - 0.5;
    pos = std::clamp(pos, 0.0, static_cast<double>(src - 1));
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    taps[i] = {lo, std::min(lo + 1, src - 1), pos - static_cast<double>(lo)};
  }
  return taps;
}

// a + f (b - a) keeps constant regions exactly constant.
inline double lerp(double a, double b, double f) { return a + f * (b - a); }

template <typename Fetch, typename Store>
void resample(std::size_t sh, std::size_t sw, std::size_t dh, std::size_t dw, Fetch fetch, Store store) {
  if (sh == 0 || sw == 0 || dh == 0 || dw == 0) throw InvalidArgument("resize: empty image or target");
  const auto rows = bilinear_taps(sh, dh);
  const auto cols = bilinear_taps(sw, dw);
  for (std::size_t r = 0; r < dh; ++r) {
    for (std::size_t c = 0; c < dw; ++c) {
      const auto& ty = rows[r];
      const auto& tx = cols[c];
      const double top = lerp(fetch(ty.lo, tx.lo), fetch(ty.lo, tx.hi), tx.frac);
      const double bottom = lerp(fetch(ty.hi, tx.lo), fetch(ty.hi, tx.hi), tx.frac);
      store(r, c, lerp(top, bottom, ty.frac));
    }
  }
}

}  // namespace

GrayImage resize_bilinear(const GrayImage& img, std::size_t height, std::size_t width) {
  if (img.height == height && img.width == width) return img;
  GrayImage out(height, width);
  resample(
      img.height, img.width, height, width, [&](std::size_t r, std::size_t c) { return img.at(r, c); },
      [&](std::size_t r, std::size_t c, double v) { out.at(r, c) = v; });
  return out;
}

RgbImage resize_bilinear(const RgbImage& img, std::size_t height, std::size_t width) {
  if (img.height == height && img.width == width) return img;
  RgbImage out(height, width);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    resample(
        img.height, img.width, height, width, [&](std::size_t r, std::size_t c) { return img.at(r, c, ch); },
        [&](std::size_t r, std::size_t c, double v) { out.at(r, c, ch) = v; });
  }
  return out;
}

namespace {

RgbImage decode_pnm(const std::vector<unsigned char>& bytes, const std::string& name) {
  std::size_t pos = 2;
  auto next_int = [&]() -> long {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    long v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      any = true;
      if (v > 1'000'000) throw IngestError(name + ": header value too large");
    }
    if (!any) throw IngestError(name + ": malformed PNM header at byte " + std::to_string(pos));
    return v;
  };
  const bool color = bytes[1] == '6';
  const long w = next_int();
  const long h = next_int();
  const long maxval = next_int();
  if (w <= 0 || h <= 0) throw IngestError(name + ": empty image");
  if (maxval <= 0 || maxval > 255) throw IngestError(name + ": only 8-bit PNM is supported");
  ++pos;  // single whitespace before raster
  const std::size_t channels = color ? 3 : 1;
  const std::size_t need = static_cast<std::size_t>(w * h) * channels;
  if (bytes.size() < pos + need) throw IngestError(name + ": truncated raster");
  RgbImage img(static_cast<std::size_t>(h), static_cast<std::size_t>(w));
  const auto denom = static_cast<double>(maxval);
  for (std::size_t i = 0; i < static_cast<std::size_t>(w * h); ++i) {
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const unsigned char v = bytes[pos + i * channels + (color ? ch : 0)];
      img.pixels[i * 3 + ch] = v / denom;
    }
  }
  return img;
}

RgbImage decode_png(const std::filesystem::path& path) {
  const std::string name = path.string();
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> file(std::fopen(name.c_str(), "rb"), &std::fclose);
  if (!file) throw IngestError(name + ": cannot open");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IngestError(name + ": libpng init failed");
  }
  RgbImage img;
  std::vector<png_bytep> rows;
  std::vector<unsigned char> raster;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IngestError(name + ": corrupt PNG");
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  const auto w = png_get_image_width(png, info);
  const auto h = png_get_image_height(png, info);
  const auto rowbytes = png_get_rowbytes(png, info);
  if (rowbytes != static_cast<png_size_t>(w) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IngestError(name + ": unsupported PNG pixel layout");
  }
  raster.resize(rowbytes * h);
  rows.resize(h);
  for (png_uint_32 r = 0; r < h; ++r) rows[r] = raster.data() + r * rowbytes;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  img = RgbImage(h, w);
  for (std::size_t i = 0; i < raster.size(); ++i) img.pixels[i] = raster[i] / 255.0;
  return img;
}

}  // namespace

RgbImage read_image(const std::filesystem::path& path) {
  const std::string name = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError(name + ": cannot open");
  std::vector<unsigned char> head(8, 0);
  in.read(reinterpret_cast<char*>(head.data()), 8);
  const auto got = in.gcount();
  static constexpr unsigned char kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (got == 8 && std::equal(head.begin(), head.end(), kPngSig)) return decode_png(path);
  if (got >= 2 && head[0] == 'P' && (head[1] == '5' || head[1] == '6')) {
    in.clear();
    in.seekg(0);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_pnm(bytes, name);
  }
  throw IngestError(name + ": unrecognized image format (expected P5/P6 PNM or PNG)");
}

namespace {

void write_pnm(const std::filesystem::path& path, const char* magic, std::size_t w, std::size_t h,
               const std::vector<unsigned char>& raster) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << magic << "\n" << w << " " << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (!out) throw IoError("short write to " + path.string());
}

unsigned char quantize(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

void write_ppm(const RgbImage& img, const std::filesystem::path& path) {
  std::vector<unsigned char> raster(img.pixels.size());
  std::transform(img.pixels.begin(), img.pixels.end(), raster.begin(), quantize);
  write_pnm(path, "P6", img.width, img.height, raster);
}

void write_pgm(const GrayImage& img, const std::filesystem::path& path) {
  std::vector<unsigned char> raster(img.pixels.size());
  std::transform(img.pixels.begin(), img.pixels.end(), raster.begin(), quantize);
  write_pnm(path, "P5", img.width, img.height, raster);
}

}  // namespace foley::video
