#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace foley::video {

/// Single-plane image, row-major, values nominally in [0, 1].
struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  GrayImage() = default;
  GrayImage(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w, fill) {}

  double& at(std::size_t r, std::size_t c) { return pixels[r * width + c]; }
  double at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// Interleaved RGB, row-major, values in [0, 1].
struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  RgbImage() = default;
  RgbImage(std::size_t h, std::size_t w) : height(h), width(w), pixels(h * w * 3, 0.0) {}

  double& at(std::size_t r, std::size_t c, std::size_t ch) { return pixels[(r * width + c) * 3 + ch]; }
  double at(std::size_t r, std::size_t c, std::size_t ch) const { return pixels[(r * width + c) * 3 + ch]; }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Luma = 0.299 R + 0.587 G + 0.114 B.
GrayImage to_gray(const RgbImage& rgb);
RgbImage gray_to_rgb(const GrayImage& gray);

/// Bilinear resampling with half-pixel centers; constant images stay exactly constant.
GrayImage resize_bilinear(const GrayImage& img, std::size_t height, std::size_t width);
RgbImage resize_bilinear(const RgbImage& img, std::size_t height, std::size_t width);

/// Decodes binary PGM (P5), PPM (P6) or 8-bit PNG. Gray inputs are replicated to RGB.
/// Throws IngestError naming the file.
RgbImage read_image(const std::filesystem::path& path);

void write_ppm(const RgbImage& img, const std::filesystem::path& path);
void write_pgm(const GrayImage& img, const std::filesystem::path& path);

}  // namespace foley::video
