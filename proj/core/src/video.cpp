#include "foley/video.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "foley/error.hpp"

namespace foley::video {
namespace {

constexpr char kRawMagic[8] = {'A', 'F', 'R', 'A', 'W', '0', '0', '1'};

std::uint32_t get_u32(const std::vector<unsigned char>& b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | static_cast<std::uint32_t>(b[at + 1]) << 8 |
         static_cast<std::uint32_t>(b[at + 2]) << 16 | static_cast<std::uint32_t>(b[at + 3]) << 24;
}

FrameSequence load_raw_planes(const std::filesystem::path& path, std::size_t height, std::size_t width,
                              double fps) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError(path.string() + ": cannot open");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 20 || !std::equal(kRawMagic, kRawMagic + 8, bytes.begin())) {
    throw IngestError(path.string() + ": not a raw-plane frame file");
  }
  const std::size_t h = get_u32(bytes, 8);
  const std::size_t w = get_u32(bytes, 12);
  const std::size_t count = get_u32(bytes, 16);
  if (h == 0 || w == 0 || count == 0) throw IngestError(path.string() + ": empty frame container");
  if (bytes.size() - 20 < h * w * count) throw IngestError(path.string() + ": truncated frame payload");
  FrameSequence seq;
  seq.fps = fps;
  for (std::size_t f = 0; f < count; ++f) {
    GrayImage g(h, w);
    for (std::size_t i = 0; i < h * w; ++i) g.pixels[i] = bytes[20 + f * h * w + i] / 255.0;
    if (f == 0) seq.first_rgb = resize_bilinear(gray_to_rgb(g), height, width);
    seq.frames.push_back(resize_bilinear(g, height, width));
  }
  return seq;
}

bool is_frame_file(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".pgm" || ext == ".ppm" || ext == ".png" || ext == ".pnm";
}

}  // namespace

FrameSequence load_frames(const std::filesystem::path& source, std::size_t height, std::size_t width,
                          double fps) {
  if (!(fps > 0.0)) throw InvalidArgument("load_frames: fps must be positive");
  if (height == 0 || width == 0) throw InvalidArgument("load_frames: target size must be positive");
  if (std::filesystem::is_regular_file(source)) return load_raw_planes(source, height, width, fps);
  if (!std::filesystem::is_directory(source)) throw IngestError(source.string() + ": no such frame source");

  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(source)) {
    if (entry.is_regular_file() && is_frame_file(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IngestError(source.string() + ": directory contains no frames");

  FrameSequence seq;
  seq.fps = fps;
  std::size_t src_h = 0;
  std::size_t src_w = 0;
  for (const auto& file : files) {
    const RgbImage rgb = read_image(file);
    if (seq.frames.empty()) {
      src_h = rgb.height;
      src_w = rgb.width;
      seq.first_rgb = resize_bilinear(rgb, height, width);
    } else if (rgb.height != src_h || rgb.width != src_w) {
      throw IngestError(file.string() + ": frame is " + std::to_string(rgb.width) + "x" +
                        std::to_string(rgb.height) + ", expected " + std::to_string(src_w) + "x" +
                        std::to_string(src_h));
    }
    seq.frames.push_back(resize_bilinear(to_gray(rgb), height, width));
  }
  return seq;
}

void save_raw_planes(const FrameSequence& seq, const std::filesystem::path& path) {
  std::vector<unsigned char> out(kRawMagic, kRawMagic + 8);
  auto put = [&out](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
  };
  put(static_cast<std::uint32_t>(seq.height()));
  put(static_cast<std::uint32_t>(seq.width()));
  put(static_cast<std::uint32_t>(seq.size()));
  for (const auto& f : seq.frames) {
    for (double v : f.pixels) out.push_back(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot write " + path.string());
  file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

FrameSequence interpolate_frames(const FrameSequence& seq, std::size_t factor) {
  if (factor == 0) throw InvalidArgument("interpolate_frames: factor must be >= 1");
  if (factor == 1) return seq;
  if (seq.size() < 2) throw InvalidArgument("interpolate_frames: need at least 2 frames");
  FrameSequence out;
  out.fps = seq.fps * static_cast<double>(factor);
  out.first_rgb = seq.first_rgb;
  out.frames.reserve(factor * (seq.size() - 1) + 1);
  for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
    const auto& a = seq.frames[i];
    const auto& b = seq.frames[i + 1];
    out.frames.push_back(a);
    for (std::size_t k = 1; k < factor; ++k) {
      const double w = static_cast<double>(k) / static_cast<double>(factor);
      GrayImage mid(a.height, a.width);
      for (std::size_t p = 0; p < mid.pixels.size(); ++p) {
        mid.pixels[p] = a.pixels[p] + w * (b.pixels[p] - a.pixels[p]);
      }
      out.frames.push_back(std::move(mid));
    }
  }
  out.frames.push_back(seq.frames.back());
  return out;
}

FrameSequence replicate_frames(const FrameSequence& seq, std::size_t factor) {
  if (factor == 0) throw InvalidArgument("replicate_frames: factor must be >= 1");
  FrameSequence out;
  out.fps = seq.fps * static_cast<double>(factor);
  out.first_rgb = seq.first_rgb;
  out.frames.reserve(seq.size() * factor);
  for (const auto& f : seq.frames) {
    for (std::size_t k = 0; k < factor; ++k) out.frames.push_back(f);
  }
  return out;
}

std::size_t interpolation_factor_for(double fps, double target_fps) {
  if (!(fps > 0.0) || !(target_fps > 0.0)) throw InvalidArgument("interpolation_factor_for: rates must be positive");
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(target_fps / fps - 1e-12)));
}

SpaceTimeImage space_time_image(const FrameSequence& seq, std::size_t t) {
  if (seq.frames.empty()) throw InvalidArgument("space_time_image: empty sequence");
  if (t >= seq.size()) {
    throw InvalidArgument("space_time_image: index " + std::to_string(t) + " out of range for " +
                          std::to_string(seq.size()) + " frames");
  }
  const std::size_t prev = t == 0 ? 0 : t - 1;
  const std::size_t next = std::min(t + 1, seq.size() - 1);
  return SpaceTimeImage{{seq.frames[prev], seq.frames[t], seq.frames[next]}};
}

std::vector<std::size_t> sample_representative_indices(std::size_t n, std::size_t count, SegmentMode mode) {
  if (count == 0) throw InvalidArgument("sample_representative_frames: count must be >= 1");
  const std::size_t span = mode == SegmentMode::early ? std::max<std::size_t>(1, n / 4) : n;
  if (count > span) {
    throw InvalidArgument("sample_representative_frames: requested " + std::to_string(count) + " frames but only " +
                          std::to_string(span) + (mode == SegmentMode::early ? " in the first 25%" : " available"));
  }
  std::vector<std::size_t> idx(count);
  if (count == 1) {
    idx[0] = 0;
    return idx;
  }
  for (std::size_t i = 0; i < count; ++i) {
    // Integer rounding of i*(span-1)/(count-1); spacing >= 1 keeps it strictly increasing.
    idx[i] = (2 * i * (span - 1) + (count - 1)) / (2 * (count - 1));
  }
  return idx;
}

std::vector<GrayImage> sample_representative_frames(const FrameSequence& seq, std::size_t count,
                                                    SegmentMode mode) {
  std::vector<GrayImage> out;
  for (std::size_t i : sample_representative_indices(seq.size(), count, mode)) out.push_back(seq.frames[i]);
  return out;
}

}  // namespace foley::video
