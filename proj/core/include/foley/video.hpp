#pragma once

// Frame ingest and the temporal preprocessing that precedes visual feature
// extraction: frame-rate upsampling, space-time composites and representative
// frame selection.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "foley/image.hpp"

namespace foley::video {

struct FrameSequence {
  std::vector<GrayImage> frames;
  double fps = 0.0;
  /// Color copy of frame 0, kept for the appearance branch of the encoder.
  RgbImage first_rgb;

  std::size_t size() const noexcept { return frames.size(); }
  std::size_t height() const noexcept { return frames.empty() ? 0 : frames.front().height; }
  std::size_t width() const noexcept { return frames.empty() ? 0 : frames.front().width; }
  double duration_seconds() const noexcept {
    return frames.empty() ? 0.0 : static_cast<double>(frames.size() - 1) / fps;
  }
};

/// Previous, current and next grayscale frame.
struct SpaceTimeImage {
  std::array<GrayImage, 3> channels;
};

/// Loads either a directory of P5/P6/PNG frames (sorted by filename) or a
/// raw-plane binary file, converts to grayscale and resizes to height x width.
FrameSequence load_frames(const std::filesystem::path& source, std::size_t height, std::size_t width,
                          double fps);

/// Raw-plane container: magic "AFRAW001", u32 height, u32 width, u32 count,
/// then count*height*width u8 samples row-major.
void save_raw_planes(const FrameSequence& seq, const std::filesystem::path& path);

/// Inserts factor-1 linear blends between neighbours: n -> factor*(n-1)+1 frames.
FrameSequence interpolate_frames(const FrameSequence& seq, std::size_t factor);

/// Repeats every frame factor times: n -> factor*n frames.
FrameSequence replicate_frames(const FrameSequence& seq, std::size_t factor);

/// Upsampling factor that brings `fps` to at least `target_fps`.
std::size_t interpolation_factor_for(double fps, double target_fps = 190.0);

/// Channels (t-1, t, t+1) with clamp-replicated boundaries.
SpaceTimeImage space_time_image(const FrameSequence& seq, std::size_t t);

enum class SegmentMode {
  full,
  /// First quarter of the clip only (early recognition).
  early,
};

/// Strictly increasing, uniformly spaced indices with both endpoints of the
/// sampled span included.
std::vector<std::size_t> sample_representative_indices(std::size_t n, std::size_t count, SegmentMode mode);

std::vector<GrayImage> sample_representative_frames(const FrameSequence& seq, std::size_t count,
                                                    SegmentMode mode);

}  // namespace foley::video
