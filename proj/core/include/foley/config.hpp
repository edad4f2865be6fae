#pragma once

// Run configuration: every tunable of the pipeline in one place, stored as
// flat key=value text grouped into [sections].

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "foley/dsp.hpp"
#include "foley/features.hpp"
#include "foley/sequence.hpp"
#include "foley/trn.hpp"
#include "foley/video.hpp"

namespace foley {

enum class FrameUpsampling { interpolate, replicate };
enum class VisualInput { space_time, raw };

struct RunConfig {
  std::uint64_t seed = 1;
  std::size_t num_classes = 12;

  // [audio]
  int sample_rate = 8000;
  dsp::StftParams stft;
  /// Frame count of every class base; the spectrogram length of one clip.
  std::size_t bank_frames = 124;
  std::size_t gl_iterations = 16;

  // [video]
  std::size_t frame_height = 64;
  std::size_t frame_width = 64;
  std::size_t upsample_factor = 2;
  FrameUpsampling upsampling = FrameUpsampling::interpolate;
  VisualInput input = VisualInput::space_time;

  // [encoder]
  features::EncoderConfig encoder;
  /// Seeds the frozen convolutional trunk; independent of `seed` so model
  /// seeds can vary over one set of cached visual features.
  std::uint64_t encoder_seed = 7;

  // [fslstm]
  seq::SequenceKind sequence = seq::SequenceKind::fs_lstm;
  std::size_t hidden_dim = 32;
  std::size_t num_fast_cells = 4;
  double zoneout_prob = 0.05;
  double dropout_prob = 0.1;
  double forget_bias_init = 1.0;
  double lambda = 1.0;
  double alpha = 1.0;
  std::size_t fslstm_epochs = 100;
  std::size_t fslstm_batch = 16;
  double fslstm_lr = 0.003;

  // [trn]
  std::size_t max_scale = 8;
  std::size_t trn_hidden = 256;
  std::size_t subsets_per_scale = 8;
  std::size_t sampled_frames = 8;
  video::SegmentMode segment = video::SegmentMode::full;
  std::size_t trn_epochs = 30;
  std::size_t trn_batch = 16;
  double trn_lr = 0.001;

  // [retrieval]
  std::size_t retrieval_epochs = 30;
  std::size_t retrieval_batch = 8;
  double retrieval_lr = 0.003;

  /// Throws ConfigError on inconsistent values.
  void validate() const;

  seq::FsLstmConfig fslstm_config() const;
  trn::TrnConfig trn_config() const;
  std::size_t residual_dim() const { return stft.num_bins(); }
  std::size_t feature_dim() const { return 2 * encoder.output_dim; }

  /// Canonical text: every key, fixed order, round-trips exactly.
  std::string to_text() const;
  /// Starts from defaults and applies the given keys. Errors name the line.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// FNV-1a of to_text().
  std::uint64_t hash() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

std::uint64_t fnv1a(std::string_view bytes);

}  // namespace foley
