#pragma once

// Clip inventory and the procedural audio-visual corpus generator.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "foley/dsp.hpp"
#include "foley/image.hpp"

namespace foley::data {

/// The twelve default sound classes.
const std::vector<std::string>& default_class_names();

enum class Split { train, test };

const char* to_string(Split s) noexcept;

struct ManifestEntry {
  std::string clip_id;
  std::string label;
  /// Relative paths resolve against the manifest's directory.
  std::filesystem::path frames_path;
  std::filesystem::path wav_path;
  double fps = 0.0;
  double duration_seconds = 0.0;
  Split split = Split::train;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  std::vector<std::string> class_names;
  std::vector<ManifestEntry> entries;
  /// Directory that relative entry paths resolve against.
  std::filesystem::path root;

  /// Class index of an entry's label; throws ConfigError for unknown labels.
  std::size_t class_index(const std::string& label) const;
  /// Throws InvalidArgument when no entry has that id.
  const ManifestEntry& find(const std::string& clip_id) const;
  std::filesystem::path resolve(const std::filesystem::path& p) const;
  /// Labels known, ids unique, durations and fps positive.
  void validate() const;

  friend bool operator==(const DatasetManifest& a, const DatasetManifest& b) {
    return a.class_names == b.class_names && a.entries == b.entries;
  }
};

/// TSV: a "#classes" line, a column header, then one entry per line.
void manifest_save(const DatasetManifest& manifest, const std::filesystem::path& path);
/// Throws CodecError carrying the 1-based line number on malformed input.
DatasetManifest manifest_load(const std::filesystem::path& path);

/// Per-class shuffle, then the first round(train_fraction * n) clips (at
/// least one, at most n - 1 when n >= 2) go to train.
void stratified_split(DatasetManifest& manifest, double train_fraction, std::uint64_t seed);

struct CorpusOptions {
  std::size_t num_classes = 12;
  std::size_t clips_per_class = 8;
  std::uint64_t seed = 1;
  int sample_rate = 8000;
  double duration_seconds = 2.0;
  double fps = 16.0;
  std::size_t frame_size = 64;
  /// FFT size whose bin centres the class tones sit on.
  std::size_t fft_size = 256;
  double train_fraction = 0.8;
  /// When false every class is drawn in the same neutral colour, so a single
  /// frame's colour says nothing about the class.
  bool class_colours = true;
};

/// Audio and frames of one procedurally generated clip.
struct SyntheticClip {
  dsp::AudioClip audio;
  std::vector<video::RgbImage> frames;
};

/// Class tone frequency in Hz: an even bin centre, 4 bins apart per class.
double class_tone_hz(std::size_t klass, const CorpusOptions& options);

/// Deterministic in (options.seed, klass, index).
SyntheticClip synthesize_clip(std::size_t klass, std::size_t index, const CorpusOptions& options);

/// Writes clips/<id>/frames/NNNN.ppm, clips/<id>/audio.wav and manifest.tsv
/// under `out_dir` and returns the manifest.
DatasetManifest generate_synthetic_corpus(const std::filesystem::path& out_dir, const CorpusOptions& options);

}  // namespace foley::data
