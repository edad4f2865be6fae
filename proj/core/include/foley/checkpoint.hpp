#pragma once

// Binary containers for trained models and spectrograms.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "foley/config.hpp"
#include "foley/dsp.hpp"
#include "foley/nn.hpp"

namespace foley {

enum class Precision : std::uint8_t { f32 = 0, f64 = 1 };

struct StoredTensor {
  std::string name;
  ad::Shape shape;
  std::vector<double> values;

  friend bool operator==(const StoredTensor&, const StoredTensor&) = default;
};

/// Layout: magic "AFCKPT01", u32 version, model tag, config text, u64 config
/// hash, u64 seed, u8 precision, u32 tensor count, then per tensor: name,
/// u32 rank, u64 dims, payload. Strings are u32 length + UTF-8 bytes.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string model;
  std::string config_text;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  Precision precision = Precision::f64;
  std::vector<StoredTensor> tensors;

  /// Snapshot of named parameters under the given run configuration.
  static Checkpoint capture(const std::string& model, const RunConfig& config, const nn::ParamList& params,
                            Precision precision = Precision::f64);

  RunConfig config() const { return RunConfig::parse(config_text); }

  /// Copies stored values into `params`; every parameter must be present with
  /// a matching shape.
  void restore(const nn::ParamList& params) const;

  /// Rejects checkpoints whose class count or bin count differ from `expected`.
  void check_compatible(const RunConfig& expected) const;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

void checkpoint_save(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Decodes fully before returning; throws CodecError on truncation or a bad
/// magic and ConfigError when the stored hash disagrees with the stored config.
Checkpoint checkpoint_load(const std::filesystem::path& path);

/// Spectrogram container: magic "AFSPEC01", u32 frames, bins, fft, window,
/// hop, sample rate, u8 mode, f64 payload.
void spectrogram_save(const dsp::Spectrogram& spec, const std::filesystem::path& path);
dsp::Spectrogram spectrogram_load(const std::filesystem::path& path);

}  // namespace foley
