#pragma once

// Spectrogram composition from a class-average base plus a residual, the
// robust log loss, and rendering of composed spectrograms to audio.

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "foley/dsp.hpp"
#include "foley/tensor.hpp"

namespace foley::synth {

/// Dense row-major [rows x cols] matrix of frame-indexed values. Unlike a
/// Spectrogram, entries may be negative.
struct FrameMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  static FrameMatrix zeros(std::size_t rows, std::size_t cols) { return {rows, cols, std::vector<double>(rows * cols)}; }
  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

struct ClassSpectrogramBank {
  dsp::StftParams params;
  int sample_rate = 44100;
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<std::string> names;
  std::vector<std::size_t> clip_counts;
  /// bases[k] is A_k, sqrt-magnitude, row-major [frames x bins].
  std::vector<std::vector<double>> bases;

  std::size_t num_classes() const noexcept { return names.size(); }
  /// Throws BankError for an out-of-range class.
  std::span<const double> base(std::size_t klass) const;
  /// Throws BankError for an unknown name.
  std::size_t index_of(const std::string& name) const;
};

/// Per-bin linear time interpolation from rows.rows frames to `target` frames.
FrameMatrix align_frames(const FrameMatrix& rows, std::size_t target);

/// Averages sqrt-magnitude spectrograms per class after resampling each to
/// `target_frames`. `by_class[k]` holds class k's training spectrograms.
ClassSpectrogramBank build_bank(std::span<const std::vector<dsp::Spectrogram>> by_class,
                                std::span<const std::string> names, std::size_t target_frames);

/// Same, from raw training clips.
ClassSpectrogramBank build_bank(std::span<const std::vector<dsp::AudioClip>> by_class,
                                std::span<const std::string> names, const dsp::StftParams& params,
                                std::size_t target_frames);

/// Sqrt-magnitude spectrogram resampled to the bank's frame count.
FrameMatrix bank_aligned(const dsp::Spectrogram& sqrt_spec, const ClassSpectrogramBank& bank);

/// max(residual + A_k, 0); the base alone when `residual` is null.
dsp::Spectrogram compose_spectrogram(const FrameMatrix* residual, std::size_t klass, const ClassSpectrogramBank& bank);

/// S - A_k for a sqrt-magnitude spectrogram (resampled to the bank length first).
FrameMatrix extract_residual(const dsp::Spectrogram& sqrt_spec, std::size_t klass, const ClassSpectrogramBank& bank);

/// log(alpha + error^2).
double robust_loss_scalar(double error, double alpha = 1.0);
/// Derivative of log(alpha + error^2) with respect to error.
double robust_loss_derivative(double error, double alpha = 1.0);
/// Sum over frames of log(alpha + ||pred_t - target_t||^2).
double robust_energy(const FrameMatrix& pred, const FrameMatrix& target, double alpha = 1.0);
/// Differentiable form over [rows x cols] tensors; returns shape {1}.
ad::Tensor robust_energy(const ad::Tensor& pred, const ad::Tensor& target, double alpha = 1.0);

/// Squares the sqrt-magnitude input, recovers phase with Griffin-Lim and peak
/// normalizes to 0.9 (silence stays silent).
dsp::AudioClip synthesize_waveform(const dsp::Spectrogram& sqrt_spec, std::size_t gl_iterations = 16);

/// Bank container: magic "AFBANK01", framing header, class table, f64 payload.
void save_bank(const ClassSpectrogramBank& bank, const std::filesystem::path& path);
ClassSpectrogramBank load_bank(const std::filesystem::path& path);

}  // namespace foley::synth
