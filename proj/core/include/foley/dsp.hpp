#pragma once

// Non-learned signal processing: windows, STFT, spectrograms, overlap-add
// inversion, Griffin-Lim phase recovery and waveform correlation.

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace foley::dsp {

struct AudioClip {
  std::vector<double> samples;
  int sample_rate = 44100;

  std::size_t size() const noexcept { return samples.size(); }
  double duration_seconds() const noexcept {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

enum class WindowKind { hann };

struct StftParams {
  std::size_t fft_size = 256;
  std::size_t window_size = 256;
  std::size_t hop_size = 128;
  WindowKind window = WindowKind::hann;

  std::size_t num_bins() const noexcept { return fft_size / 2 + 1; }
  /// Frames that fit entirely inside `signal_length` samples (no tail padding).
  std::size_t num_frames(std::size_t signal_length) const noexcept;
  /// Samples spanned by `frames` frames.
  std::size_t signal_length(std::size_t frames) const noexcept;
  double overlap() const noexcept {
    return 1.0 - static_cast<double>(hop_size) / static_cast<double>(window_size);
  }

  /// Framing sanity: 0 < hop <= window <= fft. Throws InvalidArgument.
  void validate() const;
  /// Additionally requires overlap in [25%, 75%], which inversion relies on.
  void validate_for_inversion() const;

  friend bool operator==(const StftParams&, const StftParams&) = default;
};

enum class SpectrogramMode { magnitude, power, sqrt_magnitude };

const char* to_string(SpectrogramMode mode) noexcept;

/// One-sided complex STFT, row-major [num_frames x num_bins].
struct ComplexSpectrum {
  std::size_t num_frames = 0;
  std::size_t num_bins = 0;
  std::vector<std::complex<double>> values;

  std::complex<double>& at(std::size_t frame, std::size_t bin) { return values[frame * num_bins + bin]; }
  const std::complex<double>& at(std::size_t frame, std::size_t bin) const {
    return values[frame * num_bins + bin];
  }
};

/// Nonnegative time-frequency matrix, row-major [num_frames x num_bins].
struct Spectrogram {
  std::size_t num_frames = 0;
  std::size_t num_bins = 0;
  std::vector<double> values;
  SpectrogramMode mode = SpectrogramMode::magnitude;
  StftParams params;
  int sample_rate = 44100;

  double& at(std::size_t frame, std::size_t bin) { return values[frame * num_bins + bin]; }
  double at(std::size_t frame, std::size_t bin) const { return values[frame * num_bins + bin]; }
  std::span<const double> frame(std::size_t t) const {
    return {values.data() + t * num_bins, num_bins};
  }

  /// Checks shape and that every entry is finite and >= 0.
  void validate() const;
};

/// Periodic Hann window: w[k] = 0.5 (1 - cos(2 pi k / n)).
std::vector<double> hann_window(std::size_t n);

ComplexSpectrum stft(const AudioClip& clip, const StftParams& params);

Spectrogram spectrogram_of(const AudioClip& clip, const StftParams& params, SpectrogramMode mode);

/// Converts between spectrogram modes elementwise.
Spectrogram convert_mode(const Spectrogram& spec, SpectrogramMode target);

/// Windowed overlap-add with window-square normalization. The divisor is
/// floored at 1e-3 of its peak, which damps only the outermost edge samples.
/// Output length is (frames - 1) * hop + window.
AudioClip istft_ola(const ComplexSpectrum& spectrum, const StftParams& params, int sample_rate);

struct GriffinLimResult {
  AudioClip clip;
  /// e_i = || |STFT(x_i)| - target ||_F after each iteration i = 1..n.
  std::vector<double> consistency_errors;
};

/// Phase recovery from a magnitude-mode spectrogram, starting from zero phase.
GriffinLimResult griffin_lim(const Spectrogram& magnitude, const StftParams& params,
                             std::size_t iterations = 16);

/// Max over lags within +-max_lag_seconds of the zero-mean cross-correlation,
/// normalized by the full-signal energies. Inputs are truncated to the
/// shorter length. Throws UndefinedCorrelation on a zero-energy input.
double normalized_cross_correlation(const AudioClip& a, const AudioClip& b,
                                    double max_lag_seconds = 0.5);

}  // namespace foley::dsp
