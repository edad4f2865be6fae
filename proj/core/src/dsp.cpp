#include "foley/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "fft.hpp"
#include "foley/error.hpp"

namespace foley::dsp {

std::size_t StftParams::num_frames(std::size_t signal_length) const noexcept {
  if (signal_length < window_size || hop_size == 0) return 0;
  return (signal_length - window_size) / hop_size + 1;
}

std::size_t StftParams::signal_length(std::size_t frames) const noexcept {
  if (frames == 0) return 0;
  return (frames - 1) * hop_size + window_size;
}

void StftParams::validate() const {
  if (fft_size == 0 || window_size == 0) throw InvalidArgument("stft: fft and window sizes must be positive");
  if (window_size > fft_size) {
    throw InvalidArgument("stft: window_size " + std::to_string(window_size) + " exceeds fft_size " +
                          std::to_string(fft_size));
  }
  if (hop_size == 0 || hop_size > window_size) {
    throw InvalidArgument("stft: hop_size must be in (0, window_size], got " + std::to_string(hop_size));
  }
}

void StftParams::validate_for_inversion() const {
  validate();
  const double ov = overlap();
  if (ov < 0.25 - 1e-12 || ov > 0.75 + 1e-12) {
    throw InvalidArgument("stft: overlap " + std::to_string(ov) + " outside [0.25, 0.75]");
  }
}

const char* to_string(SpectrogramMode mode) noexcept {
  switch (mode) {
    case SpectrogramMode::magnitude: return "magnitude";
    case SpectrogramMode::power: return "power";
    case SpectrogramMode::sqrt_magnitude: return "sqrt_magnitude";
  }
  return "unknown";
}

void Spectrogram::validate() const {
  if (values.size() != num_frames * num_bins) {
    throw ShapeError("spectrogram: " + std::to_string(values.size()) + " values for " +
                     std::to_string(num_frames) + "x" + std::to_string(num_bins));
  }
  if (num_bins != params.num_bins()) {
    throw ShapeError("spectrogram: " + std::to_string(num_bins) + " bins but fft_size " +
                     std::to_string(params.fft_size) + " implies " + std::to_string(params.num_bins()));
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i]) || values[i] < 0.0) {
      throw InvalidArgument("spectrogram: entry " + std::to_string(i) + " is negative or non-finite");
    }
  }
}

std::vector<double> hann_window(std::size_t n) {
  if (n == 0) throw InvalidArgument("hann_window: length must be >= 1");
  std::vector<double> w(n);
  const double step = 2.0 * std::numbers::pi / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) w[k] = 0.5 * (1.0 - std::cos(step * static_cast<double>(k)));
  return w;
}

ComplexSpectrum stft(const AudioClip& clip, const StftParams& params) {
  params.validate();
  if (clip.samples.size() < params.window_size) {
    throw InvalidArgument("stft: clip of " + std::to_string(clip.samples.size()) +
                          " samples is shorter than one window (" + std::to_string(params.window_size) + ")");
  }
  const auto window = hann_window(params.window_size);
  ComplexSpectrum out;
  out.num_frames = params.num_frames(clip.samples.size());
  out.num_bins = params.num_bins();
  out.values.resize(out.num_frames * out.num_bins);

  detail::RealFft fft(params.fft_size);
  std::vector<double> frame(params.window_size);
  for (std::size_t t = 0; t < out.num_frames; ++t) {
    const double* src = clip.samples.data() + t * params.hop_size;
    for (std::size_t i = 0; i < params.window_size; ++i) frame[i] = src[i] * window[i];
    fft.forward(frame, {out.values.data() + t * out.num_bins, out.num_bins});
  }
  return out;
}

Spectrogram spectrogram_of(const AudioClip& clip, const StftParams& params, SpectrogramMode mode) {
  const auto spectrum = stft(clip, params);
  Spectrogram spec;
  spec.num_frames = spectrum.num_frames;
  spec.num_bins = spectrum.num_bins;
  spec.mode = mode;
  spec.params = params;
  spec.sample_rate = clip.sample_rate;
  spec.values.resize(spectrum.values.size());
  for (std::size_t i = 0; i < spectrum.values.size(); ++i) {
    const double mag = std::abs(spectrum.values[i]);
    switch (mode) {
      case SpectrogramMode::magnitude: spec.values[i] = mag; break;
      case SpectrogramMode::power: spec.values[i] = std::norm(spectrum.values[i]); break;
      case SpectrogramMode::sqrt_magnitude: spec.values[i] = std::sqrt(mag); break;
    }
  }
  return spec;
}

Spectrogram convert_mode(const Spectrogram& spec, SpectrogramMode target) {
  Spectrogram out = spec;
  out.mode = target;
  if (spec.mode == target) return out;
  for (double& v : out.values) {
    double mag = v;
    if (spec.mode == SpectrogramMode::power) mag = std::sqrt(v);
    if (spec.mode == SpectrogramMode::sqrt_magnitude) mag = v * v;
    switch (target) {
      case SpectrogramMode::magnitude: v = mag; break;
      case SpectrogramMode::power: v = mag * mag; break;
      case SpectrogramMode::sqrt_magnitude: v = std::sqrt(mag); break;
    }
  }
  return out;
}

AudioClip istft_ola(const ComplexSpectrum& spectrum, const StftParams& params, int sample_rate) {
  params.validate_for_inversion();
  if (spectrum.num_bins != params.num_bins() ||
      spectrum.values.size() != spectrum.num_frames * spectrum.num_bins) {
    throw InvalidArgument("istft_ola: spectrum shape " + std::to_string(spectrum.num_frames) + "x" +
                          std::to_string(spectrum.num_bins) + " inconsistent with fft_size " +
                          std::to_string(params.fft_size));
  }
  AudioClip clip;
  clip.sample_rate = sample_rate;
  if (spectrum.num_frames == 0) return clip;

  const auto window = hann_window(params.window_size);
  const std::size_t length = params.signal_length(spectrum.num_frames);
  clip.samples.assign(length, 0.0);
  std::vector<double> norm(length, 0.0);
  std::vector<double> frame(params.fft_size);
  detail::RealFft fft(params.fft_size);

  for (std::size_t t = 0; t < spectrum.num_frames; ++t) {
    fft.inverse({spectrum.values.data() + t * spectrum.num_bins, spectrum.num_bins}, frame);
    const std::size_t start = t * params.hop_size;
    for (std::size_t i = 0; i < params.window_size; ++i) {
      clip.samples[start + i] += window[i] * frame[i];
      norm[start + i] += window[i] * window[i];
    }
  }
  // The divisor is floored relative to its peak. Near the outer edges the
  // window-square sum tends to zero, and dividing by it would amplify any
  // inconsistency between frames (as in Griffin-Lim iterates) without bound.
  // Where the sum clears the floor, reconstruction is exact.
  constexpr double kRelativeFloor = 1e-3;
  const double floor = kRelativeFloor * *std::max_element(norm.begin(), norm.end());
  if (floor == 0.0) return clip;  // all-zero window: output is already silent
  for (std::size_t n = 0; n < length; ++n) clip.samples[n] /= std::max(norm[n], floor);
  return clip;
}

namespace {

// Frobenius distance between |X| and target over the full two-sided spectrum,
// i.e. interior bins counted twice.
double two_sided_distance(const ComplexSpectrum& x, const Spectrogram& target, std::size_t fft_size) {
  double acc = 0.0;
  const bool has_nyquist = fft_size % 2 == 0;
  for (std::size_t t = 0; t < x.num_frames; ++t) {
    for (std::size_t k = 0; k < x.num_bins; ++k) {
      const double d = std::abs(x.at(t, k)) - target.at(t, k);
      const bool edge = k == 0 || (has_nyquist && k + 1 == x.num_bins);
      acc += (edge ? 1.0 : 2.0) * d * d;
    }
  }
  return std::sqrt(acc);
}

}  // namespace

GriffinLimResult griffin_lim(const Spectrogram& magnitude, const StftParams& params, std::size_t iterations) {
  if (iterations == 0) throw InvalidArgument("griffin_lim: iterations must be >= 1");
  params.validate_for_inversion();
  if (magnitude.num_bins != params.num_bins() ||
      magnitude.values.size() != magnitude.num_frames * magnitude.num_bins) {
    throw InvalidArgument("griffin_lim: magnitude shape inconsistent with params");
  }
  for (std::size_t i = 0; i < magnitude.values.size(); ++i) {
    if (!(magnitude.values[i] >= 0.0) || !std::isfinite(magnitude.values[i])) {
      throw InvalidArgument("griffin_lim: magnitude entry " + std::to_string(i) + " is negative or non-finite");
    }
  }

  GriffinLimResult result;
  ComplexSpectrum estimate;
  estimate.num_frames = magnitude.num_frames;
  estimate.num_bins = magnitude.num_bins;
  estimate.values.resize(magnitude.values.size());
  for (std::size_t i = 0; i < magnitude.values.size(); ++i) estimate.values[i] = {magnitude.values[i], 0.0};

  if (magnitude.num_frames == 0) {
    result.clip.sample_rate = magnitude.sample_rate;
    result.consistency_errors.assign(iterations, 0.0);
    return result;
  }

  result.consistency_errors.reserve(iterations);
  for (std::size_t it = 0; it < iterations; ++it) {
    result.clip = istft_ola(estimate, params, magnitude.sample_rate);
    const auto consistent = stft(result.clip, params);
    result.consistency_errors.push_back(two_sided_distance(consistent, magnitude, params.fft_size));
    for (std::size_t i = 0; i < estimate.values.size(); ++i) {
      const double mag = std::abs(consistent.values[i]);
      estimate.values[i] = mag > 0.0 ? consistent.values[i] * (magnitude.values[i] / mag)
                                     : std::complex<double>{magnitude.values[i], 0.0};
    }
  }
  return result;
}

double normalized_cross_correlation(const AudioClip& a, const AudioClip& b, double max_lag_seconds) {
  if (a.sample_rate != b.sample_rate) {
    throw InvalidArgument("ncc: sample rates differ (" + std::to_string(a.sample_rate) + " vs " +
                          std::to_string(b.sample_rate) + ")");
  }
  if (max_lag_seconds < 0.0) throw InvalidArgument("ncc: negative lag window");
  const std::size_t n = std::min(a.size(), b.size());
  if (n == 0) throw UndefinedCorrelation("ncc: empty input");

  auto centered = [n](const std::vector<double>& x) {
    std::vector<double> out(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n));
    double mean = 0.0;
    for (double v : out) mean += v;
    mean /= static_cast<double>(n);
    for (double& v : out) v -= mean;
    return out;
  };
  const auto xa = centered(a.samples);
  const auto xb = centered(b.samples);
  double ea = 0.0;
  double eb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ea += xa[i] * xa[i];
    eb += xb[i] * xb[i];
  }
  // Relative floor: a constant signal leaves only rounding residue after centering.
  auto negligible = [](double energy, const std::vector<double>& raw, std::size_t len) {
    double total = 0.0;
    for (std::size_t i = 0; i < len; ++i) total += raw[i] * raw[i];
    return energy <= 1e-24 * static_cast<double>(len) || energy <= 1e-20 * total;
  };
  if (negligible(ea, a.samples, n) || negligible(eb, b.samples, n)) {
    throw UndefinedCorrelation("ncc: zero-energy input");
  }

  const auto max_lag = std::min<std::size_t>(
      n - 1, static_cast<std::size_t>(std::llround(max_lag_seconds * a.sample_rate)));
  std::size_t m = 1;
  while (m < 2 * n) m <<= 1;
  detail::RealFft fft(m);
  std::vector<std::complex<double>> fa(fft.bins());
  std::vector<std::complex<double>> fb(fft.bins());
  fft.forward(xa, fa);
  fft.forward(xb, fb);
  for (std::size_t k = 0; k < fa.size(); ++k) fa[k] = std::conj(fa[k]) * fb[k];
  std::vector<double> corr(m);
  fft.inverse(fa, corr);

  // corr[lag mod m] = sum_i a[i] b[i + lag]
  double best = corr[0];
  for (std::size_t lag = 1; lag <= max_lag; ++lag) {
    best = std::max({best, corr[lag], corr[m - lag]});
  }
  return std::clamp(best / std::sqrt(ea * eb), -1.0, 1.0);
}

}  // namespace foley::dsp
