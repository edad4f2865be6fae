#include "foley/synth.hpp"

#include <algorithm>
#include <cmath>

#include "binio.hpp"
#include "foley/error.hpp"
#include "foley/nn.hpp"

namespace foley::synth {

std::span<const double> ClassSpectrogramBank::base(std::size_t klass) const {
  if (klass >= bases.size()) {
    throw BankError("bank: class index " + std::to_string(klass) + " out of range (" +
                    std::to_string(bases.size()) + " classes)");
  }
  return bases[klass];
}

std::size_t ClassSpectrogramBank::index_of(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw BankError("bank: unknown class '" + name + "'");
  return static_cast<std::size_t>(it - names.begin());
}

namespace {

std::vector<double> resample_rows(std::span<const double> values, std::size_t rows, std::size_t cols,
                                  std::size_t target) {
  if (rows == target) return {values.begin(), values.end()};
  const auto m = nn::time_resample_matrix(rows, target);
  std::vector<double> out(target * cols, 0.0);
  for (std::size_t t = 0; t < target; ++t) {
    for (std::size_t s = 0; s < rows; ++s) {
      const double w = m[t * rows + s];
      if (w == 0.0) continue;
      for (std::size_t c = 0; c < cols; ++c) out[t * cols + c] += w * values[s * cols + c];
    }
  }
  return out;
}

void require_sqrt(const dsp::Spectrogram& spec, const char* op) {
  if (spec.mode != dsp::SpectrogramMode::sqrt_magnitude) {
    throw InvalidArgument(std::string(op) + ": expected a sqrt_magnitude spectrogram, got " + to_string(spec.mode));
  }
}

}  // namespace

FrameMatrix align_frames(const FrameMatrix& rows, std::size_t target) {
  if (target == 0) throw InvalidArgument("align_frames: target frame count must be >= 1");
  if (rows.rows == 0) throw InvalidArgument("align_frames: empty input");
  return {target, rows.cols, resample_rows(rows.values, rows.rows, rows.cols, target)};
}

ClassSpectrogramBank build_bank(std::span<const std::vector<dsp::Spectrogram>> by_class,
                                std::span<const std::string> names, std::size_t target_frames) {
  if (by_class.size() != names.size()) {
    throw BankError("build_bank: " + std::to_string(by_class.size()) + " clip groups for " +
                    std::to_string(names.size()) + " class names");
  }
  if (target_frames == 0) throw InvalidArgument("build_bank: target frame count must be >= 1");
  ClassSpectrogramBank bank;
  bank.frames = target_frames;
  bank.names.assign(names.begin(), names.end());
  bool framed = false;
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    const auto& group = by_class[k];
    if (group.empty()) throw BankError("build_bank: class '" + names[k] + "' has no training clips");
    for (const auto& spec : group) {
      require_sqrt(spec, "build_bank");
      if (!framed) {
        bank.params = spec.params;
        bank.sample_rate = spec.sample_rate;
        bank.bins = spec.num_bins;
        framed = true;
      } else if (spec.num_bins != bank.bins || !(spec.params == bank.params) || spec.sample_rate != bank.sample_rate) {
        throw BankError("build_bank: class '" + names[k] + "' mixes spectrogram framings");
      }
    }
    std::vector<double> acc(target_frames * bank.bins, 0.0);
    for (const auto& spec : group) {
      const auto r = resample_rows(spec.values, spec.num_frames, spec.num_bins, target_frames);
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += r[i];
    }
    const double inv = 1.0 / static_cast<double>(group.size());
    for (double& v : acc) v = std::max(0.0, v * inv);
    bank.bases.push_back(std::move(acc));
    bank.clip_counts.push_back(group.size());
  }
  return bank;
}

ClassSpectrogramBank build_bank(std::span<const std::vector<dsp::AudioClip>> by_class,
                                std::span<const std::string> names, const dsp::StftParams& params,
                                std::size_t target_frames) {
  std::vector<std::vector<dsp::Spectrogram>> specs(by_class.size());
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    for (const auto& clip : by_class[k]) {
      specs[k].push_back(dsp::spectrogram_of(clip, params, dsp::SpectrogramMode::sqrt_magnitude));
    }
  }
  return build_bank(std::span<const std::vector<dsp::Spectrogram>>(specs), names, target_frames);
}

FrameMatrix bank_aligned(const dsp::Spectrogram& sqrt_spec, const ClassSpectrogramBank& bank) {
  require_sqrt(sqrt_spec, "bank_aligned");
  if (sqrt_spec.num_bins != bank.bins) {
    throw AlignmentError("spectrogram has " + std::to_string(sqrt_spec.num_bins) + " bins, bank has " +
                         std::to_string(bank.bins));
  }
  return {bank.frames, bank.bins, resample_rows(sqrt_spec.values, sqrt_spec.num_frames, sqrt_spec.num_bins, bank.frames)};
}

dsp::Spectrogram compose_spectrogram(const FrameMatrix* residual, std::size_t klass, const ClassSpectrogramBank& bank) {
  const auto base = bank.base(klass);
  dsp::Spectrogram out;
  out.num_frames = bank.frames;
  out.num_bins = bank.bins;
  out.mode = dsp::SpectrogramMode::sqrt_magnitude;
  out.params = bank.params;
  out.sample_rate = bank.sample_rate;
  out.values.assign(base.begin(), base.end());
  if (residual) {
    if (residual->rows != bank.frames || residual->cols != bank.bins) {
      throw AlignmentError("compose: residual is " + std::to_string(residual->rows) + "x" +
                           std::to_string(residual->cols) + ", bank frames are " + std::to_string(bank.frames) + "x" +
                           std::to_string(bank.bins));
    }
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = std::max(0.0, out.values[i] + residual->values[i]);
  }
  return out;
}

FrameMatrix extract_residual(const dsp::Spectrogram& sqrt_spec, std::size_t klass, const ClassSpectrogramBank& bank) {
  const auto base = bank.base(klass);
  FrameMatrix r = bank_aligned(sqrt_spec, bank);
  for (std::size_t i = 0; i < r.values.size(); ++i) r.values[i] -= base[i];
  return r;
}

double robust_loss_scalar(double error, double alpha) {
  if (!(alpha > 0.0)) throw InvalidArgument("robust loss: alpha must be > 0");
  return std::log(alpha + error * error);
}

double robust_loss_derivative(double error, double alpha) {
  if (!(alpha > 0.0)) throw InvalidArgument("robust loss: alpha must be > 0");
  return 2.0 * error / (alpha + error * error);
}

double robust_energy(const FrameMatrix& pred, const FrameMatrix& target, double alpha) {
  if (!(alpha > 0.0)) throw InvalidArgument("robust energy: alpha must be > 0");
  if (pred.rows != target.rows || pred.cols != target.cols) {
    throw AlignmentError("robust energy: " + std::to_string(pred.rows) + "x" + std::to_string(pred.cols) + " vs " +
                         std::to_string(target.rows) + "x" + std::to_string(target.cols));
  }
  double e = 0.0;
  for (std::size_t t = 0; t < pred.rows; ++t) {
    double sq = 0.0;
    for (std::size_t c = 0; c < pred.cols; ++c) {
      const double d = pred.at(t, c) - target.at(t, c);
      sq += d * d;
    }
    e += std::log(alpha + sq);
  }
  return e;
}

ad::Tensor robust_energy(const ad::Tensor& pred, const ad::Tensor& target, double alpha) {
  if (!(alpha > 0.0)) throw InvalidArgument("robust energy: alpha must be > 0");
  if (pred.shape() != target.shape()) {
    throw AlignmentError("robust energy: " + ad::shape_string(pred.shape()) + " vs " + ad::shape_string(target.shape()));
  }
  return ad::sum(ad::log(ad::add_scalar(ad::row_sum(ad::square(ad::sub(pred, target))), alpha)));
}

dsp::AudioClip synthesize_waveform(const dsp::Spectrogram& sqrt_spec, std::size_t gl_iterations) {
  require_sqrt(sqrt_spec, "synthesize_waveform");
  const auto magnitude = dsp::convert_mode(sqrt_spec, dsp::SpectrogramMode::magnitude);
  auto clip = dsp::griffin_lim(magnitude, sqrt_spec.params, gl_iterations).clip;
  double peak = 0.0;
  for (double v : clip.samples) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    const double g = 0.9 / peak;
    for (double& v : clip.samples) v *= g;
  }
  return clip;
}

void save_bank(const ClassSpectrogramBank& bank, const std::filesystem::path& path) {
  detail::ByteWriter out;
  out.magic("AFBANK01");
  out.u32(static_cast<std::uint32_t>(bank.params.fft_size));
  out.u32(static_cast<std::uint32_t>(bank.params.window_size));
  out.u32(static_cast<std::uint32_t>(bank.params.hop_size));
  out.u32(static_cast<std::uint32_t>(bank.sample_rate));
  out.u32(static_cast<std::uint32_t>(bank.frames));
  out.u32(static_cast<std::uint32_t>(bank.bins));
  out.u32(static_cast<std::uint32_t>(bank.num_classes()));
  for (std::size_t k = 0; k < bank.num_classes(); ++k) {
    out.str(bank.names[k]);
    out.u32(static_cast<std::uint32_t>(bank.clip_counts[k]));
    for (double v : bank.bases[k]) out.f64(v);
  }
  out.write_file(path);
}

ClassSpectrogramBank load_bank(const std::filesystem::path& path) {
  auto in = detail::ByteReader::from_file(path);
  in.expect_magic("AFBANK01");
  ClassSpectrogramBank bank;
  bank.params.fft_size = in.u32();
  bank.params.window_size = in.u32();
  bank.params.hop_size = in.u32();
  bank.sample_rate = static_cast<int>(in.u32());
  bank.frames = in.u32();
  bank.bins = in.u32();
  const std::size_t classes = in.u32();
  if (bank.bins != bank.params.num_bins()) in.fail("bin count disagrees with fft size");
  for (std::size_t k = 0; k < classes; ++k) {
    bank.names.push_back(in.str());
    bank.clip_counts.push_back(in.u32());
    in.require(static_cast<std::uint64_t>(bank.frames) * bank.bins, 8, "bank payload");
    std::vector<double> base(bank.frames * bank.bins);
    for (double& v : base) v = in.f64();
    bank.bases.push_back(std::move(base));
  }
  return bank;
}

}  // namespace foley::synth
