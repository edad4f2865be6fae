#include "fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cstring>
#include <mutex>

#include "foley/error.hpp"

namespace foley::dsp::detail {
namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

RealFft::RealFft(std::size_t size) : size_(size) {
  if (size == 0) throw InvalidArgument("fft size must be positive");
  std::lock_guard lock(planner_mutex());
  real_ = fftw_alloc_real(size_);
  auto* spec = fftw_alloc_complex(bins());
  spectrum_ = spec;
  const int n = static_cast<int>(size_);
  forward_plan_ = fftw_plan_dft_r2c_1d(n, real_, spec, FFTW_ESTIMATE);
  inverse_plan_ = fftw_plan_dft_c2r_1d(n, spec, real_, FFTW_ESTIMATE);
}

RealFft::~RealFft() {
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(forward_plan_));
  fftw_destroy_plan(static_cast<fftw_plan>(inverse_plan_));
  fftw_free(real_);
  fftw_free(spectrum_);
}

void RealFft::forward(std::span<const double> input, std::span<std::complex<double>> output) {
  const std::size_t n = std::min(input.size(), size_);
  std::copy_n(input.begin(), n, real_);
  std::fill(real_ + n, real_ + size_, 0.0);
  fftw_execute(static_cast<fftw_plan>(forward_plan_));
  // fftw_complex is layout-compatible with std::complex<double>.
  std::memcpy(output.data(), spectrum_, bins() * sizeof(std::complex<double>));
}

void RealFft::inverse(std::span<const std::complex<double>> input, std::span<double> output) {
  std::memcpy(spectrum_, input.data(), bins() * sizeof(std::complex<double>));
  fftw_execute(static_cast<fftw_plan>(inverse_plan_));
  const double scale = 1.0 / static_cast<double>(size_);
  const std::size_t n = std::min(output.size(), size_);
  for (std::size_t i = 0; i < n; ++i) output[i] = real_[i] * scale;
}

}  // namespace foley::dsp::detail
