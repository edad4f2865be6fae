#pragma once

#include <complex>
#include <cstddef>
#include <span>

namespace foley::dsp::detail {

/// Real <-> half-complex FFT of a fixed size backed by an FFTW plan pair.
/// Plan creation and destruction are serialized internally; execution on
/// distinct instances is safe from concurrent threads.
class RealFft {
 public:
  explicit RealFft(std::size_t size);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const noexcept { return size_; }
  std::size_t bins() const noexcept { return size_ / 2 + 1; }

  /// Unnormalized forward transform. `input` shorter than size() is zero-padded.
  void forward(std::span<const double> input, std::span<std::complex<double>> output);
  /// Inverse transform scaled by 1/size(), so inverse(forward(x)) == x.
  void inverse(std::span<const std::complex<double>> input, std::span<double> output);

 private:
  std::size_t size_;
  double* real_ = nullptr;
  void* spectrum_ = nullptr;
  void* forward_plan_ = nullptr;
  void* inverse_plan_ = nullptr;
};

}  // namespace foley::dsp::detail
