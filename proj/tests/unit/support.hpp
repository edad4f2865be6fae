#pragma once

// Shared fixtures for the unit suites.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "foley/dsp.hpp"
#include "foley/rng.hpp"

namespace foley::testing {

/// Fresh scratch directory under FOLEY_TEST_TMP (or the system temp dir).
inline std::filesystem::path scratch_dir(const std::string& name) {
  const char* root = std::getenv("FOLEY_TEST_TMP");
  const std::filesystem::path base = root ? std::filesystem::path(root) : std::filesystem::temp_directory_path() / "foley_tests";
  const auto dir = base / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline dsp::AudioClip noise_clip(std::uint64_t seed, std::size_t n, int sample_rate = 8000) {
  Rng rng(seed);
  dsp::AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.resize(n);
  for (double& v : clip.samples) v = rng.uniform(-1.0, 1.0);
  return clip;
}

inline dsp::AudioClip tone_clip(double hz, std::size_t n, int sample_rate = 8000, double phase = 0.0) {
  dsp::AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    clip.samples[i] = std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / sample_rate + phase);
  }
  return clip;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace foley::testing
