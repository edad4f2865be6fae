#include <doctest.h>

#include <cmath>
#include <numbers>

#include "foley/dsp.hpp"
#include "foley/error.hpp"
#include "foley/wav.hpp"
#include "support.hpp"

using namespace foley;
using foley::testing::noise_clip;
using foley::testing::tone_clip;

namespace {

dsp::AudioClip two_tone_fixture() {
  dsp::AudioClip clip;
  clip.sample_rate = 8000;
  for (std::size_t n = 0; n < 1024; ++n) {
    const double x = static_cast<double>(n);
    clip.samples.push_back(std::sin(2 * std::numbers::pi * 0.05 * x) + 0.3 * std::cos(2 * std::numbers::pi * 0.17 * x));
  }
  return clip;
}

}  // namespace

TEST_SUITE("hann window") {
  TEST_CASE("closed forms for small sizes") {
    CHECK(dsp::hann_window(1) == std::vector<double>{0.0});
    const auto w4 = dsp::hann_window(4);
    REQUIRE(w4.size() == 4);
    CHECK(w4[0] == doctest::Approx(0.0));
    CHECK(w4[1] == doctest::Approx(0.5));
    CHECK(w4[2] == doctest::Approx(1.0));
    CHECK(w4[3] == doctest::Approx(0.5));
  }

  TEST_CASE("half-shifted copies sum to one") {
    const auto w = dsp::hann_window(8);
    for (std::size_t i = 0; i < 4; ++i) CHECK(w[i] + w[i + 4] == doctest::Approx(1.0).epsilon(1e-15));
  }

  TEST_CASE("empty window is rejected") { CHECK_THROWS_AS(dsp::hann_window(0), InvalidArgument); }
}

TEST_SUITE("stft") {
  TEST_CASE("framing arithmetic and bin count") {
    const dsp::StftParams p;
    CHECK(p.num_bins() == 129);
    CHECK(p.num_frames(1024) == 7);
    CHECK(p.num_frames(1023) == 6);
    CHECK(p.signal_length(7) == 1024);
  }

  TEST_CASE("magnitudes match the numpy reference") {
    const auto spec = dsp::stft(two_tone_fixture(), {});
    REQUIRE(spec.num_frames == 7);
    CHECK(std::abs(spec.at(2, 12)) == doctest::Approx(41.576576355948156).epsilon(1e-12));
    CHECK(std::abs(spec.at(2, 13)) == doctest::Approx(62.36661597712042).epsilon(1e-12));
    CHECK(std::abs(spec.at(2, 44)) == doctest::Approx(16.5113214980455).epsilon(1e-12));
    double power = 0.0;
    for (std::size_t k = 0; k < spec.num_bins; ++k) power += std::norm(spec.at(3, k));
    CHECK(power == doctest::Approx(6696.960180155542).epsilon(1e-12));
  }

  TEST_CASE("zero clip gives a zero spectrum") {
    dsp::AudioClip zero{std::vector<double>(2000, 0.0), 8000};
    for (const auto& v : dsp::stft(zero, {}).values) CHECK(std::abs(v) == 0.0);
  }

  TEST_CASE("bin-centre sinusoid peaks at its bin in every frame") {
    for (std::size_t k : {5, 17, 64, 100}) {
      const double hz = static_cast<double>(k) * 8000.0 / 256.0;
      const auto spec = dsp::spectrogram_of(tone_clip(hz, 4000), {}, dsp::SpectrogramMode::magnitude);
      for (std::size_t t = 0; t < spec.num_frames; ++t) {
        const auto row = spec.frame(t);
        CHECK(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()) == k);
      }
    }
  }

  TEST_CASE("impulse at sample 0 touches only frame 0 when hop equals window") {
    dsp::StftParams p;
    p.hop_size = 256;
    dsp::AudioClip impulse{std::vector<double>(2048, 0.0), 8000};
    impulse.samples[0] = 1.0;
    impulse.samples[1] = 1.0;  // w[0] = 0, so sample 1 carries the energy
    const auto spec = dsp::stft(impulse, p);
    double first = 0.0, rest = 0.0;
    for (std::size_t t = 0; t < spec.num_frames; ++t) {
      for (std::size_t k = 0; k < spec.num_bins; ++k) (t == 0 ? first : rest) += std::norm(spec.at(t, k));
    }
    CHECK(first > 0.0);
    CHECK(rest == 0.0);
  }

  TEST_CASE("clip shorter than a window is rejected") {
    CHECK_THROWS_AS(dsp::stft(dsp::AudioClip{std::vector<double>(255, 0.1), 8000}, {}), InvalidArgument);
  }

  TEST_CASE("spectrogram modes agree") {
    const auto clip = noise_clip(3, 3000);
    const auto mag = dsp::spectrogram_of(clip, {}, dsp::SpectrogramMode::magnitude);
    const auto pow = dsp::spectrogram_of(clip, {}, dsp::SpectrogramMode::power);
    const auto sq = dsp::spectrogram_of(clip, {}, dsp::SpectrogramMode::sqrt_magnitude);
    for (std::size_t i = 0; i < mag.values.size(); ++i) {
      CHECK(pow.values[i] == doctest::Approx(mag.values[i] * mag.values[i]).epsilon(1e-12));
      CHECK(sq.values[i] * sq.values[i] == doctest::Approx(mag.values[i]).epsilon(1e-12));
    }
    const auto back = dsp::convert_mode(sq, dsp::SpectrogramMode::power);
    for (std::size_t i = 0; i < mag.values.size(); ++i) {
      CHECK(back.values[i] == doctest::Approx(pow.values[i]).epsilon(1e-10));
    }
  }

  TEST_CASE("frame power equals windowed energy times the fft size (Parseval)") {
    const auto clip = noise_clip(11, 2000);
    const dsp::StftParams p;
    const auto w = dsp::hann_window(p.window_size);
    const auto spec = dsp::stft(clip, p);
    for (std::size_t t = 0; t < spec.num_frames; ++t) {
      double energy = 0.0;
      for (std::size_t i = 0; i < p.window_size; ++i) {
        const double v = clip.samples[t * p.hop_size + i] * w[i];
        energy += v * v;
      }
      double one_sided = 0.0;
      for (std::size_t k = 0; k < spec.num_bins; ++k) {
        const bool edge = k == 0 || k + 1 == spec.num_bins;
        one_sided += (edge ? 1.0 : 2.0) * std::norm(spec.at(t, k));
      }
      CHECK(one_sided == doctest::Approx(energy * static_cast<double>(p.fft_size)).epsilon(1e-6));
    }
  }
}

TEST_SUITE("istft") {
  TEST_CASE("round trip reconstructs the interior for seeded noise") {
    const dsp::StftParams p;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
      const auto clip = noise_clip(seed, 8000);
      const auto back = dsp::istft_ola(dsp::stft(clip, p), p, 8000);
      CHECK(back.size() + p.window_size > clip.size());
      CHECK(back.size() <= clip.size());
      double err = 0.0;
      for (std::size_t i = p.window_size; i + p.window_size < back.size(); ++i) {
        err = std::max(err, std::abs(back.samples[i] - clip.samples[i]));
      }
      CHECK(err < 1e-6);
    }
  }

  TEST_CASE("zero spectrum inverts to silence") {
    dsp::ComplexSpectrum zero;
    zero.num_frames = 4;
    zero.num_bins = 129;
    zero.values.assign(4 * 129, {0.0, 0.0});
    const auto clip = dsp::istft_ola(zero, {}, 8000);
    CHECK(clip.size() == 640);
    for (double v : clip.samples) CHECK(v == 0.0);
  }

  TEST_CASE("inconsistent shape is rejected") {
    dsp::ComplexSpectrum bad;
    bad.num_frames = 2;
    bad.num_bins = 100;
    bad.values.resize(200);
    CHECK_THROWS_AS(dsp::istft_ola(bad, {}, 8000), InvalidArgument);
  }

  TEST_CASE("inversion needs overlapping windows") {
    dsp::StftParams p;
    p.hop_size = 256;
    CHECK_NOTHROW(p.validate());
    CHECK_THROWS_AS(p.validate_for_inversion(), InvalidArgument);
  }
}

TEST_SUITE("griffin-lim") {
  TEST_CASE("first iterations match the numpy reference") {
    const dsp::StftParams p;
    const auto mag = dsp::spectrogram_of(two_tone_fixture(), p, dsp::SpectrogramMode::magnitude);
    const auto r = dsp::griffin_lim(mag, p, 3);
    REQUIRE(r.consistency_errors.size() == 3);
    CHECK(r.consistency_errors[0] == doctest::Approx(256.5576464106544).epsilon(1e-9));
    CHECK(r.consistency_errors[1] == doctest::Approx(203.0537014882154).epsilon(1e-9));
    CHECK(r.consistency_errors[2] == doctest::Approx(196.45696959340114).epsilon(1e-9));
  }

  TEST_CASE("consistency error never increases") {
    const dsp::StftParams p;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto mag = dsp::spectrogram_of(noise_clip(seed, 4000), p, dsp::SpectrogramMode::magnitude);
      const auto r = dsp::griffin_lim(mag, p, 16);
      for (std::size_t i = 1; i < r.consistency_errors.size(); ++i) {
        CHECK(r.consistency_errors[i] <= r.consistency_errors[i - 1] + 1e-9);
      }
    }
  }

  TEST_CASE("zero magnitude gives silence") {
    dsp::Spectrogram zero;
    zero.num_frames = 5;
    zero.num_bins = 129;
    zero.values.assign(5 * 129, 0.0);
    zero.sample_rate = 8000;
    for (double v : dsp::griffin_lim(zero, {}, 4).clip.samples) CHECK(v == 0.0);
  }

  TEST_CASE("negative magnitude and zero iterations are rejected") {
    auto mag = dsp::spectrogram_of(noise_clip(1, 1000), {}, dsp::SpectrogramMode::magnitude);
    CHECK_THROWS_AS(dsp::griffin_lim(mag, {}, 0), InvalidArgument);
    mag.values[3] = -1.0;
    CHECK_THROWS_AS(dsp::griffin_lim(mag, {}, 2), InvalidArgument);
  }

  TEST_CASE("output is deterministic") {
    const auto mag = dsp::spectrogram_of(noise_clip(9, 2000), {}, dsp::SpectrogramMode::magnitude);
    CHECK(dsp::griffin_lim(mag, {}, 5).clip.samples == dsp::griffin_lim(mag, {}, 5).clip.samples);
  }
}

TEST_SUITE("ncc") {
  TEST_CASE("matches the numpy reference on a delayed copy") {
    dsp::AudioClip a, b;
    a.sample_rate = b.sample_rate = 8000;
    for (std::size_t n = 0; n < 4000; ++n) {
      const double t = static_cast<double>(n);
      a.samples.push_back(std::sin(2 * std::numbers::pi * 440 * t / 8000) * std::exp(-3 * t / 8000));
    }
    b.samples.assign(4000, 0.0);
    for (std::size_t n = 37; n < 4000; ++n) b.samples[n] = a.samples[n - 37];
    for (std::size_t n = 0; n < 4000; ++n) {
      b.samples[n] += 0.2 * std::sin(2 * std::numbers::pi * 1000 * static_cast<double>(n) / 8000);
    }
    CHECK(dsp::normalized_cross_correlation(a, b) == doctest::Approx(0.941528514333556).epsilon(1e-9));
  }

  TEST_CASE("self, scaled and symmetric") {
    const auto x = noise_clip(5, 3000);
    auto half = x;
    for (double& v : half.samples) v *= 0.5;
    CHECK(dsp::normalized_cross_correlation(x, x) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(dsp::normalized_cross_correlation(x, half) == doctest::Approx(1.0).epsilon(1e-9));
    const auto y = noise_clip(6, 3000);
    const double xy = dsp::normalized_cross_correlation(x, y);
    CHECK(xy == doctest::Approx(dsp::normalized_cross_correlation(y, x)).epsilon(1e-12));
    CHECK(xy <= 1.0);
    CHECK(xy >= -1.0);
  }

  TEST_CASE("sine and cosine align at a quarter-period lag") {
    const auto s = tone_clip(200, 4000);
    const auto c = tone_clip(200, 4000, 8000, std::numbers::pi / 2);
    CHECK(dsp::normalized_cross_correlation(s, c) > 0.98);
  }

  TEST_CASE("zero energy and mismatched rates are rejected") {
    const dsp::AudioClip silent{std::vector<double>(1000, 0.0), 8000};
    const dsp::AudioClip constant{std::vector<double>(1000, 0.25), 8000};
    const auto x = noise_clip(1, 1000);
    CHECK_THROWS_AS(dsp::normalized_cross_correlation(x, silent), UndefinedCorrelation);
    CHECK_THROWS_AS(dsp::normalized_cross_correlation(constant, x), UndefinedCorrelation);
    CHECK_THROWS_AS(dsp::normalized_cross_correlation(x, noise_clip(1, 1000, 16000)), InvalidArgument);
  }
}

TEST_SUITE("wav") {
  TEST_CASE("round trip stays within one quantization step") {
    const auto clip = noise_clip(21, 5000);
    const auto dir = foley::testing::scratch_dir("wav");
    dsp::wav_write(clip, dir / "noise.wav");
    const auto back = dsp::wav_read(dir / "noise.wav");
    CHECK(back.sample_rate == 8000);
    REQUIRE(back.size() == clip.size());
    CHECK(foley::testing::max_abs_diff(back.samples, clip.samples) <= std::ldexp(1.0, -15));
  }

  TEST_CASE("44.1 kHz header survives") {
    const auto bytes = dsp::wav_encode(noise_clip(1, 100, 44100));
    CHECK(dsp::wav_decode(bytes).sample_rate == 44100);
  }

  TEST_CASE("canonical header layout") {
    const auto bytes = dsp::wav_encode(dsp::AudioClip{{0.0, 1.0, -1.0}, 8000});
    REQUIRE(bytes.size() == 44 + 6);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "RIFF");
    CHECK(std::string(bytes.begin() + 8, bytes.begin() + 16) == "WAVEfmt ");
    CHECK(bytes[44 + 2] == 0xff);  // 32767 little-endian
    CHECK(bytes[44 + 3] == 0x7f);
  }

  TEST_CASE("malformed input raises codec errors with offsets") {
    CHECK_THROWS_AS(dsp::wav_decode({}), CodecError);
    auto bytes = dsp::wav_encode(noise_clip(1, 10));
    bytes[20] = 3;  // IEEE float format tag
    CHECK_THROWS_AS(dsp::wav_decode(bytes), CodecError);
    const auto ok = dsp::wav_encode(noise_clip(1, 10));
    try {
      dsp::wav_decode(std::span<const std::uint8_t>(ok).first(30));
      FAIL("truncated header decoded");
    } catch (const CodecError& e) {
      CHECK(e.offset() <= 30);
    }
  }

  TEST_CASE("stereo is downmixed by averaging") {
    auto bytes = dsp::wav_encode(dsp::AudioClip{{0.5, -0.5, 0.25, 0.25}, 8000});
    // Reinterpret the 4 mono samples as 2 stereo frames.
    bytes[22] = 2;
    const std::uint32_t byte_rate = 8000 * 4;
    for (int i = 0; i < 4; ++i) bytes[28 + i] = static_cast<std::uint8_t>(byte_rate >> (8 * i));
    bytes[32] = 4;
    const auto clip = dsp::wav_decode(bytes);
    REQUIRE(clip.size() == 2);
    CHECK(clip.samples[0] == doctest::Approx(0.0).epsilon(1e-4));
    CHECK(clip.samples[1] == doctest::Approx(0.25).epsilon(1e-4));
  }
}
