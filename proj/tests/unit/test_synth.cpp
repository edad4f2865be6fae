#include <doctest.h>

#include <cmath>

#include "foley/data.hpp"
#include "foley/error.hpp"
#include "foley/optim.hpp"
#include "foley/synth.hpp"
#include "support.hpp"

using namespace foley;
using synth::FrameMatrix;

namespace {

dsp::Spectrogram constant_spec(std::size_t frames, std::size_t bins, double v) {
  dsp::Spectrogram s;
  s.num_frames = frames;
  s.num_bins = bins;
  s.values.assign(frames * bins, v);
  s.mode = dsp::SpectrogramMode::sqrt_magnitude;
  s.params.fft_size = s.params.window_size = 2 * (bins - 1);
  s.params.hop_size = s.params.window_size / 2;
  s.sample_rate = 8000;
  return s;
}

dsp::Spectrogram sqrt_spec_of(const dsp::AudioClip& clip) {
  return dsp::spectrogram_of(clip, {}, dsp::SpectrogramMode::sqrt_magnitude);
}

synth::ClassSpectrogramBank two_class_bank(std::size_t frames) {
  const std::vector<std::vector<dsp::AudioClip>> clips{{testing::noise_clip(1, 4000), testing::noise_clip(2, 4000)},
                                                       {testing::tone_clip(500, 4000)}};
  const std::vector<std::string> names{"a", "b"};
  return synth::build_bank(std::span<const std::vector<dsp::AudioClip>>(clips), names, dsp::StftParams{}, frames);
}

}  // namespace

TEST_SUITE("bank") {
  TEST_CASE("single clip class equals its resampled spectrogram") {
    const auto bank = two_class_bank(31);
    const auto aligned = synth::bank_aligned(sqrt_spec_of(testing::tone_clip(500, 4000)), bank);
    const auto base = bank.base(1);
    CHECK(std::vector<double>(base.begin(), base.end()) == aligned.values);
    CHECK(bank.clip_counts == std::vector<std::size_t>{2, 1});
  }

  TEST_CASE("identical clips average to either and constants average arithmetically") {
    const std::vector<std::vector<dsp::Spectrogram>> same{{constant_spec(5, 9, 0.3), constant_spec(5, 9, 0.3)}};
    const std::vector<std::string> one{"x"};
    const auto a = synth::build_bank(std::span<const std::vector<dsp::Spectrogram>>(same), one, 5);
    for (double v : a.base(0)) CHECK(v == doctest::Approx(0.3).epsilon(1e-15));
    const std::vector<std::vector<dsp::Spectrogram>> mixed{{constant_spec(5, 9, 0.2), constant_spec(8, 9, 0.6)}};
    const auto b = synth::build_bank(std::span<const std::vector<dsp::Spectrogram>>(mixed), one, 6);
    for (double v : b.base(0)) CHECK(v == doctest::Approx(0.4).epsilon(1e-15));
  }

  TEST_CASE("scaled copies give the mean scale") {
    const auto s = sqrt_spec_of(testing::noise_clip(3, 3000));
    auto s2 = s, s3 = s;
    for (double& v : s2.values) v *= 2.0;
    for (double& v : s3.values) v *= 3.0;
    const std::vector<std::vector<dsp::Spectrogram>> group{{s, s2, s3}};
    const std::vector<std::string> one{"x"};
    const auto bank = synth::build_bank(std::span<const std::vector<dsp::Spectrogram>>(group), one, s.num_frames);
    const auto base = bank.base(0);
    for (std::size_t i = 0; i < base.size(); ++i) CHECK(base[i] == doctest::Approx(2.0 * s.values[i]).epsilon(1e-12));
  }

  TEST_CASE("empty class and unknown lookups raise bank errors") {
    const std::vector<std::vector<dsp::Spectrogram>> groups{{constant_spec(4, 9, 1.0)}, {}};
    const std::vector<std::string> names{"full", "hollow"};
    try {
      synth::build_bank(std::span<const std::vector<dsp::Spectrogram>>(groups), names, 4);
      FAIL("empty class accepted");
    } catch (const BankError& e) {
      CHECK(std::string(e.what()).find("hollow") != std::string::npos);
    }
    const auto bank = two_class_bank(10);
    CHECK_THROWS_AS(bank.base(2), BankError);
    CHECK_THROWS_AS(bank.index_of("zzz"), BankError);
    CHECK(bank.index_of("b") == 1);
  }

  TEST_CASE("container round trip") {
    const auto bank = two_class_bank(17);
    const auto dir = testing::scratch_dir("bank");
    synth::save_bank(bank, dir / "bank.bin");
    const auto back = synth::load_bank(dir / "bank.bin");
    CHECK(back.names == bank.names);
    CHECK(back.bases == bank.bases);
    CHECK(back.params == bank.params);
    CHECK(back.frames == 17);
    std::filesystem::resize_file(dir / "bank.bin", 40);
    CHECK_THROWS_AS(synth::load_bank(dir / "bank.bin"), CodecError);
  }
}

TEST_SUITE("alignment and composition") {
  TEST_CASE("alignment rules") {
    FrameMatrix r{2, 3, {0, 0, 0, 1, 1, 1}};
    const auto mid = synth::align_frames(r, 3);
    for (std::size_t c = 0; c < 3; ++c) CHECK(mid.at(1, c) == doctest::Approx(0.5));
    CHECK(synth::align_frames(r, 2).values == r.values);
    const FrameMatrix flat{4, 2, std::vector<double>(8, 0.7)};
    for (double v : synth::align_frames(flat, 9).values) CHECK(v == doctest::Approx(0.7).epsilon(1e-15));
    CHECK_THROWS_AS(synth::align_frames(r, 0), InvalidArgument);
    CHECK_THROWS_AS(synth::align_frames(FrameMatrix{0, 3, {}}, 4), InvalidArgument);
  }

  TEST_CASE("composition identities") {
    const auto bank = two_class_bank(31);
    const auto zero = FrameMatrix::zeros(31, 129);
    const auto base = bank.base(0);
    CHECK(synth::compose_spectrogram(&zero, 0, bank).values == std::vector<double>(base.begin(), base.end()));
    CHECK(synth::compose_spectrogram(nullptr, 0, bank).values == std::vector<double>(base.begin(), base.end()));
    FrameMatrix neg = zero;
    for (std::size_t i = 0; i < neg.values.size(); ++i) neg.values[i] = -base[i];
    for (double v : synth::compose_spectrogram(&neg, 0, bank).values) CHECK(v == 0.0);
    CHECK_THROWS_AS(synth::compose_spectrogram(&zero, 5, bank), BankError);
    const auto wrong = FrameMatrix::zeros(30, 129);
    CHECK_THROWS_AS(synth::compose_spectrogram(&wrong, 0, bank), AlignmentError);
  }

  TEST_CASE("composing an extracted residual restores the spectrogram") {
    const auto bank = two_class_bank(31);
    const auto s = sqrt_spec_of(testing::noise_clip(9, 4000));
    REQUIRE(s.num_frames == 30);
    const auto aligned = synth::bank_aligned(s, bank);
    for (std::size_t k = 0; k < 2; ++k) {
      const auto r = synth::extract_residual(s, k, bank);
      const auto back = synth::compose_spectrogram(&r, k, bank);
      CHECK(testing::max_abs_diff(back.values, aligned.values) < 1e-12);
    }
  }
}

TEST_SUITE("robust loss") {
  TEST_CASE("closed forms and domain") {
    CHECK(synth::robust_loss_scalar(0.0, 1.0) == 0.0);
    CHECK(synth::robust_loss_scalar(1.0, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(synth::robust_loss_scalar(0.0, 0.3) == doctest::Approx(std::log(0.3)).epsilon(1e-12));
    CHECK_THROWS_AS(synth::robust_loss_scalar(1.0, 0.0), InvalidArgument);
    CHECK_THROWS_AS(synth::robust_energy(FrameMatrix{}, FrameMatrix{}, -1.0), InvalidArgument);
  }

  TEST_CASE("derivative matches central differences") {
    for (double alpha : {0.5, 1.0, 2.0}) {
      for (double g = -2.0; g <= 2.0; g += 0.25) {
        const double h = 1e-5;
        const double fd = (synth::robust_loss_scalar(g + h, alpha) - synth::robust_loss_scalar(g - h, alpha)) / (2 * h);
        CHECK(synth::robust_loss_derivative(g, alpha) == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
      }
    }
  }

  TEST_CASE("energy matches the numpy reference in both forms") {
    const FrameMatrix pred{2, 3, {0, 1, 2, 1, 1, 1}};
    const FrameMatrix target{2, 3, {0.5, 0.5, 0.5, 0, 2, 3}};
    CHECK(synth::robust_energy(pred, target, 1.0) == doctest::Approx(3.2676659890376327).epsilon(1e-12));
    CHECK(synth::robust_energy(pred, target, 0.5) == doctest::Approx(3.0504571732432373).epsilon(1e-12));
    const auto t = synth::robust_energy(ad::Tensor::from({2, 3}, pred.values), ad::Tensor::from({2, 3}, target.values));
    CHECK(t.item() == doctest::Approx(3.2676659890376327).epsilon(1e-12));
    CHECK_THROWS_AS(synth::robust_energy(pred, FrameMatrix{3, 2, target.values}), AlignmentError);
  }

  TEST_CASE("energy is bounded below by T log alpha with equality at a perfect match") {
    Rng rng(4);
    for (double alpha : {0.25, 1.0, 3.0}) {
      FrameMatrix a{4, 5, std::vector<double>(20)};
      for (double& v : a.values) v = rng.uniform(-1.0, 1.0);
      CHECK(synth::robust_energy(a, a, alpha) == doctest::Approx(4.0 * std::log(alpha)).epsilon(1e-14));
      FrameMatrix b = a;
      b.values[7] += 0.1;
      CHECK(synth::robust_energy(a, b, alpha) > 4.0 * std::log(alpha));
    }
  }

  TEST_CASE("differentiable energy passes a gradient check") {
    const auto r = ad::grad_check(
        [](std::span<const ad::Tensor> in) { return synth::robust_energy(in[0], in[1], 0.7); },
        {ad::Tensor::from({2, 3}, {0.1, 0.5, -0.2, 0.3, 0.0, 0.9}, true),
         ad::Tensor::from({2, 3}, {0.4, -0.1, 0.2, 0.6, 0.8, -0.3}, true)});
    CHECK(r.passed);
  }
}

TEST_SUITE("waveform synthesis") {
  TEST_CASE("silence and framing arithmetic") {
    auto zero = constant_spec(20, 129, 0.0);
    zero.params = {};
    const auto clip = synth::synthesize_waveform(zero);
    CHECK(clip.size() == 19 * 128 + 256);
    for (double v : clip.samples) CHECK(v == 0.0);
  }

  TEST_CASE("output is peak normalized and deterministic") {
    const auto s = sqrt_spec_of(testing::noise_clip(5, 3000));
    const auto a = synth::synthesize_waveform(s, 4);
    double peak = 0.0;
    for (double v : a.samples) peak = std::max(peak, std::abs(v));
    CHECK(peak == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(a.samples == synth::synthesize_waveform(s, 4).samples);
  }

  TEST_CASE("magnitude mode input is rejected") {
    auto s = dsp::spectrogram_of(testing::noise_clip(5, 3000), {}, dsp::SpectrogramMode::magnitude);
    CHECK_THROWS_AS(synth::synthesize_waveform(s), InvalidArgument);
  }

  TEST_CASE("true-residual synthesis of tonal corpus clips correlates with the original") {
    data::CorpusOptions opts;
    opts.num_classes = 12;
    for (std::size_t k = 0; k < 12; k += 3) {
      const auto clip = data::synthesize_clip(k, 0, opts);
      const auto rendered = synth::synthesize_waveform(sqrt_spec_of(clip.audio), 16);
      INFO("class ", k);
      CHECK(dsp::normalized_cross_correlation(clip.audio, rendered) >= 0.5);
    }
  }
}
