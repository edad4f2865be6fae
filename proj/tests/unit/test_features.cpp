#include <doctest.h>

#include <fstream>

#include "foley/error.hpp"
#include "foley/features.hpp"
#include "foley/optim.hpp"
#include "support.hpp"

using namespace foley;
using namespace foley::features;

namespace {

EncoderConfig toy_config() {
  EncoderConfig c;
  c.height = 8;
  c.width = 8;
  c.channels = {3, 4};
  c.output_dim = 5;
  return c;
}

video::FrameSequence noise_sequence(std::size_t n, std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  video::FrameSequence seq;
  seq.fps = 16.0;
  for (std::size_t t = 0; t < n; ++t) {
    video::GrayImage img(size, size);
    for (double& p : img.pixels) p = rng.uniform();
    seq.frames.push_back(img);
  }
  seq.first_rgb = video::gray_to_rgb(seq.frames.front());
  return seq;
}

}  // namespace

TEST_SUITE("encoder") {
  TEST_CASE("zero weights map any image to zero") {
    ConvEncoder enc(toy_config(), 3);
    nn::ParamList params;
    enc.collect("enc", params);
    nn::zero_all(params);
    const auto seq = noise_sequence(3, 8, 1);
    for (double v : encode_image(enc, image_tensor(video::space_time_image(seq, 1)))) CHECK(v == 0.0);
  }

  TEST_CASE("output length is the configured dimension") {
    EncoderConfig c;
    ConvEncoder enc(c, 1);
    const auto seq = noise_sequence(3, 64, 2);
    CHECK(encode_image(enc, image_tensor(seq.first_rgb)).size() == 64);
    CHECK(enc.pooled(image_tensor(seq.frames[0])).size() == c.pooled_dim());
  }

  TEST_CASE("size mismatch is a shape error") {
    ConvEncoder enc(toy_config(), 1);
    CHECK_THROWS_AS(enc.encode(ad::Tensor::zeros({3, 9, 8})), ShapeError);
    CHECK_THROWS_AS(enc.encode(ad::Tensor::zeros({2, 8, 8})), ShapeError);
  }

  TEST_CASE("invalid configurations are rejected") {
    auto c = toy_config();
    c.channels.clear();
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = toy_config();
    c.output_dim = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("same seed gives the same weights") {
    const auto seq = noise_sequence(2, 8, 3);
    const auto img = image_tensor(seq.first_rgb);
    CHECK(encode_image(ConvEncoder(toy_config(), 9), img) == encode_image(ConvEncoder(toy_config(), 9), img));
    CHECK(encode_image(ConvEncoder(toy_config(), 9), img) != encode_image(ConvEncoder(toy_config(), 10), img));
  }

  TEST_CASE("encoder forward passes a gradient check on a toy configuration") {
    ConvEncoder enc(toy_config(), 4);
    enc.set_trunk_trainable(true);
    enc.set_head_trainable(true);
    nn::ParamList params;
    enc.collect("enc", params);
    const auto weights = nn::tensors_of(params);
    const auto seq = noise_sequence(3, 8, 5);
    const auto img = image_tensor(video::space_time_image(seq, 1));
    Rng rng(6);
    std::vector<double> proj(5);
    for (double& v : proj) v = rng.uniform(-1.0, 1.0);
    const auto p = ad::Tensor::from({1, 5}, proj);
    const auto r = ad::grad_check_params([&] { return ad::sum(ad::mul(enc.encode(img), p)); }, weights);
    INFO("rel err ", r.max_relative_error);
    CHECK(r.passed);
  }

  TEST_CASE("frozen trunk records no gradient") {
    ConvEncoder enc(toy_config(), 4);
    enc.set_trunk_trainable(false);
    nn::ParamList trunk;
    enc.collect("enc", trunk, true, false);
    for (const auto& t : trunk) CHECK_FALSE(t.tensor.requires_grad());
  }
}

TEST_SUITE("frame features") {
  TEST_CASE("concatenation is lossless and the appearance branch is reused") {
    ConvEncoder enc(toy_config(), 7);
    const auto seq = noise_sequence(5, 8, 8);
    const FrameFeatureBuilder builder(enc, seq.first_rgb);
    for (std::size_t t = 0; t < 5; ++t) {
      const auto sp = video::space_time_image(seq, t);
      const auto v = builder.build(sp);
      REQUIRE(v.size() == 10);
      const auto motion = encode_image(enc, image_tensor(sp));
      const auto appearance = encode_image(enc, image_tensor(seq.first_rgb));
      CHECK(std::vector<double>(v.begin(), v.begin() + 5) == motion);
      CHECK(std::vector<double>(v.begin() + 5, v.end()) == appearance);
      CHECK(v == build_frame_feature(sp, seq.first_rgb, enc));
    }
  }

  TEST_CASE("default dimension doubles to 128") {
    ConvEncoder enc(EncoderConfig{}, 1);
    const auto seq = noise_sequence(3, 64, 1);
    CHECK(build_frame_feature(video::space_time_image(seq, 1), seq.first_rgb, enc).size() == 128);
  }

  TEST_CASE("static clip gives identical interior features") {
    ConvEncoder enc(toy_config(), 2);
    auto seq = noise_sequence(1, 8, 4);
    for (int i = 0; i < 4; ++i) seq.frames.push_back(seq.frames[0]);
    const FrameFeatureBuilder builder(enc, seq.first_rgb);
    const auto first = builder.build(video::space_time_image(seq, 1));
    for (std::size_t t = 2; t < 4; ++t) CHECK(builder.build(video::space_time_image(seq, t)) == first);
  }
}

TEST_SUITE("feature container") {
  TEST_CASE("round trip at float precision") {
    const auto dir = testing::scratch_dir("features");
    Rng rng(1);
    std::vector<FrameFeature> feats(100, FrameFeature(4096));
    for (auto& f : feats) {
      for (double& v : f) v = static_cast<float>(rng.uniform(-3.0, 3.0));
    }
    save_features(feats, dir / "f.bin");
    const auto back = load_precomputed_features(dir / "f.bin", 4096);
    REQUIRE(back.size() == 100);
    CHECK(back == feats);
  }

  TEST_CASE("dimension mismatch and truncation") {
    const auto dir = testing::scratch_dir("features_bad");
    save_features(std::vector<FrameFeature>(3, FrameFeature(8, 0.5)), dir / "f.bin");
    CHECK_THROWS_AS(load_precomputed_features(dir / "f.bin", 16), ConfigError);
    std::filesystem::resize_file(dir / "f.bin", std::filesystem::file_size(dir / "f.bin") - 5);
    CHECK_THROWS_AS(load_precomputed_features(dir / "f.bin"), CodecError);
    {
      std::ofstream bad(dir / "g.bin", std::ios::binary);
      bad << "NOTFEAT!";
    }
    CHECK_THROWS_AS(load_precomputed_features(dir / "g.bin"), CodecError);
  }
}
