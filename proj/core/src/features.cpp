#include "foley/features.hpp"

#include "binio.hpp"
#include "foley/error.hpp"

namespace foley::features {

void EncoderConfig::validate() const {
  if (channels.empty()) throw ConfigError("encoder: at least one stage is required");
  if (output_dim == 0) throw ConfigError("encoder: output_dim must be positive");
  std::size_t h = height, w = width;
  for (std::size_t c : channels) {
    if (c == 0) throw ConfigError("encoder: stage width must be positive");
    h /= 2;
    w /= 2;
  }
  if (h == 0 || w == 0) {
    throw ConfigError("encoder: " + std::to_string(height) + "x" + std::to_string(width) +
                      " input is too small for " + std::to_string(channels.size()) + " downsampling stages");
  }
}

ConvEncoder::ConvEncoder(EncoderConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(hash_words({seed, 0x656e636f646572ULL}));
  std::size_t in = 3;
  for (std::size_t out : config_.channels) {
    stages_.push_back({nn::he_normal({out, in, 3, 3}, in * 9, rng), ad::Tensor::zeros({out}, true)});
    in = out;
  }
  head_ = nn::Linear::xavier(in, config_.output_dim, rng);
}

ad::Tensor ConvEncoder::pooled(const ad::Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != config_.height || image.dim(2) != config_.width) {
    throw ShapeError("encoder: expected image [3 x " + std::to_string(config_.height) + " x " +
                     std::to_string(config_.width) + "], got " + ad::shape_string(image.shape()));
  }
  ad::Tensor x = image;
  for (const auto& stage : stages_) x = ad::avg_pool2(ad::relu(ad::conv2d_3x3(x, stage.weight, stage.bias)));
  return ad::global_avg_pool(x);
}

ad::Tensor ConvEncoder::encode(const ad::Tensor& image) const {
  const auto p = pooled(image);
  return project(ad::reshape(p, {1, p.size()}));
}

void ConvEncoder::set_trunk_trainable(bool on) {
  for (auto& s : stages_) {
    s.weight.set_requires_grad(on);
    s.bias.set_requires_grad(on);
  }
}

void ConvEncoder::set_head_trainable(bool on) {
  head_.weight.set_requires_grad(on);
  head_.bias.set_requires_grad(on);
}

void ConvEncoder::collect(const std::string& prefix, nn::ParamList& out, bool trunk, bool head) const {
  if (trunk) {
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      out.push_back({prefix + ".conv" + std::to_string(i) + ".weight", stages_[i].weight});
      out.push_back({prefix + ".conv" + std::to_string(i) + ".bias", stages_[i].bias});
    }
  }
  if (head) head_.collect(prefix + ".head", out);
}

ad::Tensor image_tensor(std::span<const video::GrayImage> planes) {
  if (planes.empty()) throw InvalidArgument("image_tensor: no planes");
  const std::size_t h = planes[0].height, w = planes[0].width;
  std::vector<double> v;
  v.reserve(planes.size() * h * w);
  for (const auto& p : planes) {
    if (p.height != h || p.width != w) throw ShapeError("image_tensor: planes differ in size");
    v.insert(v.end(), p.pixels.begin(), p.pixels.end());
  }
  return ad::Tensor::from({planes.size(), h, w}, std::move(v));
}

ad::Tensor image_tensor(const video::SpaceTimeImage& sp) { return image_tensor(std::span(sp.channels)); }

ad::Tensor image_tensor(const video::GrayImage& gray) {
  const video::GrayImage planes[3] = {gray, gray, gray};
  return image_tensor(std::span(planes));
}

ad::Tensor image_tensor(const video::RgbImage& rgb) {
  const std::size_t plane = rgb.height * rgb.width;
  std::vector<double> v(3 * plane);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) v[c * plane + i] = rgb.pixels[i * 3 + c];
  }
  return ad::Tensor::from({3, rgb.height, rgb.width}, std::move(v));
}

FrameFeature encode_image(const ConvEncoder& encoder, const ad::Tensor& image) {
  const auto out = encoder.encode(image);
  return {out.data().begin(), out.data().end()};
}

FrameFeatureBuilder::FrameFeatureBuilder(const ConvEncoder& encoder, const video::RgbImage& first_rgb)
    : encoder_(encoder), appearance_(encode_image(encoder, image_tensor(first_rgb))) {}

FrameFeature FrameFeatureBuilder::build(const video::SpaceTimeImage& sp) const {
  FrameFeature v = encode_image(encoder_, image_tensor(sp));
  v.insert(v.end(), appearance_.begin(), appearance_.end());
  return v;
}

FrameFeature build_frame_feature(const video::SpaceTimeImage& sp, const video::RgbImage& first_rgb,
                                 const ConvEncoder& encoder) {
  FrameFeature v = encode_image(encoder, image_tensor(sp));
  const FrameFeature app = encode_image(encoder, image_tensor(first_rgb));
  v.insert(v.end(), app.begin(), app.end());
  return v;
}

void save_features(std::span<const FrameFeature> features, const std::filesystem::path& path) {
  const std::size_t dim = features.empty() ? 0 : features[0].size();
  detail::ByteWriter out;
  out.magic("AFFEAT01");
  out.u32(static_cast<std::uint32_t>(features.size()));
  out.u32(static_cast<std::uint32_t>(dim));
  for (const auto& f : features) {
    if (f.size() != dim) throw ShapeError("save_features: ragged feature list");
    for (double v : f) out.f32(v);
  }
  out.write_file(path);
}

std::vector<FrameFeature> load_precomputed_features(const std::filesystem::path& path,
                                                    std::optional<std::size_t> expected_dim) {
  auto in = detail::ByteReader::from_file(path);
  in.expect_magic("AFFEAT01");
  const std::size_t count = in.u32();
  const std::size_t dim = in.u32();
  if (expected_dim && dim != *expected_dim) {
    throw ConfigError(path.string() + ": feature dim " + std::to_string(dim) + " does not match model input " +
                      std::to_string(*expected_dim));
  }
  in.require(static_cast<std::uint64_t>(count) * dim, 4, "feature payload");
  std::vector<FrameFeature> out(count, FrameFeature(dim));
  for (auto& f : out) {
    for (double& v : f) v = in.f32();
  }
  return out;
}

}  // namespace foley::features
