#pragma once

// Convolutional visual encoder and the per-frame feature: the encoding of
// the space-time image followed by the encoding of the first RGB frame.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "foley/image.hpp"
#include "foley/nn.hpp"
#include "foley/video.hpp"

namespace foley::features {

struct EncoderConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  /// Output channels of each {conv 3x3, relu, 2x downsample} stage.
  std::vector<std::size_t> channels{8, 16, 32};
  std::size_t output_dim = 64;

  void validate() const;
  std::size_t pooled_dim() const { return channels.back(); }
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

using FrameFeature = std::vector<double>;

class ConvEncoder {
 public:
  ConvEncoder(EncoderConfig config, std::uint64_t seed);

  const EncoderConfig& config() const noexcept { return config_; }

  /// Conv trunk plus global average pool: [3 x H x W] -> [pooled_dim].
  ad::Tensor pooled(const ad::Tensor& image) const;
  /// Affine projection of pooled rows: [n x pooled_dim] -> [n x output_dim].
  ad::Tensor project(const ad::Tensor& pooled_rows) const { return head_(pooled_rows); }
  /// Full encoder: [3 x H x W] -> [1 x output_dim].
  ad::Tensor encode(const ad::Tensor& image) const;

  /// Freezing the trunk stops ops on conv weights from recording a graph.
  void set_trunk_trainable(bool on);
  void set_head_trainable(bool on);

  void collect(const std::string& prefix, nn::ParamList& out, bool trunk = true, bool head = true) const;

 private:
  struct Stage {
    ad::Tensor weight;
    ad::Tensor bias;
  };
  EncoderConfig config_;
  std::vector<Stage> stages_;
  nn::Linear head_;
};

/// Image tensors [3 x H x W] in the encoder's layout.
ad::Tensor image_tensor(const video::SpaceTimeImage& sp);
ad::Tensor image_tensor(const video::RgbImage& rgb);
/// Grayscale frame replicated into three planes.
ad::Tensor image_tensor(const video::GrayImage& gray);
ad::Tensor image_tensor(std::span<const video::GrayImage> planes);

/// f(img) as a plain vector of length output_dim.
FrameFeature encode_image(const ConvEncoder& encoder, const ad::Tensor& image);

/// Builds V_t for one clip, encoding the appearance (first RGB frame) branch once.
class FrameFeatureBuilder {
 public:
  FrameFeatureBuilder(const ConvEncoder& encoder, const video::RgbImage& first_rgb);

  FrameFeature build(const video::SpaceTimeImage& sp) const;
  const FrameFeature& appearance() const noexcept { return appearance_; }

 private:
  const ConvEncoder& encoder_;
  FrameFeature appearance_;
};

/// Motion encoding followed by appearance encoding, without caching the
/// appearance branch.
FrameFeature build_frame_feature(const video::SpaceTimeImage& sp, const video::RgbImage& first_rgb,
                                 const ConvEncoder& encoder);

/// Feature container: magic "AFFEAT01", u32 count, u32 dim, count*dim f32 LE.
void save_features(std::span<const FrameFeature> features, const std::filesystem::path& path);
/// Throws CodecError on truncation, ConfigError when `expected_dim` disagrees.
std::vector<FrameFeature> load_precomputed_features(const std::filesystem::path& path,
                                                    std::optional<std::size_t> expected_dim = std::nullopt);

}  // namespace foley::features
