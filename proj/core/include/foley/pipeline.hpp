#pragma once

// End-to-end orchestration: clip preparation with cached visual features,
// training and inference for both classifiers, synthesis, and the ablation
// runner.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "foley/checkpoint.hpp"
#include "foley/config.hpp"
#include "foley/data.hpp"
#include "foley/eval.hpp"
#include "foley/features.hpp"
#include "foley/sequence.hpp"
#include "foley/synth.hpp"
#include "foley/trn.hpp"

namespace foley::pipeline {

struct PreparedClip {
  std::string id;
  std::size_t label = 0;
  data::Split split = data::Split::train;
  /// Visual timesteps after frame upsampling.
  std::size_t steps = 0;
  /// Trunk features of each timestep's visual input, [steps x pooled_dim].
  std::vector<double> pooled;
  /// Trunk features of the first RGB frame.
  std::vector<double> appearance;
  dsp::AudioClip audio;
  dsp::Spectrogram sqrt_spec;
};

struct PreparedDataset {
  std::vector<std::string> class_names;
  std::vector<PreparedClip> clips;
  std::size_t pooled_dim = 0;

  std::vector<std::size_t> indices(data::Split split) const;
  /// Throws InvalidArgument("unknown clip ...") for an absent id.
  std::size_t find(const std::string& clip_id) const;
};

/// The frozen convolutional trunk plus a trainable projection head.
features::ConvEncoder make_encoder(const RunConfig& config);

/// Upsampled frames per the configured mode and factor.
video::FrameSequence upsample(const video::FrameSequence& seq, const RunConfig& config);

/// Visual input of one timestep: the space-time image or the bare frame.
ad::Tensor visual_input(const video::FrameSequence& seq, std::size_t t, VisualInput input);

PreparedClip prepare_clip(const data::DatasetManifest& manifest, const data::ManifestEntry& entry,
                          const RunConfig& config, const features::ConvEncoder& encoder);
/// Clips are prepared independently on `threads` workers; the result does
/// not depend on the thread count.
PreparedDataset prepare_dataset(const data::DatasetManifest& manifest, const RunConfig& config,
                                std::size_t threads = 1);

/// Class bank from the training split.
synth::ClassSpectrogramBank build_bank(const PreparedDataset& data, const RunConfig& config);

struct TrainReport {
  std::vector<double> epoch_loss;
  double seconds = 0.0;
};

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

struct Prediction {
  /// Row-major [clips x classes] softmax probabilities.
  std::vector<double> probabilities;
  std::vector<std::size_t> predicted;
  std::vector<std::size_t> labels;
};

/// Per-dimension standardization of trunk features, fitted on training clips
/// and stored with the model. Frozen random trunks emit small features
/// around a large shared offset; without this the recurrent term swamps the
/// input term of every gate.
class FeatureNorm {
 public:
  explicit FeatureNorm(std::size_t dim);

  /// Fits motion rows (every timestep) and appearance rows separately.
  void fit(const PreparedDataset& data, std::span<const std::size_t> clips);
  void apply_motion(std::span<double> row) const { apply(motion_, row); }
  void apply_appearance(std::span<double> row) const { apply(appearance_, row); }
  /// Shift and scale tensors, restored from checkpoints.
  void collect(const std::string& prefix, nn::ParamList& out) const;

 private:
  struct Affine {
    ad::Tensor shift, scale;
  };
  static void apply(const Affine& a, std::span<double> row);
  Affine motion_, appearance_;
};

/// Model 1: encoder head + sequence network with class and residual heads.
class SequenceFoley {
 public:
  explicit SequenceFoley(const RunConfig& config);

  const RunConfig& config() const noexcept { return config_; }
  const seq::SequenceModel& network() const noexcept { return *net_; }
  nn::ParamList parameters() const;
  /// Parameters updated by training (the trunk stays frozen).
  nn::ParamList trainable() const;

  /// Per-timestep inputs [batch x 2D] for the given clips, truncated to the
  /// shortest clip in the batch.
  std::vector<ad::Tensor> inputs(const PreparedDataset& data, std::span<const std::size_t> batch) const;

  TrainReport train(const PreparedDataset& data, const synth::ClassSpectrogramBank& bank,
                    const EpochCallback& on_epoch = {});
  Prediction predict(const PreparedDataset& data, std::span<const std::size_t> clips) const;
  /// Residual for one clip, aligned to `frames` rows.
  synth::FrameMatrix residual(const PreparedDataset& data, std::size_t clip, std::size_t frames) const;

  Checkpoint checkpoint() const;
  void load(const Checkpoint& ckpt);

 private:
  RunConfig config_;
  features::ConvEncoder encoder_;
  FeatureNorm norm_;
  std::unique_ptr<seq::SequenceModel> net_;
};

/// Model 2: encoder head + multi-scale relation network over sampled frames.
class RelationFoley {
 public:
  explicit RelationFoley(const RunConfig& config);

  const RunConfig& config() const noexcept { return config_; }
  const trn::Trn& network() const noexcept { return net_; }
  nn::ParamList parameters() const;
  nn::ParamList trainable() const;

  /// Sampled frame rows [batch*sampled x 2D].
  ad::Tensor inputs(const PreparedDataset& data, std::span<const std::size_t> batch) const;
  std::vector<std::size_t> sampled_steps(std::size_t steps) const;

  TrainReport train(const PreparedDataset& data, const EpochCallback& on_epoch = {});
  Prediction predict(const PreparedDataset& data, std::span<const std::size_t> clips) const;

  Checkpoint checkpoint() const;
  void load(const Checkpoint& ckpt);

 private:
  RunConfig config_;
  features::ConvEncoder encoder_;
  FeatureNorm norm_;
  trn::Trn net_;
};

double accuracy(const Prediction& p);

/// Composes the predicted spectrogram (base of the predicted class plus the
/// aligned residual for Model 1, base alone for Model 2) and renders it.
dsp::AudioClip synthesize_sequence(const SequenceFoley& model, const PreparedDataset& data, std::size_t clip,
                                   const synth::ClassSpectrogramBank& bank);
dsp::AudioClip synthesize_relation(const RelationFoley& model, const PreparedDataset& data, std::size_t clip,
                                   const synth::ClassSpectrogramBank& bank);
/// Renders the clip's own spectrogram through the bank: base + true residual.
dsp::AudioClip synthesize_true_residual(const PreparedDataset& data, std::size_t clip,
                                        const synth::ClassSpectrogramBank& bank, std::size_t gl_iterations);

eval::RetrievalConfig retrieval_config(const RunConfig& config);

// ---- ablation ---------------------------------------------------------------------

enum class ModelKind { sequence, relation };

struct AblationVariant {
  std::string axis;
  std::string name;
  ModelKind model = ModelKind::sequence;
  RunConfig config;
};

/// Axes: "input" (space_time vs raw), "sequence" (fs_lstm vs simple_lstm),
/// "frames" (interpolate vs replicate) and "scale" (Q = 4, 8, 16 over 16
/// sampled frames). Each axis contrasts the base configuration with its
/// alternatives.
std::vector<AblationVariant> ablation_grid(const RunConfig& base, std::span<const std::string> axes);

struct AblationCell {
  std::string axis;
  std::string variant;
  std::uint64_t seed = 0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

struct AblationResult {
  std::vector<AblationCell> cells;
  std::vector<std::string> skipped;

  /// Mean test accuracy of one variant over seeds.
  double mean_accuracy(const std::string& axis, const std::string& variant) const;
  /// (axis, variant, seeds, mean) ranked by mean accuracy within each axis.
  eval::Table table() const;
};

using AblationProgress = std::function<void(const AblationCell&)>;

/// Trains every variant for every seed in base_seed .. base_seed + seeds - 1.
/// Infeasible variants are skipped and reported in `skipped`.
AblationResult ablation_run(const data::DatasetManifest& manifest, std::span<const AblationVariant> variants,
                            std::size_t seeds, std::uint64_t base_seed, const AblationProgress& progress = {});

}  // namespace foley::pipeline
