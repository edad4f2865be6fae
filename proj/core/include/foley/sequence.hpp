#pragma once

// Recurrent sequence classifiers over per-frame features: the Fast-Slow LSTM
// and a single-cell baseline, both with a class head and a spectrogram
// residual head on the top hidden state.

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "foley/nn.hpp"
#include "foley/tensor.hpp"

namespace foley::seq {

enum class Mode { train, eval };

struct FsLstmConfig {
  std::size_t input_dim = 128;
  std::size_t hidden_dim = 32;
  std::size_t num_fast_cells = 4;
  std::size_t num_classes = 12;
  std::size_t residual_dim = 129;
  double zoneout_prob = 0.05;
  double dropout_prob = 0.1;
  double forget_bias_init = 1.0;
  std::uint64_t seed = 1;

  void validate() const;
  friend bool operator==(const FsLstmConfig&, const FsLstmConfig&) = default;
};

/// Hidden and cell tensors, each [batch x hidden].
struct CellState {
  ad::Tensor hidden;
  ad::Tensor cell;
};

CellState zero_state(std::size_t batch, std::size_t hidden);

/// LSTM cell with layer normalization applied separately to each gate's
/// pre-activation. Gate order in the packed weights: input, forget, output, candidate.
struct LstmCell {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  /// [input_dim x 4H]; undefined for input-free cells.
  ad::Tensor input_weight;
  /// [H x 4H].
  ad::Tensor recurrent_weight;
  std::array<ad::Tensor, 4> gate_gain;
  std::array<ad::Tensor, 4> gate_bias;

  static LstmCell create(std::size_t input_dim, std::size_t hidden_dim, double forget_bias, Rng& rng);
  void collect(const std::string& prefix, nn::ParamList& out) const;
};

/// Addresses the zoneout masks of one cell application.
struct StepContext {
  Mode mode = Mode::eval;
  double zoneout_prob = 0.0;
  ad::MaskKey key;
};

/// One cell update. `input` may be undefined for input-free cells. Zoneout
/// keeps each previous state element with probability zoneout_prob in train
/// mode and blends by that probability in eval mode.
CellState lstm_cell_step(const LstmCell& cell, const CellState& prev, const ad::Tensor& input, const StepContext& ctx);

/// Per-call settings; `pass` distinguishes the masks of successive training steps.
struct RunContext {
  Mode mode = Mode::eval;
  std::uint64_t pass = 0;
};

struct SequenceOutput {
  /// Top hidden state per timestep, [batch x hidden], after output dropout.
  std::vector<ad::Tensor> top;
  /// Class logits per timestep, [batch x classes].
  std::vector<ad::Tensor> logits;
};

class SequenceModel {
 public:
  explicit SequenceModel(const FsLstmConfig& config);
  virtual ~SequenceModel() = default;
  SequenceModel(const SequenceModel&) = delete;
  SequenceModel& operator=(const SequenceModel&) = delete;

  const FsLstmConfig& config() const noexcept { return config_; }

  /// `inputs[t]` is [batch x input_dim]; all timesteps share the batch size.
  SequenceOutput forward(std::span<const ad::Tensor> inputs, const RunContext& ctx) const;

  /// Mean over timesteps of the per-step logits: [batch x classes].
  ad::Tensor pooled_logits(const SequenceOutput& out) const;
  /// Residual head per timestep: T tensors of [batch x residual_dim].
  std::vector<ad::Tensor> residuals(const SequenceOutput& out) const;
  /// Residuals time-aligned to `target_frames` rows per item, stacked item by
  /// item: [batch * target_frames x residual_dim]. Aligning hidden states
  /// before the affine head equals aligning the head's outputs.
  ad::Tensor aligned_residuals(const SequenceOutput& out, std::size_t target_frames) const;

  const nn::Linear& class_head() const noexcept { return class_head_; }
  const nn::Linear& residual_head() const noexcept { return residual_head_; }

  void collect(nn::ParamList& out) const;

 protected:
  /// Top hidden state per timestep, before output dropout.
  virtual std::vector<ad::Tensor> run(std::span<const ad::Tensor> inputs, const RunContext& ctx) const = 0;
  virtual void collect_cells(nn::ParamList& out) const = 0;

  StepContext step_context(const RunContext& ctx, std::uint64_t layer, std::size_t t) const;

  FsLstmConfig config_;
  Rng rng_;
  nn::Linear class_head_;
  nn::Linear residual_head_;
};

/// Fast cells L_1..L_N share one state that they update in sequence within a
/// timestep; the slow cell U runs once per timestep between L_1 and L_2.
class FsLstm final : public SequenceModel {
 public:
  explicit FsLstm(const FsLstmConfig& config);

  const std::vector<LstmCell>& fast_cells() const noexcept { return fast_; }
  const LstmCell& slow_cell() const noexcept { return slow_; }
  /// Number of input-free fast cell updates performed by the last forward pass.
  std::size_t deep_fast_steps() const noexcept { return deep_steps_; }

 private:
  std::vector<ad::Tensor> run(std::span<const ad::Tensor> inputs, const RunContext& ctx) const override;
  void collect_cells(nn::ParamList& out) const override;

  std::vector<LstmCell> fast_;
  LstmCell slow_;
  mutable std::size_t deep_steps_ = 0;
};

/// One standard LSTM layer with the same heads.
class SimpleLstm final : public SequenceModel {
 public:
  explicit SimpleLstm(const FsLstmConfig& config);

 private:
  std::vector<ad::Tensor> run(std::span<const ad::Tensor> inputs, const RunContext& ctx) const override;
  void collect_cells(nn::ParamList& out) const override;

  LstmCell cell_;
};

enum class SequenceKind { fs_lstm, simple_lstm };

std::unique_ptr<SequenceModel> make_sequence_model(SequenceKind kind, const FsLstmConfig& config);

/// Cross-entropy of pooled logits plus lambda times the batch-mean robust
/// energy of (residual + base) against the target, all rows [batch*T x bins].
ad::Tensor fslstm_loss(const ad::Tensor& pooled_logits, const ad::Tensor& aligned_residuals,
                       std::span<const std::size_t> labels, const ad::Tensor& target_rows, const ad::Tensor& base_rows,
                       double lambda = 1.0, double alpha = 1.0);

}  // namespace foley::seq
