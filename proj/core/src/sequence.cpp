#include "foley/sequence.hpp"

#include "foley/error.hpp"
#include "foley/synth.hpp"

namespace foley::seq {

void FsLstmConfig::validate() const {
  if (num_fast_cells < 2) throw ConfigError("fs-lstm: num_fast_cells must be >= 2");
  if (input_dim == 0 || hidden_dim == 0 || num_classes == 0 || residual_dim == 0) {
    throw ConfigError("fs-lstm: dimensions must be positive");
  }
  if (!(zoneout_prob >= 0.0 && zoneout_prob <= 1.0)) throw ConfigError("fs-lstm: zoneout_prob must be in [0, 1]");
  if (!(dropout_prob >= 0.0 && dropout_prob < 1.0)) throw ConfigError("fs-lstm: dropout_prob must be in [0, 1)");
}

CellState zero_state(std::size_t batch, std::size_t hidden) {
  return {ad::Tensor::zeros({batch, hidden}), ad::Tensor::zeros({batch, hidden})};
}

LstmCell LstmCell::create(std::size_t input_dim, std::size_t hidden_dim, double forget_bias, Rng& rng) {
  LstmCell c;
  c.input_dim = input_dim;
  c.hidden_dim = hidden_dim;
  if (input_dim > 0) c.input_weight = nn::xavier_uniform({input_dim, 4 * hidden_dim}, input_dim, 4 * hidden_dim, rng);
  c.recurrent_weight = nn::orthogonal(hidden_dim, 4 * hidden_dim, rng);
  for (std::size_t g = 0; g < 4; ++g) {
    c.gate_gain[g] = ad::Tensor::full({hidden_dim}, 1.0, true);
    c.gate_bias[g] = ad::Tensor::full({hidden_dim}, g == 1 ? forget_bias : 0.0, true);
  }
  return c;
}

void LstmCell::collect(const std::string& prefix, nn::ParamList& out) const {
  static constexpr const char* kGate[4] = {"input", "forget", "output", "candidate"};
  if (input_weight.defined()) out.push_back({prefix + ".input_weight", input_weight});
  out.push_back({prefix + ".recurrent_weight", recurrent_weight});
  for (std::size_t g = 0; g < 4; ++g) {
    out.push_back({prefix + ".ln_" + kGate[g] + ".gain", gate_gain[g]});
    out.push_back({prefix + ".ln_" + kGate[g] + ".bias", gate_bias[g]});
  }
}

namespace {

ad::Tensor zoneout(const ad::Tensor& prev, const ad::Tensor& next, const StepContext& ctx, std::uint64_t stream) {
  const double z = ctx.zoneout_prob;
  if (z <= 0.0) return next;
  if (z >= 1.0) return prev;
  std::vector<double> keep(prev.size(), z);
  if (ctx.mode == Mode::train) {
    ad::MaskKey key = ctx.key;
    key.stream = stream;
    const std::uint64_t base = hash_words({key.seed, key.layer, key.step, key.stream, 0x7a6f6e65ULL});
    for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = unit_from_bits(mix64(base ^ mix64(i))) < z ? 1.0 : 0.0;
  }
  return ad::add(next, ad::mul(ad::Tensor::from(prev.shape(), std::move(keep)), ad::sub(prev, next)));
}

}  // namespace

CellState lstm_cell_step(const LstmCell& cell, const CellState& prev, const ad::Tensor& input, const StepContext& ctx) {
  const std::size_t h = cell.hidden_dim;
  if (prev.hidden.rank() != 2 || prev.hidden.dim(1) != h || prev.cell.shape() != prev.hidden.shape()) {
    throw ShapeError("lstm step: state " + ad::shape_string(prev.hidden.shape()) + " does not match hidden size " +
                     std::to_string(h));
  }
  ad::Tensor pre = ad::matmul(prev.hidden, cell.recurrent_weight);
  if (input.defined()) {
    if (!cell.input_weight.defined()) throw ShapeError("lstm step: input given to an input-free cell");
    if (input.rank() != 2 || input.dim(1) != cell.input_dim || input.dim(0) != prev.hidden.dim(0)) {
      throw ShapeError("lstm step: input " + ad::shape_string(input.shape()) + " vs expected [" +
                       std::to_string(prev.hidden.dim(0)) + " x " + std::to_string(cell.input_dim) + "]");
    }
    pre = ad::add(pre, ad::matmul(input, cell.input_weight));
  } else if (cell.input_weight.defined()) {
    throw ShapeError("lstm step: cell expects an input of width " + std::to_string(cell.input_dim));
  }
  std::array<ad::Tensor, 4> gate;
  for (std::size_t g = 0; g < 4; ++g) {
    gate[g] = ad::layer_norm(ad::slice(pre, 1, g * h, h), cell.gate_gain[g], cell.gate_bias[g]);
  }
  const auto in = ad::sigmoid(gate[0]);
  const auto forget = ad::sigmoid(gate[1]);
  const auto out = ad::sigmoid(gate[2]);
  const auto cand = ad::tanh(gate[3]);
  const auto c_new = ad::add(ad::mul(forget, prev.cell), ad::mul(in, cand));
  const auto h_new = ad::mul(out, ad::tanh(c_new));
  return {zoneout(prev.hidden, h_new, ctx, 0), zoneout(prev.cell, c_new, ctx, 1)};
}

SequenceModel::SequenceModel(const FsLstmConfig& config) : config_(config), rng_(config.seed) {
  config_.validate();
}

StepContext SequenceModel::step_context(const RunContext& ctx, std::uint64_t layer, std::size_t t) const {
  return {ctx.mode, config_.zoneout_prob, ad::MaskKey{config_.seed, layer, hash_words({ctx.pass, t}), 0}};
}

SequenceOutput SequenceModel::forward(std::span<const ad::Tensor> inputs, const RunContext& ctx) const {
  if (inputs.empty()) throw InvalidArgument("sequence model: empty feature sequence");
  SequenceOutput out;
  out.top = run(inputs, ctx);
  out.logits.reserve(out.top.size());
  for (std::size_t t = 0; t < out.top.size(); ++t) {
    if (ctx.mode == Mode::train) {
      out.top[t] = ad::dropout(out.top[t], config_.dropout_prob,
                               ad::MaskKey{config_.seed, 1000, hash_words({ctx.pass, t}), 2});
    }
    out.logits.push_back(class_head_(out.top[t]));
  }
  return out;
}

ad::Tensor SequenceModel::pooled_logits(const SequenceOutput& out) const {
  return ad::scale(ad::add_n(out.logits), 1.0 / static_cast<double>(out.logits.size()));
}

std::vector<ad::Tensor> SequenceModel::residuals(const SequenceOutput& out) const {
  std::vector<ad::Tensor> r;
  r.reserve(out.top.size());
  for (const auto& h : out.top) r.push_back(residual_head_(h));
  return r;
}

ad::Tensor SequenceModel::aligned_residuals(const SequenceOutput& out, std::size_t target_frames) const {
  const std::size_t steps = out.top.size();
  const std::size_t batch = out.top.front().dim(0);
  const auto stacked = ad::concat(out.top, 0);  // row t * batch + b
  const auto align = ad::Tensor::from({target_frames, steps}, nn::time_resample_matrix(steps, target_frames));
  std::vector<ad::Tensor> items;
  items.reserve(batch);
  std::vector<std::size_t> rows(steps);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < steps; ++t) rows[t] = t * batch + b;
    items.push_back(ad::matmul(align, ad::gather_rows(stacked, rows)));
  }
  return residual_head_(ad::concat(items, 0));
}

void SequenceModel::collect(nn::ParamList& out) const {
  collect_cells(out);
  class_head_.collect("class_head", out);
  residual_head_.collect("residual_head", out);
}

FsLstm::FsLstm(const FsLstmConfig& config) : SequenceModel(config) {
  const std::size_t h = config_.hidden_dim;
  fast_.push_back(LstmCell::create(config_.input_dim, h, config_.forget_bias_init, rng_));
  slow_ = LstmCell::create(h, h, config_.forget_bias_init, rng_);
  fast_.push_back(LstmCell::create(h, h, config_.forget_bias_init, rng_));
  for (std::size_t i = 2; i < config_.num_fast_cells; ++i) {
    fast_.push_back(LstmCell::create(0, h, config_.forget_bias_init, rng_));
  }
  class_head_ = nn::Linear::xavier(h, config_.num_classes, rng_);
  residual_head_ = nn::Linear::xavier(h, config_.residual_dim, rng_);
}

std::vector<ad::Tensor> FsLstm::run(std::span<const ad::Tensor> inputs, const RunContext& ctx) const {
  const std::size_t batch = inputs.front().dim(0);
  const std::size_t h = config_.hidden_dim;
  CellState fast = zero_state(batch, h);
  CellState slow = zero_state(batch, h);
  std::vector<ad::Tensor> top;
  top.reserve(inputs.size());
  deep_steps_ = 0;
  const ad::Tensor none;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    ad::Tensor x = inputs[t];
    if (ctx.mode == Mode::train) {
      x = ad::dropout(x, config_.dropout_prob, ad::MaskKey{config_.seed, 999, hash_words({ctx.pass, t}), 3});
    }
    fast = lstm_cell_step(fast_[0], fast, x, step_context(ctx, 1, t));
    slow = lstm_cell_step(slow_, slow, fast.hidden, step_context(ctx, 0, t));
    fast = lstm_cell_step(fast_[1], fast, slow.hidden, step_context(ctx, 2, t));
    for (std::size_t i = 2; i < fast_.size(); ++i) {
      fast = lstm_cell_step(fast_[i], fast, none, step_context(ctx, i + 1, t));
      ++deep_steps_;
    }
    top.push_back(fast.hidden);
  }
  return top;
}

void FsLstm::collect_cells(nn::ParamList& out) const {
  for (std::size_t i = 0; i < fast_.size(); ++i) fast_[i].collect("fast" + std::to_string(i + 1), out);
  slow_.collect("slow", out);
}

SimpleLstm::SimpleLstm(const FsLstmConfig& config) : SequenceModel(config) {
  cell_ = LstmCell::create(config_.input_dim, config_.hidden_dim, config_.forget_bias_init, rng_);
  class_head_ = nn::Linear::xavier(config_.hidden_dim, config_.num_classes, rng_);
  residual_head_ = nn::Linear::xavier(config_.hidden_dim, config_.residual_dim, rng_);
}

std::vector<ad::Tensor> SimpleLstm::run(std::span<const ad::Tensor> inputs, const RunContext& ctx) const {
  CellState state = zero_state(inputs.front().dim(0), config_.hidden_dim);
  std::vector<ad::Tensor> top;
  top.reserve(inputs.size());
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    ad::Tensor x = inputs[t];
    if (ctx.mode == Mode::train) {
      x = ad::dropout(x, config_.dropout_prob, ad::MaskKey{config_.seed, 999, hash_words({ctx.pass, t}), 3});
    }
    state = lstm_cell_step(cell_, state, x, step_context(ctx, 1, t));
    top.push_back(state.hidden);
  }
  return top;
}

void SimpleLstm::collect_cells(nn::ParamList& out) const { cell_.collect("lstm", out); }

std::unique_ptr<SequenceModel> make_sequence_model(SequenceKind kind, const FsLstmConfig& config) {
  if (kind == SequenceKind::fs_lstm) return std::make_unique<FsLstm>(config);
  return std::make_unique<SimpleLstm>(config);
}

ad::Tensor fslstm_loss(const ad::Tensor& pooled_logits, const ad::Tensor& aligned_residuals,
                       std::span<const std::size_t> labels, const ad::Tensor& target_rows, const ad::Tensor& base_rows,
                       double lambda, double alpha) {
  const auto ce = ad::cross_entropy(pooled_logits, labels);
  if (lambda == 0.0) return ce;
  if (aligned_residuals.shape() != target_rows.shape() || base_rows.shape() != target_rows.shape()) {
    throw AlignmentError("fslstm_loss: residual rows " + ad::shape_string(aligned_residuals.shape()) +
                         " vs target rows " + ad::shape_string(target_rows.shape()) + " vs base rows " +
                         ad::shape_string(base_rows.shape()));
  }
  const auto pred = ad::add(aligned_residuals, base_rows);
  const auto energy = synth::robust_energy(pred, target_rows, alpha);
  const double per_item = lambda / static_cast<double>(labels.size());
  return ad::add(ce, ad::scale(energy, per_item));
}

}  // namespace foley::seq
