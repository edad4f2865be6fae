#include "foley/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <thread>
#include <tuple>

#include "foley/error.hpp"
#include "foley/optim.hpp"
#include "foley/wav.hpp"

namespace foley::pipeline {

std::vector<std::size_t> PreparedDataset::indices(data::Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    if (clips[i].split == split) out.push_back(i);
  }
  return out;
}

std::size_t PreparedDataset::find(const std::string& clip_id) const {
  for (std::size_t i = 0; i < clips.size(); ++i) {
    if (clips[i].id == clip_id) return i;
  }
  throw InvalidArgument("unknown clip '" + clip_id + "'");
}

features::ConvEncoder make_encoder(const RunConfig& config) {
  features::ConvEncoder enc(config.encoder, config.encoder_seed);
  enc.set_trunk_trainable(false);
  return enc;
}

video::FrameSequence upsample(const video::FrameSequence& seq, const RunConfig& config) {
  if (config.upsample_factor == 1) return seq;
  return config.upsampling == FrameUpsampling::interpolate ? video::interpolate_frames(seq, config.upsample_factor)
                                                           : video::replicate_frames(seq, config.upsample_factor);
}

ad::Tensor visual_input(const video::FrameSequence& seq, std::size_t t, VisualInput input) {
  if (input == VisualInput::space_time) return features::image_tensor(video::space_time_image(seq, t));
  if (t >= seq.size()) throw InvalidArgument("visual_input: frame index out of range");
  return features::image_tensor(seq.frames[t]);
}

PreparedClip prepare_clip(const data::DatasetManifest& manifest, const data::ManifestEntry& entry,
                          const RunConfig& config, const features::ConvEncoder& encoder) {
  PreparedClip clip;
  clip.id = entry.clip_id;
  clip.label = manifest.class_index(entry.label);
  clip.split = entry.split;

  const auto frames = video::load_frames(manifest.resolve(entry.frames_path), config.frame_height, config.frame_width,
                                         entry.fps);
  const auto seq = upsample(frames, config);
  clip.steps = seq.size();
  const std::size_t p = config.encoder.pooled_dim();
  clip.pooled.reserve(clip.steps * p);
  for (std::size_t t = 0; t < clip.steps; ++t) {
    const auto f = encoder.pooled(visual_input(seq, t, config.input));
    clip.pooled.insert(clip.pooled.end(), f.data().begin(), f.data().end());
  }
  const auto app = encoder.pooled(features::image_tensor(frames.first_rgb));
  clip.appearance.assign(app.data().begin(), app.data().end());

  clip.audio = dsp::wav_read(manifest.resolve(entry.wav_path));
  if (clip.audio.sample_rate != config.sample_rate) {
    throw ConfigError("clip '" + entry.clip_id + "' is sampled at " + std::to_string(clip.audio.sample_rate) +
                      " Hz, config expects " + std::to_string(config.sample_rate));
  }
  clip.sqrt_spec = dsp::spectrogram_of(clip.audio, config.stft, dsp::SpectrogramMode::sqrt_magnitude);
  return clip;
}

PreparedDataset prepare_dataset(const data::DatasetManifest& manifest, const RunConfig& config,
                                std::size_t threads) {
  config.validate();
  if (manifest.class_names.size() != config.num_classes) {
    throw ConfigError("manifest lists " + std::to_string(manifest.class_names.size()) + " classes, config expects " +
                      std::to_string(config.num_classes));
  }
  const auto encoder = make_encoder(config);
  PreparedDataset data;
  data.class_names = manifest.class_names;
  data.pooled_dim = config.encoder.pooled_dim();
  data.clips.resize(manifest.entries.size());

  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> failures(std::max<std::size_t>(threads, 1));
  const auto work = [&](std::size_t worker) {
    try {
      for (std::size_t i = next++; i < manifest.entries.size(); i = next++) {
        data.clips[i] = prepare_clip(manifest, manifest.entries[i], config, encoder);
      }
    } catch (...) {
      failures[worker] = std::current_exception();
      next = manifest.entries.size();
    }
  };
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < failures.size(); ++w) pool.emplace_back(work, w);
    work(0);
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  return data;
}

synth::ClassSpectrogramBank build_bank(const PreparedDataset& data, const RunConfig& config) {
  std::vector<std::vector<dsp::Spectrogram>> by_class(data.class_names.size());
  for (const auto& c : data.clips) {
    if (c.split == data::Split::train) by_class[c.label].push_back(c.sqrt_spec);
  }
  return synth::build_bank(std::span<const std::vector<dsp::Spectrogram>>(by_class), data.class_names,
                           config.bank_frames);
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<std::size_t> labels_of(const PreparedDataset& data, std::span<const std::size_t> clips) {
  std::vector<std::size_t> out;
  out.reserve(clips.size());
  for (std::size_t i : clips) out.push_back(data.clips[i].label);
  return out;
}

std::vector<std::vector<std::size_t>> batches_of(std::span<const std::size_t> items, std::size_t size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < items.size(); start += size) {
    out.emplace_back(items.begin() + static_cast<std::ptrdiff_t>(start),
                     items.begin() + static_cast<std::ptrdiff_t>(std::min(items.size(), start + size)));
  }
  return out;
}

struct StepRef {
  std::size_t clip, step;
};

/// Standardized trunk features of the referenced timesteps, one row each.
ad::Tensor motion_rows(const PreparedDataset& data, const FeatureNorm& norm, std::span<const StepRef> refs) {
  const std::size_t p = data.pooled_dim;
  std::vector<double> v(refs.size() * p);
  for (std::size_t r = 0; r < refs.size(); ++r) {
    const auto src = std::span<const double>(data.clips[refs[r].clip].pooled).subspan(refs[r].step * p, p);
    const auto row = std::span<double>(v).subspan(r * p, p);
    std::copy(src.begin(), src.end(), row.begin());
    norm.apply_motion(row);
  }
  return ad::Tensor::from({refs.size(), p}, std::move(v));
}

ad::Tensor appearance_rows(const PreparedDataset& data, const FeatureNorm& norm, std::span<const std::size_t> batch) {
  const std::size_t p = data.pooled_dim;
  std::vector<double> v(batch.size() * p);
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const auto row = std::span<double>(v).subspan(j * p, p);
    std::copy(data.clips[batch[j]].appearance.begin(), data.clips[batch[j]].appearance.end(), row.begin());
    norm.apply_appearance(row);
  }
  return ad::Tensor::from({batch.size(), p}, std::move(v));
}

Prediction finish_prediction(std::vector<double> logits, std::vector<std::size_t> labels, std::size_t classes) {
  Prediction p;
  p.probabilities = eval::softmax_rows(logits, classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    p.predicted.push_back(eval::argmax(std::span<const double>(logits).subspan(i * classes, classes)));
  }
  p.labels = std::move(labels);
  return p;
}

void restore_checked(const Checkpoint& ckpt, const std::string& model, const RunConfig& config,
                     const nn::ParamList& params) {
  if (ckpt.model != model) throw ConfigError("checkpoint holds a '" + ckpt.model + "' model, expected '" + model + "'");
  ckpt.check_compatible(config);
  ckpt.restore(params);
}

}  // namespace

// ---- feature standardization --------------------------------------------------------

FeatureNorm::FeatureNorm(std::size_t dim)
    : motion_{ad::Tensor::zeros({dim}), ad::Tensor::full({dim}, 1.0)},
      appearance_{ad::Tensor::zeros({dim}), ad::Tensor::full({dim}, 1.0)} {}

void FeatureNorm::fit(const PreparedDataset& data, std::span<const std::size_t> clips) {
  const std::size_t dim = motion_.shift.size();
  if (data.pooled_dim != dim) throw ShapeError("feature norm: dataset features do not match the encoder");
  const auto fit_one = [dim](Affine& a, const std::vector<std::span<const double>>& rows) {
    std::vector<double> mean(dim, 0.0), var(dim, 0.0);
    for (const auto& r : rows) {
      for (std::size_t d = 0; d < dim; ++d) mean[d] += r[d];
    }
    for (double& m : mean) m /= static_cast<double>(rows.size());
    for (const auto& r : rows) {
      for (std::size_t d = 0; d < dim; ++d) var[d] += (r[d] - mean[d]) * (r[d] - mean[d]);
    }
    auto shift = a.shift.mutable_data();
    auto scale = a.scale.mutable_data();
    for (std::size_t d = 0; d < dim; ++d) {
      shift[d] = mean[d];
      scale[d] = 1.0 / std::max(std::sqrt(var[d] / static_cast<double>(rows.size())), 1e-6);
    }
  };
  std::vector<std::span<const double>> motion, appearance;
  for (std::size_t i : clips) {
    const auto& c = data.clips[i];
    for (std::size_t t = 0; t < c.steps; ++t) motion.emplace_back(c.pooled.data() + t * dim, dim);
    appearance.emplace_back(c.appearance);
  }
  if (motion.empty()) throw SplitError("feature norm: no clips to fit");
  fit_one(motion_, motion);
  fit_one(appearance_, appearance);
}

void FeatureNorm::apply(const Affine& a, std::span<double> row) {
  const auto shift = a.shift.data();
  const auto scale = a.scale.data();
  for (std::size_t d = 0; d < row.size(); ++d) row[d] = (row[d] - shift[d]) * scale[d];
}

void FeatureNorm::collect(const std::string& prefix, nn::ParamList& out) const {
  out.push_back({prefix + ".motion_shift", motion_.shift});
  out.push_back({prefix + ".motion_scale", motion_.scale});
  out.push_back({prefix + ".appearance_shift", appearance_.shift});
  out.push_back({prefix + ".appearance_scale", appearance_.scale});
}

// ---- Model 1 ------------------------------------------------------------------------

SequenceFoley::SequenceFoley(const RunConfig& config)
    : config_(config),
      encoder_(make_encoder(config)),
      norm_(config.encoder.pooled_dim()),
      net_(seq::make_sequence_model(config.sequence, config.fslstm_config())) {
  config_.validate();
}

nn::ParamList SequenceFoley::parameters() const {
  nn::ParamList p;
  encoder_.collect("encoder", p);
  norm_.collect("input_norm", p);
  net_->collect(p);
  return p;
}

nn::ParamList SequenceFoley::trainable() const {
  nn::ParamList p;
  encoder_.collect("encoder", p, false, true);
  net_->collect(p);
  return p;
}

std::vector<ad::Tensor> SequenceFoley::inputs(const PreparedDataset& data, std::span<const std::size_t> batch) const {
  if (batch.empty()) throw InvalidArgument("inputs: empty batch");
  std::size_t steps = data.clips[batch[0]].steps;
  for (std::size_t i : batch) steps = std::min(steps, data.clips[i].steps);
  const std::size_t b = batch.size();
  std::vector<StepRef> refs;
  refs.reserve(steps * b);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i : batch) refs.push_back({i, t});
  }
  const auto motion = encoder_.project(motion_rows(data, norm_, refs));
  const auto appearance = encoder_.project(appearance_rows(data, norm_, batch));
  std::vector<ad::Tensor> out;
  out.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const ad::Tensor parts[2] = {ad::slice(motion, 0, t * b, b), appearance};
    out.push_back(ad::concat(parts, 1));
  }
  return out;
}

TrainReport SequenceFoley::train(const PreparedDataset& data, const synth::ClassSpectrogramBank& bank,
                                 const EpochCallback& on_epoch) {
  const auto start = std::chrono::steady_clock::now();
  auto order = data.indices(data::Split::train);
  if (order.empty()) throw SplitError("train: no training clips");
  norm_.fit(data, order);
  if (bank.bins != config_.residual_dim()) {
    throw ConfigError("bank has " + std::to_string(bank.bins) + " bins, model predicts " +
                      std::to_string(config_.residual_dim()));
  }
  std::vector<synth::FrameMatrix> targets(data.clips.size());
  for (std::size_t i : order) targets[i] = synth::bank_aligned(data.clips[i].sqrt_spec, bank);

  ad::Adam opt(nn::tensors_of(trainable()), ad::AdamConfig{config_.fslstm_lr});
  Rng rng(hash_words({config_.seed, 0x6f72646572ULL}));
  TrainReport report;
  std::uint64_t pass = 0;
  for (std::size_t epoch = 0; epoch < config_.fslstm_epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    const auto batches = batches_of(order, config_.fslstm_batch);
    for (const auto& batch : batches) {
      const auto out = net_->forward(inputs(data, batch), seq::RunContext{seq::Mode::train, pass++});
      const auto labels = labels_of(data, batch);
      ad::Tensor loss;
      if (config_.lambda == 0.0) {
        loss = ad::cross_entropy(net_->pooled_logits(out), labels);
      } else {
        const std::size_t rows = batch.size() * bank.frames;
        std::vector<double> target(rows * bank.bins), base(rows * bank.bins);
        for (std::size_t j = 0; j < batch.size(); ++j) {
          const auto& tm = targets[batch[j]].values;
          const auto bm = bank.base(data.clips[batch[j]].label);
          std::copy(tm.begin(), tm.end(), target.begin() + static_cast<std::ptrdiff_t>(j * tm.size()));
          std::copy(bm.begin(), bm.end(), base.begin() + static_cast<std::ptrdiff_t>(j * bm.size()));
        }
        loss = seq::fslstm_loss(net_->pooled_logits(out), net_->aligned_residuals(out, bank.frames), labels,
                                ad::Tensor::from({rows, bank.bins}, std::move(target)),
                                ad::Tensor::from({rows, bank.bins}, std::move(base)), config_.lambda, config_.alpha);
      }
      total += loss.item();
      opt.zero_grad();
      ad::backward(loss);
      opt.step();
    }
    report.epoch_loss.push_back(total / static_cast<double>(batches.size()));
    if (on_epoch) on_epoch(epoch, report.epoch_loss.back());
  }
  report.seconds = seconds_since(start);
  return report;
}

Prediction SequenceFoley::predict(const PreparedDataset& data, std::span<const std::size_t> clips) const {
  std::vector<double> logits;
  for (const auto& batch : batches_of(clips, config_.fslstm_batch)) {
    const auto out = net_->forward(inputs(data, batch), seq::RunContext{seq::Mode::eval, 0});
    const auto l = net_->pooled_logits(out);
    logits.insert(logits.end(), l.data().begin(), l.data().end());
  }
  return finish_prediction(std::move(logits), labels_of(data, clips), config_.num_classes);
}

synth::FrameMatrix SequenceFoley::residual(const PreparedDataset& data, std::size_t clip, std::size_t frames) const {
  const std::size_t one[1] = {clip};
  const auto out = net_->forward(inputs(data, one), seq::RunContext{seq::Mode::eval, 0});
  const auto per_step = net_->residuals(out);
  synth::FrameMatrix m = synth::FrameMatrix::zeros(per_step.size(), config_.residual_dim());
  for (std::size_t t = 0; t < per_step.size(); ++t) {
    std::copy(per_step[t].data().begin(), per_step[t].data().end(),
              m.values.begin() + static_cast<std::ptrdiff_t>(t * m.cols));
  }
  return synth::align_frames(m, frames);
}

Checkpoint SequenceFoley::checkpoint() const { return Checkpoint::capture("fslstm", config_, parameters()); }

void SequenceFoley::load(const Checkpoint& ckpt) { restore_checked(ckpt, "fslstm", config_, parameters()); }

// ---- Model 2 ------------------------------------------------------------------------

RelationFoley::RelationFoley(const RunConfig& config)
    : config_(config), encoder_(make_encoder(config)), norm_(config.encoder.pooled_dim()), net_(config.trn_config()) {
  config_.validate();
}

nn::ParamList RelationFoley::parameters() const {
  nn::ParamList p;
  encoder_.collect("encoder", p);
  norm_.collect("input_norm", p);
  net_.collect(p);
  return p;
}

nn::ParamList RelationFoley::trainable() const {
  nn::ParamList p;
  encoder_.collect("encoder", p, false, true);
  net_.collect(p);
  return p;
}

std::vector<std::size_t> RelationFoley::sampled_steps(std::size_t steps) const {
  return video::sample_representative_indices(steps, config_.sampled_frames, config_.segment);
}

ad::Tensor RelationFoley::inputs(const PreparedDataset& data, std::span<const std::size_t> batch) const {
  if (batch.empty()) throw InvalidArgument("inputs: empty batch");
  std::vector<StepRef> refs;
  std::vector<std::size_t> owner;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    for (std::size_t t : sampled_steps(data.clips[batch[j]].steps)) {
      refs.push_back({batch[j], t});
      owner.push_back(j);
    }
  }
  const auto motion = encoder_.project(motion_rows(data, norm_, refs));
  const auto appearance = ad::gather_rows(encoder_.project(appearance_rows(data, norm_, batch)), owner);
  const ad::Tensor parts[2] = {motion, appearance};
  return ad::concat(parts, 1);
}

TrainReport RelationFoley::train(const PreparedDataset& data, const EpochCallback& on_epoch) {
  const auto start = std::chrono::steady_clock::now();
  auto order = data.indices(data::Split::train);
  if (order.empty()) throw SplitError("train: no training clips");
  norm_.fit(data, order);
  ad::Adam opt(nn::tensors_of(trainable()), ad::AdamConfig{config_.trn_lr});
  Rng rng(hash_words({config_.seed, 0x6f72646572ULL, 2}));
  TrainReport report;
  for (std::size_t epoch = 0; epoch < config_.trn_epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    const auto batches = batches_of(order, config_.trn_batch);
    for (const auto& batch : batches) {
      const auto loss = trn::trn_loss(net_.forward(inputs(data, batch), batch.size()), labels_of(data, batch));
      total += loss.item();
      opt.zero_grad();
      ad::backward(loss);
      opt.step();
    }
    report.epoch_loss.push_back(total / static_cast<double>(batches.size()));
    if (on_epoch) on_epoch(epoch, report.epoch_loss.back());
  }
  report.seconds = seconds_since(start);
  return report;
}

Prediction RelationFoley::predict(const PreparedDataset& data, std::span<const std::size_t> clips) const {
  std::vector<double> logits;
  for (const auto& batch : batches_of(clips, config_.trn_batch)) {
    const auto s = net_.forward(inputs(data, batch), batch.size());
    logits.insert(logits.end(), s.data().begin(), s.data().end());
  }
  return finish_prediction(std::move(logits), labels_of(data, clips), config_.num_classes);
}

Checkpoint RelationFoley::checkpoint() const { return Checkpoint::capture("trn", config_, parameters()); }

void RelationFoley::load(const Checkpoint& ckpt) { restore_checked(ckpt, "trn", config_, parameters()); }

double accuracy(const Prediction& p) {
  if (p.labels.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < p.labels.size(); ++i) hit += p.predicted[i] == p.labels[i];
  return static_cast<double>(hit) / static_cast<double>(p.labels.size());
}

// ---- synthesis ----------------------------------------------------------------------

dsp::AudioClip synthesize_sequence(const SequenceFoley& model, const PreparedDataset& data, std::size_t clip,
                                   const synth::ClassSpectrogramBank& bank) {
  const std::size_t one[1] = {clip};
  const std::size_t klass = model.predict(data, one).predicted[0];
  const auto residual = model.residual(data, clip, bank.frames);
  return synth::synthesize_waveform(synth::compose_spectrogram(&residual, klass, bank), model.config().gl_iterations);
}

dsp::AudioClip synthesize_relation(const RelationFoley& model, const PreparedDataset& data, std::size_t clip,
                                   const synth::ClassSpectrogramBank& bank) {
  const std::size_t one[1] = {clip};
  const std::size_t klass = model.predict(data, one).predicted[0];
  return synth::synthesize_waveform(synth::compose_spectrogram(nullptr, klass, bank), model.config().gl_iterations);
}

dsp::AudioClip synthesize_true_residual(const PreparedDataset& data, std::size_t clip,
                                        const synth::ClassSpectrogramBank& bank, std::size_t gl_iterations) {
  const auto& c = data.clips[clip];
  const auto residual = synth::extract_residual(c.sqrt_spec, c.label, bank);
  return synth::synthesize_waveform(synth::compose_spectrogram(&residual, c.label, bank), gl_iterations);
}

eval::RetrievalConfig retrieval_config(const RunConfig& config) {
  eval::RetrievalConfig r;
  r.encoder = config.encoder;
  r.num_classes = config.num_classes;
  r.epochs = config.retrieval_epochs;
  r.batch_size = config.retrieval_batch;
  r.learning_rate = config.retrieval_lr;
  r.seed = hash_words({config.seed, 0x72657472ULL});
  return r;
}

// ---- ablation -----------------------------------------------------------------------

std::vector<AblationVariant> ablation_grid(const RunConfig& base, std::span<const std::string> axes) {
  std::vector<AblationVariant> out;
  for (const auto& axis : axes) {
    if (axis == "input") {
      auto raw = base;
      raw.input = VisualInput::raw;
      out.push_back({axis, "space_time", ModelKind::sequence, base});
      out.push_back({axis, "raw", ModelKind::sequence, raw});
    } else if (axis == "sequence") {
      auto simple = base;
      simple.sequence = seq::SequenceKind::simple_lstm;
      out.push_back({axis, "fs_lstm", ModelKind::sequence, base});
      out.push_back({axis, "simple_lstm", ModelKind::sequence, simple});
    } else if (axis == "frames") {
      auto rep = base;
      rep.upsampling = FrameUpsampling::replicate;
      out.push_back({axis, "interpolate", ModelKind::sequence, base});
      out.push_back({axis, "replicate", ModelKind::sequence, rep});
    } else if (axis == "scale") {
      for (std::size_t q : {4, 8, 16}) {
        auto c = base;
        c.sampled_frames = 16;
        c.max_scale = q;
        out.push_back({axis, "Q=" + std::to_string(q), ModelKind::relation, c});
      }
    } else {
      throw ConfigError("ablation: unknown axis '" + axis + "' (expected input, sequence, frames or scale)");
    }
  }
  return out;
}

double AblationResult::mean_accuracy(const std::string& axis, const std::string& variant) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& c : cells) {
    if (c.axis == axis && c.variant == variant) {
      sum += c.test_accuracy;
      ++n;
    }
  }
  if (n == 0) throw InvalidArgument("ablation: no cells for " + axis + "/" + variant);
  return sum / static_cast<double>(n);
}

eval::Table AblationResult::table() const {
  struct Row {
    std::string axis, variant;
    std::size_t seeds = 0;
    double mean = 0.0;
  };
  std::vector<Row> rows;
  for (const auto& c : cells) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const Row& r) { return r.axis == c.axis && r.variant == c.variant; });
    if (it == rows.end()) {
      rows.push_back({c.axis, c.variant, 0, 0.0});
      it = rows.end() - 1;
    }
    ++it->seeds;
    it->mean += c.test_accuracy;
  }
  for (auto& r : rows) r.mean /= static_cast<double>(r.seeds);
  std::stable_sort(rows.begin(), rows.end(), [&](const Row& a, const Row& b) {
    const auto axis_pos = [&](const std::string& axis) {
      return std::find_if(cells.begin(), cells.end(), [&](const AblationCell& c) { return c.axis == axis; }) - cells.begin();
    };
    if (a.axis != b.axis) return axis_pos(a.axis) < axis_pos(b.axis);
    return a.mean > b.mean;
  });
  eval::Table t;
  t.header = {"axis", "variant", "seeds", "mean_test_accuracy"};
  for (const auto& r : rows) t.rows.push_back({r.axis, r.variant, std::to_string(r.seeds), eval::format_number(r.mean)});
  return t;
}

AblationResult ablation_run(const data::DatasetManifest& manifest, std::span<const AblationVariant> variants,
                            std::size_t seeds, std::uint64_t base_seed, const AblationProgress& progress) {
  if (seeds == 0) throw InvalidArgument("ablation: seeds must be >= 1");
  AblationResult result;
  std::map<std::string, PreparedDataset> prepared;  // keyed by visual preprocessing
  std::map<std::tuple<std::uint64_t, std::string>, std::pair<double, double>> memo;  // (config hash, model) -> accuracies
  for (const auto& v : variants) {
    try {
      v.config.validate();
    } catch (const ConfigError& e) {
      result.skipped.push_back(v.axis + "/" + v.name + ": " + e.what());
      continue;
    }
    const std::string key = std::to_string(static_cast<int>(v.config.upsampling)) + ":" +
                            std::to_string(static_cast<int>(v.config.input)) + ":" +
                            std::to_string(v.config.upsample_factor);
    auto it = prepared.find(key);
    if (it == prepared.end()) it = prepared.emplace(key, prepare_dataset(manifest, v.config)).first;
    const PreparedDataset& data = it->second;
    const auto train_idx = data.indices(data::Split::train);
    const auto test_idx = data.indices(data::Split::test);
    for (std::size_t s = 0; s < seeds; ++s) {
      RunConfig cfg = v.config;
      cfg.seed = base_seed + s;
      const std::string model = v.model == ModelKind::sequence ? "sequence" : "relation";
      const auto memo_key = std::make_tuple(cfg.hash(), model);
      auto hit = memo.find(memo_key);
      if (hit == memo.end()) {
        std::pair<double, double> acc;
        if (v.model == ModelKind::sequence) {
          SequenceFoley m(cfg);
          m.train(data, build_bank(data, cfg));
          acc = {accuracy(m.predict(data, train_idx)), accuracy(m.predict(data, test_idx))};
        } else {
          RelationFoley m(cfg);
          m.train(data);
          acc = {accuracy(m.predict(data, train_idx)), accuracy(m.predict(data, test_idx))};
        }
        hit = memo.emplace(memo_key, acc).first;
      }
      AblationCell cell{v.axis, v.name, cfg.seed, hit->second.first, hit->second.second};
      result.cells.push_back(cell);
      if (progress) progress(cell);
    }
  }
  return result;
}

}  // namespace foley::pipeline
