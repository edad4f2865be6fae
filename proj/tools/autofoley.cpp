// autofoley: command-line front end for dataset generation, bank building,
// training, synthesis, evaluation and ablation.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "foley/checkpoint.hpp"
#include "foley/config.hpp"
#include "foley/data.hpp"
#include "foley/error.hpp"
#include "foley/eval.hpp"
#include "foley/pipeline.hpp"
#include "foley/synth.hpp"
#include "foley/wav.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace foley;

namespace {

// Exit codes.
constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kBadArgument = 2;
constexpr int kConfig = 3;
constexpr int kData = 4;

struct Common {
  fs::path manifest;
  fs::path config;
  fs::path bank;
  std::size_t threads = 1;
  bool json_out = false;
  fs::path metrics;
  bool quiet = false;
};

void log(const Common& c, const std::string& line) {
  if (!c.quiet) std::cerr << line << '\n';
}

RunConfig load_config(const fs::path& path) { return path.empty() ? RunConfig{} : RunConfig::load(path); }

/// Writes metrics to --metrics and, with --json, to stdout.
void emit(const Common& c, const json& metrics, const std::string& text) {
  const std::string body = metrics.dump(2) + "\n";
  if (!c.metrics.empty()) eval::write_text(body, c.metrics);
  if (c.json_out) {
    std::cout << body;
  } else {
    std::cout << text;
  }
}

enum class ModelName { fslstm, trn };

ModelName parse_model(const std::string& name) {
  if (name == "fslstm") return ModelName::fslstm;
  if (name == "trn") return ModelName::trn;
  throw InvalidArgument("unknown model '" + name + "' (expected fslstm or trn)");
}

const char* model_tag(ModelName m) { return m == ModelName::fslstm ? "fslstm" : "trn"; }

Checkpoint load_checkpoint_for(ModelName model, const fs::path& path) {
  auto ckpt = checkpoint_load(path);
  if (ckpt.model != model_tag(model)) {
    throw ConfigError(path.string() + " holds a '" + ckpt.model + "' model, not '" + model_tag(model) + "'");
  }
  return ckpt;
}

synth::ClassSpectrogramBank bank_for(const Common& c, const pipeline::PreparedDataset& data, const RunConfig& cfg) {
  if (c.bank.empty()) return pipeline::build_bank(data, cfg);
  auto bank = synth::load_bank(c.bank);
  if (bank.bins != cfg.residual_dim() || bank.names != data.class_names) {
    throw ConfigError(c.bank.string() + " does not match the run's classes or frequency bins");
  }
  return bank;
}

data::Split parse_split(const std::string& s) {
  if (s == "train") return data::Split::train;
  if (s == "test") return data::Split::test;
  throw InvalidArgument("unknown split '" + s + "' (expected train or test)");
}

json table_json(const eval::Table& t) {
  json rows = json::array();
  for (const auto& r : t.rows) {
    json row = json::object();
    for (std::size_t i = 0; i < t.header.size() && i < r.size(); ++i) row[t.header[i]] = r[i];
    rows.push_back(row);
  }
  return rows;
}

/// Model synthesis for one prepared clip.
struct Synthesizer {
  std::optional<pipeline::SequenceFoley> sequence;
  std::optional<pipeline::RelationFoley> relation;

  Synthesizer(ModelName model, const Checkpoint& ckpt) {
    const auto cfg = ckpt.config();
    if (model == ModelName::fslstm) {
      sequence.emplace(cfg);
      sequence->load(ckpt);
    } else {
      relation.emplace(cfg);
      relation->load(ckpt);
    }
  }

  pipeline::Prediction predict(const pipeline::PreparedDataset& data, std::span<const std::size_t> clips) const {
    return sequence ? sequence->predict(data, clips) : relation->predict(data, clips);
  }

  dsp::AudioClip render(const pipeline::PreparedDataset& data, std::size_t clip,
                        const synth::ClassSpectrogramBank& bank) const {
    return sequence ? pipeline::synthesize_sequence(*sequence, data, clip, bank)
                    : pipeline::synthesize_relation(*relation, data, clip, bank);
  }
};

// ---- subcommands ----------------------------------------------------------------------

int run_gen(const fs::path& out, std::size_t classes, std::size_t per_class, std::uint64_t seed, bool neutral, const Common& c) {
  data::CorpusOptions opt;
  opt.num_classes = classes;
  opt.clips_per_class = per_class;
  opt.seed = seed;
  opt.class_colours = !neutral;
  const auto m = data::generate_synthetic_corpus(out, opt);
  json j{{"clips", m.entries.size()}, {"classes", m.class_names.size()}};
  emit(c, j, "wrote " + std::to_string(m.entries.size()) + " clips to " + out.string() + "\n");
  return kOk;
}

int run_bank(const fs::path& out, const Common& c) {
  const auto cfg = load_config(c.config);
  const auto data = pipeline::prepare_dataset(data::manifest_load(c.manifest), cfg, c.threads);
  const auto bank = pipeline::build_bank(data, cfg);
  synth::save_bank(bank, out);
  json counts = json::object();
  for (std::size_t k = 0; k < bank.names.size(); ++k) counts[bank.names[k]] = bank.clip_counts[k];
  json j{{"classes", bank.names.size()}, {"frames", bank.frames}, {"bins", bank.bins}, {"clip_counts", counts}};
  emit(c, j, "wrote bank (" + std::to_string(bank.names.size()) + " classes) to " + out.string() + "\n");
  return kOk;
}

int run_train(ModelName model, const fs::path& out, std::optional<std::uint64_t> seed, const Common& c) {
  auto cfg = load_config(c.config);
  if (seed) cfg.seed = *seed;
  cfg.validate();
  const auto manifest = data::manifest_load(c.manifest);
  const auto data = pipeline::prepare_dataset(manifest, cfg, c.threads);
  const auto train_idx = data.indices(data::Split::train);
  const auto test_idx = data.indices(data::Split::test);
  const auto progress = [&](std::size_t epoch, double loss) {
    log(c, "epoch " + std::to_string(epoch + 1) + " loss " + eval::format_number(loss, 6));
  };

  pipeline::TrainReport report;
  pipeline::Prediction train_pred, test_pred;
  Checkpoint ckpt;
  if (model == ModelName::fslstm) {
    pipeline::SequenceFoley m(cfg);
    report = m.train(data, bank_for(c, data, cfg), progress);
    train_pred = m.predict(data, train_idx);
    test_pred = m.predict(data, test_idx);
    ckpt = m.checkpoint();
  } else {
    pipeline::RelationFoley m(cfg);
    report = m.train(data, progress);
    train_pred = m.predict(data, train_idx);
    test_pred = m.predict(data, test_idx);
    ckpt = m.checkpoint();
  }
  checkpoint_save(ckpt, out);
  log(c, "trained in " + eval::format_number(report.seconds, 2) + " s");

  const double train_acc = pipeline::accuracy(train_pred);
  const double test_acc = test_idx.empty() ? 0.0 : pipeline::accuracy(test_pred);
  json j{{"model", model_tag(model)},
         {"seed", cfg.seed},
         {"epochs", report.epoch_loss.size()},
         {"final_loss", report.epoch_loss.empty() ? 0.0 : report.epoch_loss.back()},
         {"train_accuracy", train_acc},
         {"test_accuracy", test_acc},
         {"config_hash", cfg.hash()}};
  emit(c, j,
       std::string(model_tag(model)) + ": train accuracy " + eval::format_number(train_acc) + ", test accuracy " +
           eval::format_number(test_acc) + "\n");
  return kOk;
}

int run_synth(ModelName model, const fs::path& ckpt_path, const std::string& clip_id, const fs::path& out,
              const Common& c) {
  const auto manifest = data::manifest_load(c.manifest);
  const auto& entry = manifest.find(clip_id);
  const auto ckpt = load_checkpoint_for(model, ckpt_path);
  const auto cfg = ckpt.config();
  if (manifest.class_names.size() != cfg.num_classes) {
    throw ConfigError("checkpoint was trained for " + std::to_string(cfg.num_classes) + " classes, manifest lists " +
                      std::to_string(manifest.class_names.size()));
  }

  pipeline::PreparedDataset one;
  one.class_names = manifest.class_names;
  one.pooled_dim = cfg.encoder.pooled_dim();
  one.clips.push_back(pipeline::prepare_clip(manifest, entry, cfg, pipeline::make_encoder(cfg)));

  synth::ClassSpectrogramBank bank;
  if (c.bank.empty()) {
    log(c, "no --bank given; building it from the manifest's training split");
    bank = pipeline::build_bank(pipeline::prepare_dataset(manifest, cfg, c.threads), cfg);
  } else {
    bank = bank_for(c, one, cfg);
  }

  const Synthesizer synth(model, ckpt);
  const std::size_t idx[1] = {0};
  const std::size_t predicted = synth.predict(one, idx).predicted[0];
  const auto audio = synth.render(one, 0, bank);
  dsp::wav_write(audio, out);
  const double ncc = dsp::normalized_cross_correlation(one.clips[0].audio, audio);
  json j{{"clip", clip_id},
         {"label", entry.label},
         {"predicted", manifest.class_names[predicted]},
         {"ncc", ncc},
         {"samples", audio.size()}};
  emit(c, j,
       clip_id + ": predicted " + manifest.class_names[predicted] + " (true " + entry.label + "), NCC " +
           eval::format_number(ncc) + ", wrote " + out.string() + "\n");
  return kOk;
}

struct EvalOptions {
  std::string mode;
  std::string split = "test";
  bool true_residual = false;
  fs::path out_dir;
};

int run_eval(ModelName model, const fs::path& ckpt_path, const EvalOptions& opt, const Common& c) {
  const auto manifest = data::manifest_load(c.manifest);
  const auto ckpt = load_checkpoint_for(model, ckpt_path);
  const auto cfg = ckpt.config();
  const auto data = pipeline::prepare_dataset(manifest, cfg, c.threads);
  const Synthesizer synth(model, ckpt);
  const auto clips = data.indices(parse_split(opt.split));
  if (clips.empty()) throw SplitError("no clips in the " + opt.split + " split");
  if (!opt.out_dir.empty()) fs::create_directories(opt.out_dir);
  std::ostringstream text;
  json j{{"model", model_tag(model)}, {"mode", opt.mode}, {"split", opt.split}, {"clips", clips.size()}};

  if (opt.mode == "confusion") {
    const auto pred = synth.predict(data, clips);
    const auto score = eval::accuracy_and_logloss(pred.probabilities, pred.labels, cfg.num_classes);
    const auto cm = eval::confusion_matrix(pred.predicted, pred.labels, cfg.num_classes);
    const auto raw = eval::confusion_table(cm, data.class_names, false);
    const auto norm = eval::confusion_table(cm, data.class_names, true);
    j["accuracy"] = score.accuracy;
    j["log_loss"] = score.log_loss;
    j["confusion"] = cm.counts;
    text << "accuracy " << eval::format_number(score.accuracy) << ", log loss " << eval::format_number(score.log_loss)
         << "\n\n"
         << norm.to_aligned();
    if (!opt.out_dir.empty()) {
      eval::write_text(raw.to_csv(), opt.out_dir / "confusion.csv");
      eval::write_text(norm.to_csv(), opt.out_dir / "confusion_normalized.csv");
    }
  } else if (opt.mode == "ncc" || opt.mode == "retrieval") {
    const auto bank = bank_for(c, data, cfg);
    std::vector<eval::NccPair> pairs;
    std::vector<eval::LabeledSpectrogram> synthesized;
    for (std::size_t i : clips) {
      const auto& clip = data.clips[i];
      auto audio = opt.true_residual ? pipeline::synthesize_true_residual(data, i, bank, cfg.gl_iterations)
                                     : synth.render(data, i, bank);
      if (!opt.out_dir.empty()) dsp::wav_write(audio, opt.out_dir / (clip.id + ".wav"));
      synthesized.push_back({dsp::spectrogram_of(audio, cfg.stft, dsp::SpectrogramMode::sqrt_magnitude), clip.label});
      pairs.push_back({clip.label, clip.audio, std::move(audio)});
    }
    if (opt.mode == "ncc") {
      const auto table = eval::ncc_report(pairs, data.class_names);
      const auto t = eval::ncc_table(table);
      j["true_residual"] = opt.true_residual;
      j["grand_average"] = table.grand_average;
      j["classes"] = table_json(t);
      text << t.to_aligned();
      if (!opt.out_dir.empty()) eval::write_text(t.to_csv(), opt.out_dir / "ncc.csv");
    } else {
      std::vector<eval::LabeledSpectrogram> train, real_test;
      for (std::size_t i : data.indices(data::Split::train)) train.push_back({data.clips[i].sqrt_spec, data.clips[i].label});
      for (std::size_t i : clips) real_test.push_back({data.clips[i].sqrt_spec, data.clips[i].label});
      const auto r = eval::retrieval_experiment(train, real_test, synthesized, pipeline::retrieval_config(cfg));
      j["true_residual"] = opt.true_residual;
      j["train_accuracy"] = r.train_accuracy;
      j["real_test_accuracy"] = r.real_test_accuracy;
      j["synthesized_accuracy"] = r.synthesized_accuracy;
      text << "retrieval classifier: train " << eval::format_number(r.train_accuracy) << ", real held-out "
           << eval::format_number(r.real_test_accuracy) << ", synthesized " << eval::format_number(r.synthesized_accuracy)
           << "\n";
    }
  } else {
    throw InvalidArgument("unknown eval mode '" + opt.mode + "' (expected confusion, ncc or retrieval)");
  }
  emit(c, j, text.str());
  return kOk;
}

int run_ablate(const std::string& grid, std::size_t seeds, std::uint64_t base_seed, const fs::path& csv,
               const Common& c) {
  std::vector<std::string> axes;
  if (grid == "all") {
    axes = {"input", "sequence", "frames", "scale"};
  } else {
    std::stringstream ss(grid);
    for (std::string axis; std::getline(ss, axis, ',');) {
      if (!axis.empty()) axes.push_back(axis);
    }
  }
  const auto base = load_config(c.config);
  const auto variants = pipeline::ablation_grid(base, axes);
  const auto result = pipeline::ablation_run(
      data::manifest_load(c.manifest), variants, seeds, base_seed, [&](const pipeline::AblationCell& cell) {
        log(c, cell.axis + "/" + cell.variant + " seed " + std::to_string(cell.seed) + ": test accuracy " +
                   eval::format_number(cell.test_accuracy));
      });
  for (const auto& s : result.skipped) log(c, "skipped " + s);
  const auto table = result.table();
  if (!csv.empty()) eval::write_text(table.to_csv(), csv);

  json cells = json::array();
  for (const auto& cell : result.cells) {
    cells.push_back({{"axis", cell.axis},
                     {"variant", cell.variant},
                     {"seed", cell.seed},
                     {"train_accuracy", cell.train_accuracy},
                     {"test_accuracy", cell.test_accuracy}});
  }
  json j{{"seeds", seeds}, {"ranking", table_json(table)}, {"cells", cells}, {"skipped", result.skipped}};
  emit(c, j, table.to_aligned());
  return kOk;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Video-to-Foley pipeline: corpus generation, training, synthesis and evaluation"};
  app.require_subcommand(1);
  Common common;

  const auto add_common = [&](CLI::App* sub, bool manifest_required) {
    auto* m = sub->add_option("--manifest", common.manifest, "Dataset manifest (manifest.tsv)");
    if (manifest_required) m->required();
    sub->add_option("--config", common.config, "Run configuration file (key=value)");
    sub->add_option("--threads", common.threads, "Worker threads for clip preparation")->check(CLI::PositiveNumber);
    sub->add_flag("--json", common.json_out, "Print metrics as JSON on stdout");
    sub->add_option("--metrics", common.metrics, "Also write the JSON metrics to this file");
    sub->add_flag("-q,--quiet", common.quiet, "Suppress progress on stderr");
  };

  fs::path gen_out;
  std::size_t gen_classes = 12, gen_per_class = 8;
  std::uint64_t gen_seed = 1;
  bool gen_neutral = false;
  auto* gen = app.add_subcommand("gen-dataset", "Generate the synthetic audio-visual corpus");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--classes", gen_classes, "Number of classes")->check(CLI::Range(1, 12));
  gen->add_option("--clips-per-class", gen_per_class, "Clips per class")->check(CLI::Range(2, 10000));
  gen->add_option("--seed", gen_seed, "Corpus seed");
  gen->add_flag("--neutral-colours", gen_neutral, "Draw every class in the same colour");
  gen->add_flag("--json", common.json_out, "Print metrics as JSON on stdout");
  gen->add_option("--metrics", common.metrics, "Also write the JSON metrics to this file");

  fs::path bank_out;
  auto* bank = app.add_subcommand("build-bank", "Average training spectrograms per class");
  add_common(bank, true);
  bank->add_option("--out", bank_out, "Output bank file")->required();

  std::string model_name;
  fs::path train_out;
  std::optional<std::uint64_t> train_seed;
  auto* train = app.add_subcommand("train", "Train a classifier and write a checkpoint");
  add_common(train, true);
  train->add_option("--model", model_name, "fslstm or trn")->required();
  train->add_option("--out", train_out, "Output checkpoint")->required();
  train->add_option("--bank", common.bank, "Precomputed bank (fslstm)");
  train->add_option("--seed", train_seed, "Override the config seed");

  fs::path ckpt_path, synth_out;
  std::string clip_id;
  auto* synth = app.add_subcommand("synth", "Synthesize audio for one clip");
  add_common(synth, true);
  synth->add_option("--model", model_name, "fslstm or trn")->required();
  synth->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
  synth->add_option("--clip", clip_id, "Clip id from the manifest")->required();
  synth->add_option("--out", synth_out, "Output WAV")->required();
  synth->add_option("--bank", common.bank, "Precomputed bank");

  EvalOptions eval_opt;
  auto* ev = app.add_subcommand("eval", "Confusion matrix, NCC table or retrieval experiment");
  add_common(ev, true);
  ev->add_option("--mode", eval_opt.mode, "confusion, ncc or retrieval")->required();
  ev->add_option("--model", model_name, "fslstm or trn")->required();
  ev->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
  ev->add_option("--bank", common.bank, "Precomputed bank");
  ev->add_option("--split", eval_opt.split, "Split to evaluate (train or test)");
  ev->add_flag("--true-residual", eval_opt.true_residual, "Synthesize from each clip's own residual");
  ev->add_option("--out-dir", eval_opt.out_dir, "Write tables and generated WAVs here");

  std::string grid = "all";
  std::size_t seeds = 3;
  std::uint64_t base_seed = 1;
  fs::path ablate_csv;
  auto* ablate = app.add_subcommand("ablate", "Train variant grids over several seeds");
  add_common(ablate, true);
  ablate->add_option("--grid", grid, "Comma-separated axes: input, sequence, frames, scale; or all");
  ablate->add_option("--seeds", seeds, "Seeds per variant")->check(CLI::PositiveNumber);
  ablate->add_option("--base-seed", base_seed, "First seed");
  ablate->add_option("--csv", ablate_csv, "Write the ranked table as CSV");

  fs::path config_out;
  auto* config = app.add_subcommand("config", "Write the default configuration");
  config->add_option("--out", config_out, "Output file (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kBadArgument;
  }

  try {
    if (*gen) return run_gen(gen_out, gen_classes, gen_per_class, gen_seed, gen_neutral, common);
    if (*bank) return run_bank(bank_out, common);
    if (*train) return run_train(parse_model(model_name), train_out, train_seed, common);
    if (*synth) return run_synth(parse_model(model_name), ckpt_path, clip_id, synth_out, common);
    if (*ev) return run_eval(parse_model(model_name), ckpt_path, eval_opt, common);
    if (*ablate) return run_ablate(grid, seeds, base_seed, ablate_csv, common);
    if (*config) {
      if (config_out.empty()) {
        std::cout << RunConfig{}.to_text();
      } else {
        RunConfig{}.save(config_out);
      }
      return kOk;
    }
  } catch (const InvalidArgument& e) {
    std::cerr << "autofoley: " << one_line(e.what()) << '\n';
    return kBadArgument;
  } catch (const ConfigError& e) {
    std::cerr << "autofoley: config error: " << one_line(e.what()) << '\n';
    return kConfig;
  } catch (const Error& e) {
    std::cerr << "autofoley: " << one_line(e.what()) << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "autofoley: " << one_line(e.what()) << '\n';
    return kFailure;
  }
  return kFailure;
}
