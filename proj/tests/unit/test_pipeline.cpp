#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "foley/data.hpp"
#include "foley/error.hpp"
#include "foley/pipeline.hpp"
#include "support.hpp"

using namespace foley;
using pipeline::PreparedDataset;

namespace {

// Three classes, four one-second clips each, 16x16 frames.
const data::DatasetManifest& small_corpus() {
  static const data::DatasetManifest manifest = [] {
    data::CorpusOptions o;
    o.num_classes = 3;
    o.clips_per_class = 4;
    o.duration_seconds = 1.0;
    o.frame_size = 16;
    o.train_fraction = 0.75;
    return data::generate_synthetic_corpus(testing::scratch_dir("pipeline_corpus"), o);
  }();
  return manifest;
}

RunConfig small_config() {
  RunConfig c;
  c.num_classes = 3;
  c.frame_height = c.frame_width = 16;
  c.encoder.height = c.encoder.width = 16;
  c.encoder.channels = {4, 8};
  c.encoder.output_dim = 8;
  c.bank_frames = 61;
  c.hidden_dim = 8;
  c.fslstm_epochs = 4;
  c.fslstm_batch = 4;
  c.trn_hidden = 16;
  c.max_scale = 4;
  c.subsets_per_scale = 3;
  c.trn_epochs = 4;
  c.trn_batch = 4;
  return c;
}

const PreparedDataset& small_dataset() {
  static const PreparedDataset data = pipeline::prepare_dataset(small_corpus(), small_config());
  return data;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("preparation") {
  TEST_CASE("prepared clips carry labels, splits and upsampled steps") {
    const auto& data = small_dataset();
    REQUIRE(data.clips.size() == 12);
    CHECK(data.class_names == small_corpus().class_names);
    CHECK(data.pooled_dim == 8);
    CHECK(data.indices(data::Split::train).size() == 9);
    CHECK(data.indices(data::Split::test).size() == 3);
    for (const auto& c : data.clips) {
      CHECK(c.steps == 2 * (16 - 1) + 1);
      CHECK(c.pooled.size() == c.steps * data.pooled_dim);
      CHECK(c.appearance.size() == data.pooled_dim);
      CHECK(c.sqrt_spec.num_frames == 61);
      CHECK(c.label == small_corpus().class_index(small_corpus().find(c.id).label));
    }
    CHECK(data.clips[data.find("car_02")].id == "car_02");
    CHECK_THROWS_AS(data.find("car_99"), InvalidArgument);
  }

  TEST_CASE("thread count does not change the result") {
    const auto threaded = pipeline::prepare_dataset(small_corpus(), small_config(), 3);
    const auto& serial = small_dataset();
    REQUIRE(threaded.clips.size() == serial.clips.size());
    for (std::size_t i = 0; i < serial.clips.size(); ++i) {
      CHECK(threaded.clips[i].id == serial.clips[i].id);
      CHECK(threaded.clips[i].pooled == serial.clips[i].pooled);
      CHECK(threaded.clips[i].sqrt_spec.values == serial.clips[i].sqrt_spec.values);
    }
  }

  TEST_CASE("replication changes the step count") {
    auto cfg = small_config();
    cfg.upsampling = FrameUpsampling::replicate;
    const auto clip = pipeline::prepare_clip(small_corpus(), small_corpus().entries[0], cfg, pipeline::make_encoder(cfg));
    CHECK(clip.steps == 32);
  }

  TEST_CASE("feature norm standardizes training rows") {
    const auto& data = small_dataset();
    const auto train = data.indices(data::Split::train);
    pipeline::FeatureNorm norm(data.pooled_dim);
    norm.fit(data, train);
    const std::size_t dim = data.pooled_dim;
    std::vector<double> sum(dim, 0.0), sq(dim, 0.0);
    std::size_t rows = 0;
    for (std::size_t i : train) {
      const auto& c = data.clips[i];
      for (std::size_t t = 0; t < c.steps; ++t) {
        std::vector<double> row(c.pooled.begin() + t * dim, c.pooled.begin() + (t + 1) * dim);
        norm.apply_motion(row);
        for (std::size_t d = 0; d < dim; ++d) {
          sum[d] += row[d];
          sq[d] += row[d] * row[d];
        }
        ++rows;
      }
    }
    for (std::size_t d = 0; d < dim; ++d) {
      const double mean = sum[d] / rows;
      CHECK(mean == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
      const double var = sq[d] / rows - mean * mean;
      // Constant dimensions stay at zero instead of being amplified.
      CHECK((var == doctest::Approx(1.0).epsilon(1e-9) || var < 1e-9));
    }
    CHECK_THROWS_AS(pipeline::FeatureNorm(5).fit(data, train), ShapeError);
  }

  TEST_CASE("bank has one base per class at the configured length") {
    const auto bank = pipeline::build_bank(small_dataset(), small_config());
    CHECK(bank.names == small_dataset().class_names);
    CHECK(bank.frames == 61);
    CHECK(bank.clip_counts == std::vector<std::size_t>{3, 3, 3});
  }
}

TEST_SUITE("models") {
  TEST_CASE("sequence model trains deterministically and restores from a checkpoint") {
    const auto& data = small_dataset();
    const auto cfg = small_config();
    const auto bank = pipeline::build_bank(data, cfg);
    pipeline::SequenceFoley a(cfg), b(cfg);
    std::size_t epochs_seen = 0;
    const auto ra = a.train(data, bank, [&](std::size_t, double loss) {
      ++epochs_seen;
      CHECK(std::isfinite(loss));
    });
    b.train(data, bank);
    CHECK(epochs_seen == cfg.fslstm_epochs);
    CHECK(ra.epoch_loss.size() == cfg.fslstm_epochs);
    CHECK(ra.epoch_loss.back() < ra.epoch_loss.front());
    const auto all = data.indices(data::Split::train);
    const auto pa = a.predict(data, all);
    CHECK(pa.probabilities == b.predict(data, all).probabilities);
    CHECK(pa.labels.size() == all.size());

    pipeline::SequenceFoley restored(cfg);
    restored.load(a.checkpoint());
    CHECK(restored.predict(data, all).probabilities == pa.probabilities);
    const auto residual = a.residual(data, all[0], bank.frames);
    CHECK(residual.rows == bank.frames);
    CHECK(residual.cols == cfg.residual_dim());
  }

  TEST_CASE("relation model samples increasing steps and restores from a checkpoint") {
    const auto& data = small_dataset();
    auto cfg = small_config();
    pipeline::RelationFoley m(cfg);
    const auto steps = m.sampled_steps(31);
    CHECK(steps.size() == cfg.sampled_frames);
    CHECK(steps.front() == 0);
    CHECK(steps.back() == 30);
    CHECK(std::adjacent_find(steps.begin(), steps.end(), std::greater_equal<>()) == steps.end());
    const auto report = m.train(data);
    CHECK(report.epoch_loss.size() == cfg.trn_epochs);
    const auto idx = data.indices(data::Split::test);
    pipeline::RelationFoley restored(cfg);
    restored.load(m.checkpoint());
    CHECK(restored.predict(data, idx).probabilities == m.predict(data, idx).probabilities);
  }

  TEST_CASE("checkpoints from a different class count are refused") {
    auto other = small_config();
    other.num_classes = 4;
    pipeline::RelationFoley m(other);
    pipeline::RelationFoley target(small_config());
    CHECK_THROWS_AS(target.load(m.checkpoint()), ConfigError);
  }

  TEST_CASE("true-residual rendering tracks the source clip") {
    const auto& data = small_dataset();
    const auto bank = pipeline::build_bank(data, small_config());
    for (std::size_t i = 0; i < data.clips.size(); i += 4) {
      const auto audio = pipeline::synthesize_true_residual(data, i, bank, 16);
      INFO(data.clips[i].id);
      CHECK(dsp::normalized_cross_correlation(data.clips[i].audio, audio) > 0.5);
    }
  }
}

TEST_SUITE("ablation") {
  TEST_CASE("grid expands each axis against the base") {
    const RunConfig base = small_config();
    const std::vector<std::string> axes{"input", "scale"};
    const auto grid = pipeline::ablation_grid(base, axes);
    REQUIRE(grid.size() == 5);
    CHECK(grid[0].config == base);
    CHECK(grid[1].config.input == VisualInput::raw);
    for (std::size_t i = 2; i < 5; ++i) {
      CHECK(grid[i].model == pipeline::ModelKind::relation);
      CHECK(grid[i].config.sampled_frames == 16);
    }
    CHECK(grid[4].config.max_scale == 16);
    CHECK(grid[4].name == "Q=16");
    const std::vector<std::string> bad{"colour"};
    CHECK_THROWS_AS(pipeline::ablation_grid(base, bad), ConfigError);
  }

  TEST_CASE("infeasible variants are skipped and identical variants agree") {
    auto cfg = small_config();
    cfg.fslstm_epochs = 2;
    cfg.trn_epochs = 2;
    auto infeasible = cfg;
    infeasible.max_scale = 8;
    infeasible.sampled_frames = 4;
    const std::vector<pipeline::AblationVariant> variants{
        {"x", "a", pipeline::ModelKind::relation, cfg},
        {"x", "b", pipeline::ModelKind::relation, cfg},
        {"x", "too_few_frames", pipeline::ModelKind::relation, infeasible},
    };
    std::size_t progress = 0;
    const auto r = pipeline::ablation_run(small_corpus(), variants, 2, 5, [&](const auto&) { ++progress; });
    CHECK(progress == 4);
    REQUIRE(r.cells.size() == 4);
    REQUIRE(r.skipped.size() == 1);
    CHECK(r.skipped[0].find("too_few_frames") != std::string::npos);
    CHECK(r.cells[0].seed == 5);
    CHECK(r.cells[1].seed == 6);
    CHECK(r.mean_accuracy("x", "a") == r.mean_accuracy("x", "b"));
    CHECK_THROWS_AS(r.mean_accuracy("x", "too_few_frames"), InvalidArgument);
    const auto t = r.table();
    CHECK(t.header.size() == 4);
    CHECK(t.rows.size() == 2);
    CHECK(t.rows[0][2] == "2");
  }
}

#ifdef AUTOFOLEY_CLI
TEST_SUITE("command line") {
  struct CliResult {
    int status = -1;
    std::string err;
  };

  CliResult run_cli(const std::string& args) {
    const auto dir = testing::scratch_dir("cli_out");
    const std::string cmd = std::string(AUTOFOLEY_CLI) + " " + args + " >/dev/null 2>" + (dir / "err.txt").string();
    const int raw = std::system(cmd.c_str());
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(dir / "err.txt")};
  }

  TEST_CASE("unknown clip is a usage error") {
    const auto manifest = small_corpus().root / "manifest.tsv";
    const auto r = run_cli("synth -q --model fslstm --manifest " + manifest.string() +
                           " --ckpt /nonexistent.ckpt --clip no_such_clip --out /tmp/x.wav");
    CHECK(r.status == 2);
    CHECK(r.err.find("unknown clip") != std::string::npos);
  }

  TEST_CASE("relation scale beyond the sampled frames is a config error") {
    const auto dir = testing::scratch_dir("cli_cfg");
    auto cfg = small_config();
    cfg.max_scale = 8;
    cfg.sampled_frames = 4;
    {
      std::ofstream out(dir / "run.cfg");
      out << cfg.to_text();
    }
    const auto r = run_cli("train -q --model trn --manifest " + (small_corpus().root / "manifest.tsv").string() +
                           " --config " + (dir / "run.cfg").string() + " --out " + (dir / "m.ckpt").string());
    CHECK(r.status == 3);
    CHECK(r.err.find("config error") != std::string::npos);
    CHECK_FALSE(std::filesystem::exists(dir / "m.ckpt"));
  }

  TEST_CASE("missing required option is a usage error") {
    CHECK(run_cli("train --model trn").status == 2);
  }
}
#endif
