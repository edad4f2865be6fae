#pragma once

// Classification metrics, waveform similarity tables, the spectrogram
// retrieval classifier, and report formatting.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "foley/dsp.hpp"
#include "foley/features.hpp"

namespace foley::eval {

/// Index of the largest entry; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> values);

struct ConfusionMatrix {
  std::size_t num_classes = 0;
  /// counts[i * n + j]: clips of true class i predicted as j.
  std::vector<std::size_t> counts;
  /// Row-normalized counts; empty rows stay zero.
  std::vector<double> normalized;

  std::size_t count(std::size_t truth, std::size_t predicted) const { return counts[truth * num_classes + predicted]; }
  double rate(std::size_t truth, std::size_t predicted) const { return normalized[truth * num_classes + predicted]; }
  std::size_t total() const;
};

ConfusionMatrix confusion_matrix(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                                 std::size_t num_classes);

struct ClassificationScore {
  double accuracy = 0.0;
  double log_loss = 0.0;
};

/// `probabilities` is row-major [labels.size() x num_classes]; each row must
/// sum to 1 within 1e-6. Probabilities are clamped to [1e-15, 1] for the loss.
ClassificationScore accuracy_and_logloss(std::span<const double> probabilities, std::span<const std::size_t> labels,
                                         std::size_t num_classes);

/// Row-wise softmax of [rows x num_classes] scores.
std::vector<double> softmax_rows(std::span<const double> scores, std::size_t num_classes);

struct NccPair {
  std::size_t klass = 0;
  dsp::AudioClip original;
  dsp::AudioClip generated;
};

struct NccTable {
  std::vector<std::string> class_names;
  /// Mean NCC per class; only classes with at least one pair are listed.
  std::vector<double> class_mean;
  std::vector<std::size_t> pair_count;
  /// Mean of the class means.
  double grand_average = 0.0;
};

NccTable ncc_report(std::span<const NccPair> pairs, std::span<const std::string> class_names);

// ---- retrieval ---------------------------------------------------------------

struct LabeledSpectrogram {
  dsp::Spectrogram spec;
  std::size_t label = 0;
};

struct RetrievalConfig {
  features::EncoderConfig encoder;
  std::size_t num_classes = 12;
  std::size_t epochs = 40;
  std::size_t batch_size = 8;
  double learning_rate = 0.003;
  std::uint64_t seed = 7;
};

struct RetrievalResult {
  double train_accuracy = 0.0;
  double real_test_accuracy = 0.0;
  double synthesized_accuracy = 0.0;
};

/// Encoder input for a spectrogram: planes (scaled values, frequency ramp,
/// time ramp) resized to the encoder's size. The ramps give the pooled
/// features access to where energy sits on both axes.
ad::Tensor spectrogram_image(const dsp::Spectrogram& spec, const features::EncoderConfig& config);

/// Trains a convolutional classifier on real training spectrograms only, then
/// scores held-out real and synthesized spectrograms. Throws SplitError when
/// an evaluated class has no training example.
RetrievalResult retrieval_experiment(std::span<const LabeledSpectrogram> train,
                                     std::span<const LabeledSpectrogram> real_test,
                                     std::span<const LabeledSpectrogram> synthesized, const RetrievalConfig& config);

// ---- reports -------------------------------------------------------------------

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string to_csv() const;
  /// Space-padded columns, numbers right-aligned.
  std::string to_aligned() const;
};

std::string format_number(double value, int precision = 4);

Table confusion_table(const ConfusionMatrix& m, std::span<const std::string> class_names, bool normalized);
Table ncc_table(const NccTable& t);

/// Two-column "time value" TSV for plotting a waveform.
void write_waveform_tsv(const dsp::AudioClip& clip, const std::filesystem::path& path);
/// "time frequency value" TSV with blank lines between frames (gnuplot pm3d layout).
void write_spectrogram_tsv(const dsp::Spectrogram& spec, const std::filesystem::path& path);

void write_text(const std::string& text, const std::filesystem::path& path);

}  // namespace foley::eval
