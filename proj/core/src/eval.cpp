#include "foley/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "foley/error.hpp"
#include "foley/optim.hpp"

namespace foley::eval {

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("argmax: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::size_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

ConfusionMatrix confusion_matrix(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                                 std::size_t num_classes) {
  if (predictions.size() != labels.size()) {
    throw InvalidArgument("confusion_matrix: " + std::to_string(predictions.size()) + " predictions for " +
                          std::to_string(labels.size()) + " labels");
  }
  ConfusionMatrix m;
  m.num_classes = num_classes;
  m.counts.assign(num_classes * num_classes, 0);
  m.normalized.assign(num_classes * num_classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes || predictions[i] >= num_classes) {
      throw InvalidArgument("confusion_matrix: class index out of range at item " + std::to_string(i));
    }
    ++m.counts[labels[i] * num_classes + predictions[i]];
  }
  for (std::size_t r = 0; r < num_classes; ++r) {
    std::size_t support = 0;
    for (std::size_t c = 0; c < num_classes; ++c) support += m.counts[r * num_classes + c];
    if (support == 0) continue;
    for (std::size_t c = 0; c < num_classes; ++c) {
      m.normalized[r * num_classes + c] = static_cast<double>(m.counts[r * num_classes + c]) / static_cast<double>(support);
    }
  }
  return m;
}

ClassificationScore accuracy_and_logloss(std::span<const double> probabilities, std::span<const std::size_t> labels,
                                         std::size_t num_classes) {
  if (num_classes == 0 || probabilities.size() != labels.size() * num_classes) {
    throw InvalidArgument("accuracy_and_logloss: expected " + std::to_string(labels.size()) + " rows of " +
                          std::to_string(num_classes) + " probabilities");
  }
  if (labels.empty()) throw InvalidArgument("accuracy_and_logloss: no items");
  std::size_t correct = 0;
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto row = probabilities.subspan(i * num_classes, num_classes);
    double total = 0.0;
    for (double p : row) {
      if (!(p >= 0.0) || !std::isfinite(p)) throw InvalidArgument("accuracy_and_logloss: invalid probability in row " + std::to_string(i));
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-6) {
      throw InvalidArgument("accuracy_and_logloss: row " + std::to_string(i) + " sums to " + std::to_string(total));
    }
    if (labels[i] >= num_classes) throw InvalidArgument("accuracy_and_logloss: label out of range at row " + std::to_string(i));
    if (argmax(row) == labels[i]) ++correct;
    loss -= std::log(std::clamp(row[labels[i]], 1e-15, 1.0));
  }
  const double n = static_cast<double>(labels.size());
  return {static_cast<double>(correct) / n, loss / n};
}

std::vector<double> softmax_rows(std::span<const double> scores, std::size_t num_classes) {
  if (num_classes == 0 || scores.size() % num_classes != 0) throw InvalidArgument("softmax_rows: ragged scores");
  std::vector<double> out(scores.size());
  for (std::size_t r = 0; r < scores.size() / num_classes; ++r) {
    const auto row = scores.subspan(r * num_classes, num_classes);
    const double hi = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (std::size_t c = 0; c < num_classes; ++c) z += out[r * num_classes + c] = std::exp(row[c] - hi);
    for (std::size_t c = 0; c < num_classes; ++c) out[r * num_classes + c] /= z;
  }
  return out;
}

NccTable ncc_report(std::span<const NccPair> pairs, std::span<const std::string> class_names) {
  std::vector<double> sum(class_names.size(), 0.0);
  std::vector<std::size_t> count(class_names.size(), 0);
  for (const auto& p : pairs) {
    if (p.klass >= class_names.size()) throw InvalidArgument("ncc_report: class index out of range");
    sum[p.klass] += dsp::normalized_cross_correlation(p.original, p.generated);
    ++count[p.klass];
  }
  NccTable t;
  for (std::size_t k = 0; k < class_names.size(); ++k) {
    if (count[k] == 0) continue;
    t.class_names.push_back(class_names[k]);
    t.class_mean.push_back(sum[k] / static_cast<double>(count[k]));
    t.pair_count.push_back(count[k]);
  }
  if (t.class_mean.empty()) throw InvalidArgument("ncc_report: no pairs");
  t.grand_average = std::accumulate(t.class_mean.begin(), t.class_mean.end(), 0.0) / static_cast<double>(t.class_mean.size());
  return t;
}

// ---- retrieval -------------------------------------------------------------------

ad::Tensor spectrogram_image(const dsp::Spectrogram& spec, const features::EncoderConfig& config) {
  if (spec.num_frames == 0 || spec.num_bins == 0) throw InvalidArgument("spectrogram_image: empty spectrogram");
  const double peak = *std::max_element(spec.values.begin(), spec.values.end());
  video::GrayImage raw(spec.num_bins, spec.num_frames);
  for (std::size_t b = 0; b < spec.num_bins; ++b) {
    for (std::size_t t = 0; t < spec.num_frames; ++t) raw.at(b, t) = peak > 0.0 ? spec.at(t, b) / peak : 0.0;
  }
  const std::size_t h = config.height, w = config.width;
  video::GrayImage planes[3] = {video::resize_bilinear(raw, h, w), video::GrayImage(h, w), video::GrayImage(h, w)};
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      planes[1].at(r, c) = h > 1 ? static_cast<double>(r) / static_cast<double>(h - 1) : 0.0;
      planes[2].at(r, c) = w > 1 ? static_cast<double>(c) / static_cast<double>(w - 1) : 0.0;
    }
  }
  return features::image_tensor(std::span<const video::GrayImage>(planes));
}

namespace {

struct SpectrogramClassifier {
  features::ConvEncoder encoder;
  nn::Linear head;

  SpectrogramClassifier(const RetrievalConfig& config, Rng& rng)
      : encoder(config.encoder, config.seed),
        head(nn::Linear::xavier(config.encoder.output_dim, config.num_classes, rng)) {}

  ad::Tensor logits(std::span<const ad::Tensor> images) const {
    std::vector<ad::Tensor> rows;
    rows.reserve(images.size());
    for (const auto& img : images) rows.push_back(encoder.encode(img));
    return head(ad::relu(ad::concat(rows, 0)));
  }

  std::size_t predict(const ad::Tensor& image) const {
    const auto l = logits(std::span(&image, 1));
    return argmax(l.data());
  }
};

double accuracy_of(const SpectrogramClassifier& model, std::span<const LabeledSpectrogram> items,
                   const RetrievalConfig& config) {
  if (items.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& item : items) {
    if (model.predict(spectrogram_image(item.spec, config.encoder)) == item.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(items.size());
}

}  // namespace

RetrievalResult retrieval_experiment(std::span<const LabeledSpectrogram> train,
                                     std::span<const LabeledSpectrogram> real_test,
                                     std::span<const LabeledSpectrogram> synthesized, const RetrievalConfig& config) {
  if (train.empty()) throw SplitError("retrieval: empty training split");
  std::vector<bool> seen(config.num_classes, false);
  for (const auto& item : train) {
    if (item.label >= config.num_classes) throw InvalidArgument("retrieval: label out of range");
    seen[item.label] = true;
  }
  for (auto group : {real_test, synthesized}) {
    for (const auto& item : group) {
      if (item.label >= config.num_classes || !seen[item.label]) {
        throw SplitError("retrieval: class " + std::to_string(item.label) + " is absent from the training split");
      }
    }
  }

  Rng rng(hash_words({config.seed, 0x72657472ULL}));
  SpectrogramClassifier model(config, rng);
  nn::ParamList params;
  model.encoder.collect("encoder", params);
  model.head.collect("head", params);
  ad::Adam opt(nn::tensors_of(params), ad::AdamConfig{config.learning_rate});

  std::vector<ad::Tensor> images;
  images.reserve(train.size());
  for (const auto& item : train) images.push_back(spectrogram_image(item.spec, config.encoder));

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = std::max<std::size_t>(1, config.batch_size);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::vector<ad::Tensor> xs;
      std::vector<std::size_t> ys;
      for (std::size_t i = start; i < end; ++i) {
        xs.push_back(images[order[i]]);
        ys.push_back(train[order[i]].label);
      }
      opt.zero_grad();
      ad::backward(ad::cross_entropy(model.logits(xs), ys));
      opt.step();
    }
  }

  RetrievalResult r;
  r.train_accuracy = accuracy_of(model, train, config);
  r.real_test_accuracy = accuracy_of(model, real_test, config);
  r.synthesized_accuracy = accuracy_of(model, synthesized, config);
  return r;
}

// ---- reports -----------------------------------------------------------------------

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

bool numeric(const std::string& s) {
  if (s.empty()) return false;
  char* end = nullptr;
  std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

}  // namespace

std::string Table::to_csv() const {
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << csv_field(cells[i]);
    out << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out.str();
}

std::string Table::to_aligned() const {
  std::vector<std::size_t> width(header.size(), 0);
  for (std::size_t i = 0; i < header.size(); ++i) width[i] = header[i].size();
  for (const auto& r : rows) {
    if (r.size() > width.size()) width.resize(r.size(), 0);
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  }
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& cells) {
    std::string text;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const std::string pad(width[i] - cells[i].size(), ' ');
      if (i) text += "  ";
      text += numeric(cells[i]) ? pad + cells[i] : cells[i] + pad;
    }
    while (!text.empty() && text.back() == ' ') text.pop_back();
    out << text << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out.str();
}

std::string format_number(double value, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, value);
  return buf;
}

Table confusion_table(const ConfusionMatrix& m, std::span<const std::string> class_names, bool normalized) {
  if (class_names.size() != m.num_classes) throw InvalidArgument("confusion_table: class name count mismatch");
  Table t;
  t.header.push_back("true\\pred");
  t.header.insert(t.header.end(), class_names.begin(), class_names.end());
  for (std::size_t r = 0; r < m.num_classes; ++r) {
    std::vector<std::string> row{class_names[r]};
    for (std::size_t c = 0; c < m.num_classes; ++c) {
      row.push_back(normalized ? format_number(m.rate(r, c), 3) : std::to_string(m.count(r, c)));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

Table ncc_table(const NccTable& t) {
  Table out;
  out.header = {"class", "pairs", "mean_ncc"};
  for (std::size_t i = 0; i < t.class_names.size(); ++i) {
    out.rows.push_back({t.class_names[i], std::to_string(t.pair_count[i]), format_number(t.class_mean[i])});
  }
  std::size_t pairs = std::accumulate(t.pair_count.begin(), t.pair_count.end(), std::size_t{0});
  out.rows.push_back({"average", std::to_string(pairs), format_number(t.grand_average)});
  return out;
}

void write_text(const std::string& text, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("short write to " + path.string());
}

void write_waveform_tsv(const dsp::AudioClip& clip, const std::filesystem::path& path) {
  std::ostringstream out;
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    out << format_number(static_cast<double>(i) / clip.sample_rate, 6) << '\t' << format_number(clip.samples[i], 6) << '\n';
  }
  write_text(out.str(), path);
}

void write_spectrogram_tsv(const dsp::Spectrogram& spec, const std::filesystem::path& path) {
  std::ostringstream out;
  const double hop_s = static_cast<double>(spec.params.hop_size) / spec.sample_rate;
  const double bin_hz = static_cast<double>(spec.sample_rate) / static_cast<double>(spec.params.fft_size);
  for (std::size_t t = 0; t < spec.num_frames; ++t) {
    for (std::size_t b = 0; b < spec.num_bins; ++b) {
      out << format_number(static_cast<double>(t) * hop_s, 5) << '\t' << format_number(static_cast<double>(b) * bin_hz, 2)
          << '\t' << format_number(spec.at(t, b), 6) << '\n';
    }
    out << '\n';
  }
  write_text(out.str(), path);
}

}  // namespace foley::eval
