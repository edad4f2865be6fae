#include "foley/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "foley/error.hpp"
#include "foley/rng.hpp"
#include "foley/wav.hpp"

namespace foley::data {

const std::vector<std::string>& default_class_names() {
  static const std::vector<std::string> names{"break", "car",     "clock", "cutting", "fire",   "footstep",
                                              "gunshot", "horse", "rain",  "thunder", "typing", "waterfall"};
  return names;
}

const char* to_string(Split s) noexcept { return s == Split::train ? "train" : "test"; }

std::size_t DatasetManifest::class_index(const std::string& label) const {
  const auto it = std::find(class_names.begin(), class_names.end(), label);
  if (it == class_names.end()) throw ConfigError("manifest: unknown class label '" + label + "'");
  return static_cast<std::size_t>(it - class_names.begin());
}

const ManifestEntry& DatasetManifest::find(const std::string& clip_id) const {
  for (const auto& e : entries) {
    if (e.clip_id == clip_id) return e;
  }
  throw InvalidArgument("unknown clip '" + clip_id + "'");
}

std::filesystem::path DatasetManifest::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() ? p : root / p;
}

void DatasetManifest::validate() const {
  if (class_names.empty()) throw ConfigError("manifest: no class names");
  std::set<std::string> ids;
  for (const auto& e : entries) {
    class_index(e.label);
    if (!ids.insert(e.clip_id).second) throw ConfigError("manifest: duplicate clip id '" + e.clip_id + "'");
    if (!(e.duration_seconds > 0.0)) throw ConfigError("manifest: clip '" + e.clip_id + "' has non-positive duration");
    if (!(e.fps > 0.0)) throw ConfigError("manifest: clip '" + e.clip_id + "' has non-positive fps");
  }
}

namespace {

std::string exact(double v) {
  char buf[40];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) return out;
    start = tab + 1;
  }
}

constexpr const char* kColumns = "clip_id\tlabel\tframes_path\twav_path\tfps\tduration\tsplit";

}  // namespace

void manifest_save(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "#classes";
  for (const auto& c : manifest.class_names) out << '\t' << c;
  out << '\n' << kColumns << '\n';
  for (const auto& e : manifest.entries) {
    out << e.clip_id << '\t' << e.label << '\t' << e.frames_path.generic_string() << '\t' << e.wav_path.generic_string()
        << '\t' << exact(e.fps) << '\t' << exact(e.duration_seconds) << '\t' << to_string(e.split) << '\n';
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot write " + path.string());
  file << out.str();
}

DatasetManifest manifest_load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  DatasetManifest m;
  m.root = path.parent_path();
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& why) -> void { throw CodecError(path.string() + ": line " + std::to_string(line_no) + ": " + why, line_no); };
  bool saw_classes = false, saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_tabs(line);
    if (!saw_classes) {
      if (cells[0] != "#classes" || cells.size() < 2) fail("expected a '#classes' line");
      m.class_names.assign(cells.begin() + 1, cells.end());
      saw_classes = true;
      continue;
    }
    if (!saw_header) {
      if (line != kColumns) fail("unexpected column header");
      saw_header = true;
      continue;
    }
    if (cells.size() != 7) fail("expected 7 columns, found " + std::to_string(cells.size()));
    ManifestEntry e;
    e.clip_id = cells[0];
    e.label = cells[1];
    e.frames_path = cells[2];
    e.wav_path = cells[3];
    try {
      std::size_t used = 0;
      e.fps = std::stod(cells[4], &used);
      if (used != cells[4].size()) fail("bad fps '" + cells[4] + "'");
      e.duration_seconds = std::stod(cells[5], &used);
      if (used != cells[5].size()) fail("bad duration '" + cells[5] + "'");
    } catch (const std::logic_error&) {
      fail("non-numeric fps or duration");
    }
    if (cells[6] == "train") {
      e.split = Split::train;
    } else if (cells[6] == "test") {
      e.split = Split::test;
    } else {
      fail("split must be train or test, got '" + cells[6] + "'");
    }
    m.entries.push_back(std::move(e));
  }
  if (!saw_header) fail("missing header");
  try {
    m.validate();
  } catch (const ConfigError& err) {
    throw CodecError(path.string() + ": " + err.what(), line_no);
  }
  return m;
}

void stratified_split(DatasetManifest& manifest, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InvalidArgument("split: train fraction must be in (0, 1)");
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    by_class[manifest.class_index(manifest.entries[i].label)].push_back(i);
  }
  for (auto& [klass, members] : by_class) {
    Rng rng(hash_words({seed, klass, 0x73706c6974ULL}));
    rng.shuffle(members);
    const std::size_t n = members.size();
    std::size_t n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
    n_train = std::max<std::size_t>(1, n_train);
    if (n >= 2) n_train = std::min(n_train, n - 1);
    for (std::size_t i = 0; i < n; ++i) manifest.entries[members[i]].split = i < n_train ? Split::train : Split::test;
  }
}

// ---- synthetic corpus ---------------------------------------------------------

double class_tone_hz(std::size_t klass, const CorpusOptions& options) {
  const double bin = 8.0 + 4.0 * static_cast<double>(klass);
  return bin * options.sample_rate / static_cast<double>(options.fft_size);
}

namespace {

struct Events {
  std::vector<double> onsets;
  double decay = 0.1;

  /// Sum of decaying pulses at time t, saturated at 1.
  double envelope(double t) const {
    double e = 0.0;
    for (double o : onsets) {
      if (o <= t) e += std::exp(-(t - o) / decay);
    }
    return std::min(1.0, e);
  }
};

Events class_events(std::size_t klass, double duration, Rng& rng) {
  Events ev;
  const double rate = 1.25 + 0.25 * static_cast<double>(klass);
  ev.decay = 0.06 + 0.03 * static_cast<double>(klass % 3);
  double t = rng.uniform(0.0, 1.0 / rate);
  while (t < duration) {
    ev.onsets.push_back(t);
    t += (1.0 + rng.uniform(-0.15, 0.15)) / rate;
  }
  return ev;
}

std::array<double, 3> class_tint(std::size_t klass, std::size_t num_classes) {
  // HSV with s = 0.7, v = 1 at hue klass / num_classes.
  const double h = 6.0 * static_cast<double>(klass) / static_cast<double>(num_classes);
  const double s = 0.7;
  const int sector = static_cast<int>(h) % 6;
  const double f = h - std::floor(h);
  const double p = 1.0 - s, q = 1.0 - s * f, u = 1.0 - s * (1.0 - f);
  switch (sector) {
    case 0: return {1.0, u, p};
    case 1: return {q, 1.0, p};
    case 2: return {p, 1.0, u};
    case 3: return {p, q, 1.0};
    case 4: return {u, p, 1.0};
    default: return {1.0, p, q};
  }
}

void paint(video::RgbImage& img, std::size_t r, std::size_t c, const std::array<double, 3>& color, double level) {
  for (std::size_t ch = 0; ch < 3; ++ch) img.at(r, c, ch) = std::clamp(color[ch] * level, 0.0, 1.0);
}

void draw_motif(video::RgbImage& img, std::size_t klass, double t, double env, const Events& ev,
                const std::array<double, 3>& tint, Rng& frame_rng) {
  const std::size_t n = img.height;
  const double size = static_cast<double>(n);
  const std::size_t variant = klass / 4;
  const double level = 0.15 + 0.85 * env;
  switch (klass % 4) {
    case 0: {  // oscillating bar
      const double width = 3.0 + 2.0 * static_cast<double>(variant);
      const double centre = 0.5 * size + 0.3 * size * std::sin(2.0 * std::numbers::pi * (0.5 + 0.25 * variant) * t);
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
          if (std::abs(static_cast<double>(c) - centre) <= width) paint(img, r, c, tint, level);
        }
      }
      break;
    }
    case 1: {  // falling blocks, one per event
      const double block = 5.0 + 2.0 * static_cast<double>(variant);
      const double speed = 40.0 + 15.0 * static_cast<double>(variant);
      for (std::size_t i = 0; i < ev.onsets.size(); ++i) {
        const double age = t - ev.onsets[i];
        if (age < 0.0) continue;
        const double top = age * speed;
        const double left = std::fmod(13.0 * static_cast<double>(i) + 7.0 * variant, size - block);
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t c = 0; c < n; ++c) {
            const double y = static_cast<double>(r), x = static_cast<double>(c);
            if (y >= top && y < top + block && x >= left && x < left + block) paint(img, r, c, tint, level);
          }
        }
      }
      break;
    }
    case 2: {  // flicker field, density follows the envelope
      const double density = 0.04 + 0.3 * env;
      const std::size_t cell = 2 + variant;
      for (std::size_t r = 0; r + cell <= n; r += cell) {
        for (std::size_t c = 0; c + cell <= n; c += cell) {
          if (frame_rng.uniform() >= density) continue;
          for (std::size_t dr = 0; dr < cell; ++dr) {
            for (std::size_t dc = 0; dc < cell; ++dc) paint(img, r + dr, c + dc, tint, level);
          }
        }
      }
      break;
    }
    default: {  // pulsing disc
      const double radius = 0.08 * size + 0.25 * size * env;
      const double cx = size * (0.3 + 0.2 * static_cast<double>(variant));
      const double cy = size * (0.7 - 0.2 * static_cast<double>(variant));
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
          const double dy = static_cast<double>(r) - cy, dx = static_cast<double>(c) - cx;
          if (dx * dx + dy * dy <= radius * radius) paint(img, r, c, tint, level);
        }
      }
      break;
    }
  }
}

std::string clip_id(const std::string& label, std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02zu", index);
  return label + "_" + buf;
}

}  // namespace

SyntheticClip synthesize_clip(std::size_t klass, std::size_t index, const CorpusOptions& options) {
  if (klass >= options.num_classes) throw InvalidArgument("synthesize_clip: class out of range");
  Rng rng(hash_words({options.seed, klass, index, 0x636c6970ULL}));
  const Events ev = class_events(klass, options.duration_seconds, rng);
  const double gain = rng.uniform(0.85, 1.0);

  SyntheticClip clip;
  const auto samples = static_cast<std::size_t>(std::llround(options.duration_seconds * options.sample_rate));
  clip.audio.sample_rate = options.sample_rate;
  clip.audio.samples.resize(samples);
  const double f0 = class_tone_hz(klass, options);
  const double w0 = 2.0 * std::numbers::pi * f0 / options.sample_rate;
  for (std::size_t n = 0; n < samples; ++n) {
    const double t = static_cast<double>(n) / options.sample_rate;
    const double amp = 0.25 + 0.65 * ev.envelope(t);
    const double x = static_cast<double>(n);
    clip.audio.samples[n] = 0.8 * gain * amp * (std::cos(w0 * x) + 0.5 * std::cos(2.0 * w0 * x)) / 1.5;
  }

  const auto frames = static_cast<std::size_t>(std::llround(options.duration_seconds * options.fps));
  const auto tint = options.class_colours ? class_tint(klass, options.num_classes) : std::array<double, 3>{0.8, 0.8, 0.8};
  const std::array<double, 3> background{0.06 + 0.04 * tint[0], 0.06 + 0.04 * tint[1], 0.06 + 0.04 * tint[2]};
  for (std::size_t i = 0; i < frames; ++i) {
    const double t = static_cast<double>(i) / options.fps;
    video::RgbImage img(options.frame_size, options.frame_size);
    for (std::size_t p = 0; p < img.pixels.size(); ++p) img.pixels[p] = background[p % 3];
    Rng frame_rng(hash_words({options.seed, klass, index, i, 0x6672616d65ULL}));
    draw_motif(img, klass, t, ev.envelope(t), ev, tint, frame_rng);
    clip.frames.push_back(std::move(img));
  }
  return clip;
}

DatasetManifest generate_synthetic_corpus(const std::filesystem::path& out_dir, const CorpusOptions& options) {
  if (options.clips_per_class < 2) throw InvalidArgument("corpus: clips_per_class must be >= 2");
  if (options.num_classes == 0 || options.num_classes > default_class_names().size()) {
    throw InvalidArgument("corpus: num_classes must be in [1, " + std::to_string(default_class_names().size()) + "]");
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  DatasetManifest m;
  m.root = out_dir;
  m.class_names.assign(default_class_names().begin(),
                       default_class_names().begin() + static_cast<std::ptrdiff_t>(options.num_classes));
  for (std::size_t k = 0; k < options.num_classes; ++k) {
    for (std::size_t i = 0; i < options.clips_per_class; ++i) {
      const auto clip = synthesize_clip(k, i, options);
      const std::string id = clip_id(m.class_names[k], i);
      const std::filesystem::path rel = std::filesystem::path("clips") / id;
      std::filesystem::create_directories(out_dir / rel / "frames", ec);
      if (ec) throw IoError("cannot create " + (out_dir / rel).string() + ": " + ec.message());
      for (std::size_t f = 0; f < clip.frames.size(); ++f) {
        char name[16];
        std::snprintf(name, sizeof name, "%04zu.ppm", f);
        video::write_ppm(clip.frames[f], out_dir / rel / "frames" / name);
      }
      dsp::wav_write(clip.audio, out_dir / rel / "audio.wav");
      ManifestEntry e;
      e.clip_id = id;
      e.label = m.class_names[k];
      e.frames_path = rel / "frames";
      e.wav_path = rel / "audio.wav";
      e.fps = options.fps;
      e.duration_seconds = options.duration_seconds;
      m.entries.push_back(std::move(e));
    }
  }
  stratified_split(m, options.train_fraction, options.seed);
  manifest_save(m, out_dir / "manifest.tsv");
  return m;
}

}  // namespace foley::data
