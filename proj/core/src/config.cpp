#include "foley/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string_view>
#include <vector>

#include "foley/error.hpp"

namespace foley {

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::size_t to_size(const std::string& s) {
  std::size_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("expected a non-negative integer, got '" + s + "'");
  return v;
}

double to_double(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::logic_error&) {
  }
  throw ConfigError("expected a number, got '" + s + "'");
}

struct Field {
  const char* section;
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <typename T>
Field size_field(const char* section, const char* key, T RunConfig::*member) {
  return {section, key, [member](const RunConfig& c) { return std::to_string(c.*member); },
          [member](RunConfig& c, const std::string& v) { c.*member = static_cast<T>(to_size(v)); }};
}

Field real_field(const char* section, const char* key, double RunConfig::*member) {
  return {section, key, [member](const RunConfig& c) { return fmt(c.*member); },
          [member](RunConfig& c, const std::string& v) { c.*member = to_double(v); }};
}

template <typename E>
Field enum_field(const char* section, const char* key, E RunConfig::*member, std::vector<std::pair<E, const char*>> names) {
  return {section, key,
          [member, names](const RunConfig& c) {
            for (const auto& [e, n] : names) {
              if (c.*member == e) return std::string(n);
            }
            return std::string("?");
          },
          [member, names](RunConfig& c, const std::string& v) {
            std::string options;
            for (const auto& [e, n] : names) {
              if (v == n) {
                c.*member = e;
                return;
              }
              options += options.empty() ? n : std::string("|") + n;
            }
            throw ConfigError("expected one of " + options + ", got '" + v + "'");
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"run", "seed", [](const RunConfig& c) { return std::to_string(c.seed); },
                 [](RunConfig& c, const std::string& v) { c.seed = static_cast<std::uint64_t>(to_size(v)); }});
    f.push_back(size_field("run", "num_classes", &RunConfig::num_classes));
    f.push_back({"audio", "sample_rate", [](const RunConfig& c) { return std::to_string(c.sample_rate); },
                 [](RunConfig& c, const std::string& v) { c.sample_rate = static_cast<int>(to_size(v)); }});
    f.push_back({"audio", "fft_size", [](const RunConfig& c) { return std::to_string(c.stft.fft_size); },
                 [](RunConfig& c, const std::string& v) { c.stft.fft_size = to_size(v); }});
    f.push_back({"audio", "window_size", [](const RunConfig& c) { return std::to_string(c.stft.window_size); },
                 [](RunConfig& c, const std::string& v) { c.stft.window_size = to_size(v); }});
    f.push_back({"audio", "hop_size", [](const RunConfig& c) { return std::to_string(c.stft.hop_size); },
                 [](RunConfig& c, const std::string& v) { c.stft.hop_size = to_size(v); }});
    f.push_back(size_field("audio", "bank_frames", &RunConfig::bank_frames));
    f.push_back(size_field("audio", "gl_iterations", &RunConfig::gl_iterations));
    f.push_back(size_field("video", "frame_height", &RunConfig::frame_height));
    f.push_back(size_field("video", "frame_width", &RunConfig::frame_width));
    f.push_back(size_field("video", "upsample_factor", &RunConfig::upsample_factor));
    f.push_back(enum_field("video", "upsampling", &RunConfig::upsampling,
                           {{FrameUpsampling::interpolate, "interpolate"}, {FrameUpsampling::replicate, "replicate"}}));
    f.push_back(enum_field("video", "input", &RunConfig::input,
                           {{VisualInput::space_time, "space_time"}, {VisualInput::raw, "raw"}}));
    f.push_back({"encoder", "channels",
                 [](const RunConfig& c) {
                   std::string s;
                   for (std::size_t ch : c.encoder.channels) s += (s.empty() ? "" : ",") + std::to_string(ch);
                   return s;
                 },
                 [](RunConfig& c, const std::string& v) {
                   c.encoder.channels.clear();
                   std::stringstream ss(v);
                   std::string part;
                   while (std::getline(ss, part, ',')) c.encoder.channels.push_back(to_size(part));
                 }});
    f.push_back({"encoder", "output_dim", [](const RunConfig& c) { return std::to_string(c.encoder.output_dim); },
                 [](RunConfig& c, const std::string& v) { c.encoder.output_dim = to_size(v); }});
    f.push_back({"encoder", "seed", [](const RunConfig& c) { return std::to_string(c.encoder_seed); },
                 [](RunConfig& c, const std::string& v) { c.encoder_seed = static_cast<std::uint64_t>(to_size(v)); }});
    f.push_back(enum_field("fslstm", "kind", &RunConfig::sequence,
                           {{seq::SequenceKind::fs_lstm, "fs_lstm"}, {seq::SequenceKind::simple_lstm, "simple_lstm"}}));
    f.push_back(size_field("fslstm", "hidden_dim", &RunConfig::hidden_dim));
    f.push_back(size_field("fslstm", "num_fast_cells", &RunConfig::num_fast_cells));
    f.push_back(real_field("fslstm", "zoneout_prob", &RunConfig::zoneout_prob));
    f.push_back(real_field("fslstm", "dropout_prob", &RunConfig::dropout_prob));
    f.push_back(real_field("fslstm", "forget_bias_init", &RunConfig::forget_bias_init));
    f.push_back(real_field("fslstm", "lambda", &RunConfig::lambda));
    f.push_back(real_field("fslstm", "alpha", &RunConfig::alpha));
    f.push_back(size_field("fslstm", "epochs", &RunConfig::fslstm_epochs));
    f.push_back(size_field("fslstm", "batch_size", &RunConfig::fslstm_batch));
    f.push_back(real_field("fslstm", "learning_rate", &RunConfig::fslstm_lr));
    f.push_back(size_field("trn", "max_scale", &RunConfig::max_scale));
    f.push_back(size_field("trn", "hidden_dim", &RunConfig::trn_hidden));
    f.push_back(size_field("trn", "subsets_per_scale", &RunConfig::subsets_per_scale));
    f.push_back(size_field("trn", "sampled_frames", &RunConfig::sampled_frames));
    f.push_back(enum_field("trn", "segment", &RunConfig::segment,
                           {{video::SegmentMode::full, "full"}, {video::SegmentMode::early, "early"}}));
    f.push_back(size_field("trn", "epochs", &RunConfig::trn_epochs));
    f.push_back(size_field("trn", "batch_size", &RunConfig::trn_batch));
    f.push_back(real_field("trn", "learning_rate", &RunConfig::trn_lr));
    f.push_back(size_field("retrieval", "epochs", &RunConfig::retrieval_epochs));
    f.push_back(size_field("retrieval", "batch_size", &RunConfig::retrieval_batch));
    f.push_back(real_field("retrieval", "learning_rate", &RunConfig::retrieval_lr));
    return f;
  }();
  return table;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

void RunConfig::validate() const {
  try {
    stft.validate_for_inversion();
  } catch (const Error& e) {
    throw ConfigError(std::string("[audio] ") + e.what());
  }
  if (sample_rate <= 0) throw ConfigError("[audio] sample_rate must be positive");
  if (bank_frames == 0) throw ConfigError("[audio] bank_frames must be >= 1");
  if (gl_iterations == 0) throw ConfigError("[audio] gl_iterations must be >= 1");
  if (num_classes == 0) throw ConfigError("[run] num_classes must be >= 1");
  if (frame_height == 0 || frame_width == 0) throw ConfigError("[video] frame size must be positive");
  if (upsample_factor == 0) throw ConfigError("[video] upsample_factor must be >= 1");
  if (encoder.height != frame_height || encoder.width != frame_width) {
    throw ConfigError("[encoder] input size must equal the [video] frame size");
  }
  encoder.validate();
  fslstm_config().validate();
  trn_config().validate();
  if (max_scale > sampled_frames) {
    throw ConfigError("[trn] max_scale " + std::to_string(max_scale) + " needs at least that many sampled frames, got " +
                      std::to_string(sampled_frames));
  }
  if (!(alpha > 0.0)) throw ConfigError("[fslstm] alpha must be > 0");
  if (fslstm_batch == 0 || trn_batch == 0 || retrieval_batch == 0) throw ConfigError("batch sizes must be >= 1");
  if (!(fslstm_lr > 0.0 && trn_lr > 0.0 && retrieval_lr > 0.0)) throw ConfigError("learning rates must be > 0");
}

seq::FsLstmConfig RunConfig::fslstm_config() const {
  seq::FsLstmConfig c;
  c.input_dim = feature_dim();
  c.hidden_dim = hidden_dim;
  c.num_fast_cells = num_fast_cells;
  c.num_classes = num_classes;
  c.residual_dim = residual_dim();
  c.zoneout_prob = zoneout_prob;
  c.dropout_prob = dropout_prob;
  c.forget_bias_init = forget_bias_init;
  c.seed = hash_words({seed, 0x6d6f64656c31ULL});
  return c;
}

trn::TrnConfig RunConfig::trn_config() const {
  trn::TrnConfig c;
  c.input_dim = feature_dim();
  c.max_scale = max_scale;
  c.hidden_dim = trn_hidden;
  c.num_classes = num_classes;
  c.subsets_per_scale = subsets_per_scale;
  c.seed = hash_words({seed, 0x6d6f64656c32ULL});
  return c;
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  const char* section = "";
  for (const auto& f : fields()) {
    if (std::string_view(section) != f.section) {
      if (*section) out << '\n';
      section = f.section;
      out << '[' << section << "]\n";
    }
    out << f.key << " = " << f.get(*this) << '\n';
  }
  return out.str();
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    try {
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError("unterminated section header");
        section = trim(std::string_view(line).substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("expected key = value");
      const std::string key = trim(std::string_view(line).substr(0, eq));
      const std::string value = trim(std::string_view(line).substr(eq + 1));
      const Field* match = nullptr;
      for (const auto& f : fields()) {
        if (section == f.section && key == f.key) match = &f;
      }
      if (!match) throw ConfigError("unknown key '" + key + "' in section [" + section + "]");
      match->set(c, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  c.encoder.height = c.frame_height;
  c.encoder.width = c.frame_width;
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse(text.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_text();
}

std::uint64_t RunConfig::hash() const { return fnv1a(to_text()); }

}  // namespace foley
