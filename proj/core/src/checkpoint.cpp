#include "foley/checkpoint.hpp"

#include <set>

#include "binio.hpp"
#include "foley/error.hpp"

namespace foley {

Checkpoint Checkpoint::capture(const std::string& model, const RunConfig& config, const nn::ParamList& params,
                               Precision precision) {
  Checkpoint c;
  c.model = model;
  c.config_text = config.to_text();
  c.config_hash = fnv1a(c.config_text);
  c.seed = config.seed;
  c.precision = precision;
  std::set<std::string> names;
  for (const auto& p : params) {
    if (!names.insert(p.name).second) throw ConfigError("checkpoint: duplicate tensor name '" + p.name + "'");
    StoredTensor t{p.name, p.tensor.shape(), {p.tensor.data().begin(), p.tensor.data().end()}};
    if (precision == Precision::f32) {
      for (double& v : t.values) v = static_cast<float>(v);
    }
    c.tensors.push_back(std::move(t));
  }
  return c;
}

void Checkpoint::restore(const nn::ParamList& params) const {
  for (const auto& p : params) {
    const StoredTensor* match = nullptr;
    for (const auto& t : tensors) {
      if (t.name == p.name) match = &t;
    }
    if (!match) throw ConfigError("checkpoint: missing tensor '" + p.name + "'");
    if (match->shape != p.tensor.shape()) {
      throw ShapeError("checkpoint: tensor '" + p.name + "' stored as " + ad::shape_string(match->shape) +
                       ", model expects " + ad::shape_string(p.tensor.shape()));
    }
    auto dst = ad::Tensor(p.tensor).mutable_data();
    std::copy(match->values.begin(), match->values.end(), dst.begin());
  }
}

void Checkpoint::check_compatible(const RunConfig& expected) const {
  const RunConfig stored = config();
  if (stored.num_classes != expected.num_classes) {
    throw ConfigError("checkpoint: trained for " + std::to_string(stored.num_classes) + " classes, run expects " +
                      std::to_string(expected.num_classes));
  }
  if (stored.residual_dim() != expected.residual_dim()) {
    throw ConfigError("checkpoint: trained for " + std::to_string(stored.residual_dim()) + " bins, run expects " +
                      std::to_string(expected.residual_dim()));
  }
}

void checkpoint_save(const Checkpoint& ckpt, const std::filesystem::path& path) {
  detail::ByteWriter out;
  out.magic("AFCKPT01");
  out.u32(Checkpoint::kVersion);
  out.str(ckpt.model);
  out.str(ckpt.config_text);
  out.u64(ckpt.config_hash);
  out.u64(ckpt.seed);
  out.u8(static_cast<std::uint8_t>(ckpt.precision));
  out.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    if (t.values.size() != ad::shape_size(t.shape)) throw ShapeError("checkpoint: payload of '" + t.name + "' does not match its shape");
    out.str(t.name);
    out.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) out.u64(d);
    for (double v : t.values) {
      if (ckpt.precision == Precision::f32) {
        out.f32(v);
      } else {
        out.f64(v);
      }
    }
  }
  out.write_file(path);
}

Checkpoint checkpoint_load(const std::filesystem::path& path) {
  auto in = detail::ByteReader::from_file(path);
  in.expect_magic("AFCKPT01");
  const auto version = in.u32();
  if (version != Checkpoint::kVersion) in.fail("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.model = in.str();
  c.config_text = in.str();
  c.config_hash = in.u64();
  c.seed = in.u64();
  const auto precision = in.u8();
  if (precision > 1) in.fail("unknown precision flag");
  c.precision = static_cast<Precision>(precision);
  const std::size_t count = in.u32();
  const std::uint64_t width = c.precision == Precision::f32 ? 4 : 8;
  std::set<std::string> names;
  for (std::size_t i = 0; i < count; ++i) {
    StoredTensor t;
    t.name = in.str();
    if (!names.insert(t.name).second) in.fail("duplicate tensor name '" + t.name + "'");
    const std::size_t rank = in.u32();
    in.require(rank, 8, "tensor shape");
    for (std::size_t d = 0; d < rank; ++d) t.shape.push_back(in.u64());
    const std::size_t n = ad::shape_size(t.shape);
    in.require(n, width, "tensor payload");
    t.values.resize(n);
    for (double& v : t.values) v = c.precision == Precision::f32 ? in.f32() : in.f64();
    c.tensors.push_back(std::move(t));
  }
  if (!in.at_end()) in.fail("trailing bytes");
  if (fnv1a(c.config_text) != c.config_hash) throw ConfigError(path.string() + ": config hash mismatch");
  return c;
}

void spectrogram_save(const dsp::Spectrogram& spec, const std::filesystem::path& path) {
  detail::ByteWriter out;
  out.magic("AFSPEC01");
  out.u32(static_cast<std::uint32_t>(spec.num_frames));
  out.u32(static_cast<std::uint32_t>(spec.num_bins));
  out.u32(static_cast<std::uint32_t>(spec.params.fft_size));
  out.u32(static_cast<std::uint32_t>(spec.params.window_size));
  out.u32(static_cast<std::uint32_t>(spec.params.hop_size));
  out.u32(static_cast<std::uint32_t>(spec.sample_rate));
  out.u8(static_cast<std::uint8_t>(spec.mode));
  for (double v : spec.values) out.f64(v);
  out.write_file(path);
}

dsp::Spectrogram spectrogram_load(const std::filesystem::path& path) {
  auto in = detail::ByteReader::from_file(path);
  in.expect_magic("AFSPEC01");
  dsp::Spectrogram s;
  s.num_frames = in.u32();
  s.num_bins = in.u32();
  s.params.fft_size = in.u32();
  s.params.window_size = in.u32();
  s.params.hop_size = in.u32();
  s.sample_rate = static_cast<int>(in.u32());
  const auto mode = in.u8();
  if (mode > 2) in.fail("unknown spectrogram mode");
  s.mode = static_cast<dsp::SpectrogramMode>(mode);
  in.require(static_cast<std::uint64_t>(s.num_frames) * s.num_bins, 8, "spectrogram payload");
  s.values.resize(s.num_frames * s.num_bins);
  for (double& v : s.values) v = in.f64();
  try {
    s.validate();
  } catch (const Error& e) {
    throw CodecError(path.string() + ": " + e.what(), in.position());
  }
  return s;
}

}  // namespace foley
