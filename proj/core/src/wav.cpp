#include "foley/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>

#include "foley/error.hpp"

namespace foley::dsp {
namespace {

constexpr double kPcmScale = 32767.0;

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | static_cast<std::uint32_t>(b[at + 1]) << 8 |
         static_cast<std::uint32_t>(b[at + 2]) << 16 | static_cast<std::uint32_t>(b[at + 3]) << 24;
}

std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | b[at + 1] << 8);
}

bool tag_is(std::span<const std::uint8_t> b, std::size_t at, std::string_view tag) {
  return std::memcmp(b.data() + at, tag.data(), 4) == 0;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_tag(std::vector<std::uint8_t>& out, std::string_view tag) { out.insert(out.end(), tag.begin(), tag.end()); }

}  // namespace

AudioClip wav_decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) throw CodecError("wav: file too short for RIFF header", bytes.size());
  if (!tag_is(bytes, 0, "RIFF")) throw CodecError("wav: missing RIFF tag", 0);
  if (!tag_is(bytes, 8, "WAVE")) throw CodecError("wav: missing WAVE tag", 8);

  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t size = read_u32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (size > bytes.size() - body) {
      // Streamed writers sometimes leave a bogus data size; accept a short data chunk.
      if (!tag_is(bytes, pos, "data")) throw CodecError("wav: chunk extends past end of file", pos + 4);
    }
    if (tag_is(bytes, pos, "fmt ")) {
      if (size < 16) throw CodecError("wav: fmt chunk too small", pos + 4);
      const std::uint16_t format = read_u16(bytes, body);
      if (format != 1) {
        throw CodecError("wav: unsupported codec (format tag " + std::to_string(format) + ", need PCM)", body);
      }
      channels = read_u16(bytes, body + 2);
      rate = read_u32(bytes, body + 4);
      const std::uint16_t bits = read_u16(bytes, body + 14);
      if (channels == 0) throw CodecError("wav: zero channels", body + 2);
      if (rate == 0) throw CodecError("wav: zero sample rate", body + 4);
      if (bits != 16) {
        throw CodecError("wav: unsupported bit depth " + std::to_string(bits) + ", need 16", body + 14);
      }
      have_fmt = true;
    } else if (tag_is(bytes, pos, "data")) {
      if (!have_fmt) throw CodecError("wav: data chunk before fmt chunk", pos);
      const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
      const std::size_t frame_bytes = 2u * channels;
      const std::size_t frames = avail / frame_bytes;
      AudioClip clip;
      clip.sample_rate = static_cast<int>(rate);
      clip.samples.resize(frames);
      for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
          const auto raw = static_cast<std::int16_t>(read_u16(bytes, body + f * frame_bytes + 2 * c));
          acc += std::max(-1.0, raw / kPcmScale);
        }
        clip.samples[f] = acc / channels;
      }
      return clip;
    }
    pos = body + size + (size & 1u);
  }
  throw CodecError(have_fmt ? "wav: no data chunk" : "wav: no fmt chunk", pos);
}

AudioClip wav_read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("wav: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return wav_decode(bytes);
  } catch (const CodecError& e) {
    throw CodecError(path.string() + ": " + e.what(), e.offset());
  }
}

std::vector<std::uint8_t> wav_encode(const AudioClip& clip) {
  if (clip.sample_rate <= 0) throw InvalidArgument("wav: sample rate must be positive");
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (double s : clip.samples) {
    const double v = std::isfinite(s) ? std::clamp(s, -1.0, 1.0) : 0.0;
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(v * kPcmScale))));
  }
  return out;
}

void wav_write(const AudioClip& clip, const std::filesystem::path& path) {
  const auto bytes = wav_encode(clip);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("wav: cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("wav: short write to " + path.string());
}

}  // namespace foley::dsp
