#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "foley/dsp.hpp"

namespace foley::dsp {

/// Reads RIFF/WAVE PCM16. Multi-channel input is downmixed by averaging.
/// Throws CodecError carrying the byte offset of the offending field.
AudioClip wav_read(const std::filesystem::path& path);
AudioClip wav_decode(std::span<const std::uint8_t> bytes);

/// Writes mono PCM16. Samples are clamped to [-1, 1] and scaled by 32767.
void wav_write(const AudioClip& clip, const std::filesystem::path& path);
std::vector<std::uint8_t> wav_encode(const AudioClip& clip);

}  // namespace foley::dsp
