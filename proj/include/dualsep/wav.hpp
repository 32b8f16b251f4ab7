#pragma once

#include <filesystem>
#include <optional>

#include "dualsep/signal.hpp"

namespace dualsep {

enum class WavFormat { pcm16, float32 };

/// Reads a RIFF/WAVE file (PCM16 or IEEE float32, any channel count).
///
/// When `expected_rate` is set, a file at any other rate is rejected with
/// RateMismatchError; nothing is resampled. Unsupported encodings raise
/// DecodeError, missing/unreadable files IoError.
MultichannelSignal load_wav(const std::filesystem::path& path,
                            std::optional<double> expected_rate = kPipelineSampleRate);

/// Writes interleaved little-endian samples. float32 output is bit-exact on
/// reload; pcm16 quantizes to round(x * 32768) clamped to the int16 range.
void save_wav(const MultichannelSignal& signal, const std::filesystem::path& path,
              WavFormat format = WavFormat::float32);

}  // namespace dualsep
