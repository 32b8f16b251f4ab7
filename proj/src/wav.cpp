#include "dualsep/wav.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "dualsep/error.hpp"

namespace dualsep {
namespace {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t read_u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>(v >> 8));
}
void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}
void put_tag(std::vector<unsigned char>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

}  // namespace

MultichannelSignal load_wav(const std::filesystem::path& path, std::optional<double> expected_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open WAV file '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = " in '" + path.string() + "'";

  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DecodeError("not a RIFF/WAVE file" + where);
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  bool have_fmt = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    std::uint32_t size = read_u32(chunk + 4);
    std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + size > bytes.size()) throw DecodeError("truncated fmt chunk" + where);
      format = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
      if (format == kFormatExtensible) {
        if (size < 40) throw DecodeError("truncated WAVE_FORMAT_EXTENSIBLE header" + where);
        format = read_u16(bytes.data() + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      // Streaming writers sometimes leave the size unset; clamp to what is there.
      data_size = std::min<std::size_t>(size, bytes.size() - body);
      break;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) throw DecodeError("missing fmt chunk" + where);
  if (data == nullptr) throw DecodeError("missing data chunk" + where);
  if (channels == 0) throw DecodeError("zero channels" + where);
  if (rate == 0) throw DecodeError("zero sample rate" + where);

  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool f32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !f32) {
    throw DecodeError("unsupported WAV encoding (format " + std::to_string(format) + ", " + std::to_string(bits) +
                      " bits)" + where);
  }
  if (expected_rate && static_cast<double>(rate) != *expected_rate) {
    throw RateMismatchError("sample rate " + std::to_string(rate) + " Hz does not match pipeline rate " +
                            std::to_string(static_cast<long>(*expected_rate)) + " Hz" + where);
  }

  const std::size_t frame_bytes = static_cast<std::size_t>(channels) * (bits / 8);
  const std::size_t length = data_size / frame_bytes;
  MultichannelSignal signal(channels, length, static_cast<double>(rate));
  for (std::size_t n = 0; n < length; ++n) {
    const unsigned char* frame = data + n * frame_bytes;
    for (std::size_t c = 0; c < channels; ++c) {
      if (pcm16) {
        auto q = static_cast<std::int16_t>(read_u16(frame + 2 * c));
        signal.at(c, n) = static_cast<float>(q) / 32768.0f;
      } else {
        signal.at(c, n) = std::bit_cast<float>(read_u32(frame + 4 * c));
      }
    }
  }
  return signal;
}

void save_wav(const MultichannelSignal& signal, const std::filesystem::path& path, WavFormat format) {
  if (!signal.all_finite()) throw ValidationError("refusing to write non-finite samples to '" + path.string() + "'");
  if (signal.channels() == 0 || signal.channels() > 0xFFFF) throw ValidationError("WAV channel count out of range");

  const std::uint16_t channels = static_cast<std::uint16_t>(signal.channels());
  const std::uint16_t bits = format == WavFormat::pcm16 ? 16 : 32;
  const std::uint32_t rate = static_cast<std::uint32_t>(std::lround(signal.sample_rate()));
  const std::uint32_t block_align = channels * (bits / 8u);
  const std::uint64_t data_size = static_cast<std::uint64_t>(block_align) * signal.length();
  if (data_size > 0xFFFFFFFFull - 64) throw ValidationError("signal too long for a RIFF/WAVE file");

  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  put_tag(out, "RIFF");
  put_u32(out, static_cast<std::uint32_t>(36 + data_size));
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, format == WavFormat::pcm16 ? kFormatPcm : kFormatFloat);
  put_u16(out, channels);
  put_u32(out, rate);
  put_u32(out, rate * block_align);
  put_u16(out, static_cast<std::uint16_t>(block_align));
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, static_cast<std::uint32_t>(data_size));

  for (std::size_t n = 0; n < signal.length(); ++n) {
    for (std::size_t c = 0; c < signal.channels(); ++c) {
      const float v = signal.at(c, n);
      if (format == WavFormat::pcm16) {
        long q = std::lround(static_cast<double>(v) * 32768.0);
        q = std::clamp(q, -32768L, 32767L);
        put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
      } else {
        put_u32(out, std::bit_cast<std::uint32_t>(v));
      }
    }
  }

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot open '" + path.string() + "' for writing");
  file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace dualsep
