#include "dualsep/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include <zlib.h>

#include "dualsep/error.hpp"

namespace dualsep {
namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>((v >> s) & 0xFF));
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4], const std::vector<std::uint8_t>& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uLong crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

void write_bytes(const std::filesystem::path& path, const char* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(data, static_cast<std::streamsize>(size));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace

GrayImage spectrogram_image(const MultichannelSignal& signal, std::size_t channel, const StftConfig& stft) {
  if (channel >= signal.channels()) throw ContractError("spectrogram channel out of range");
  if (signal.length() == 0) throw ContractError("spectrogram of an empty signal");
  const ComplexSpectrogram spec = analyze(signal.extract(channel), stft);
  GrayImage img;
  img.width = spec.frames();
  img.height = spec.bins();
  std::vector<double> level(img.width * img.height);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t t = 0; t < spec.frames(); ++t) {
    for (std::size_t f = 0; f < spec.bins(); ++f) {
      const double v = std::log10(std::abs(std::complex<double>(spec.at(t, f, 0))) + 1e-8);
      level[(img.height - 1 - f) * img.width + t] = v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  img.pixels.resize(level.size());
  const double range = hi - lo;
  for (std::size_t i = 0; i < level.size(); ++i) {
    img.pixels[i] = range > 0.0 ? static_cast<std::uint8_t>(std::lround(255.0 * (level[i] - lo) / range)) : 0;
  }
  return img;
}

void write_pgm(const GrayImage& image, const std::filesystem::path& path) {
  std::string data = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  data.append(image.pixels.begin(), image.pixels.end());
  write_bytes(path, data.data(), data.size());
}

void write_png(const GrayImage& image, const std::filesystem::path& path) {
  if (image.width == 0 || image.height == 0) throw ContractError("cannot write an empty image");
  std::vector<std::uint8_t> raw;
  raw.reserve(image.height * (image.width + 1));
  for (std::size_t r = 0; r < image.height; ++r) {
    raw.push_back(0);  // filter: none
    raw.insert(raw.end(), image.pixels.begin() + static_cast<std::ptrdiff_t>(r * image.width),
               image.pixels.begin() + static_cast<std::ptrdiff_t>((r + 1) * image.width));
  }
  uLongf packed_size = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> packed(packed_size);
  if (compress2(packed.data(), &packed_size, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw IoError("zlib failed to compress '" + path.string() + "'");
  }
  packed.resize(packed_size);

  std::vector<std::uint8_t> png = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  std::vector<std::uint8_t> ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(image.width));
  put_u32(ihdr, static_cast<std::uint32_t>(image.height));
  ihdr.insert(ihdr.end(), {8, 0, 0, 0, 0});  // 8-bit grayscale, deflate, no filter, no interlace
  put_chunk(png, "IHDR", ihdr);
  put_chunk(png, "IDAT", packed);
  put_chunk(png, "IEND", {});
  write_bytes(path, reinterpret_cast<const char*>(png.data()), png.size());
}

void write_image(const GrayImage& image, const std::filesystem::path& path) {
  if (path.extension() == ".png") {
    write_png(image, path);
  } else {
    write_pgm(image, path);
  }
}

}  // namespace dualsep
