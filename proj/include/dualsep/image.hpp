#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "dualsep/signal.hpp"
#include "dualsep/stft.hpp"

namespace dualsep {

/// 8-bit grayscale raster, rows top to bottom.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
};

/// log10(|X| + 1e-8) of one channel, min-max scaled to 0..255. Height is the
/// bin count with the lowest frequency on the bottom row; width is the frame
/// count.
GrayImage spectrogram_image(const MultichannelSignal& signal, std::size_t channel, const StftConfig& stft = {});

/// Binary PGM (P5).
void write_pgm(const GrayImage& image, const std::filesystem::path& path);
/// Grayscale 8-bit PNG, zlib-compressed at a fixed level.
void write_png(const GrayImage& image, const std::filesystem::path& path);
/// Picks PNG for a ".png" extension and PGM otherwise.
void write_image(const GrayImage& image, const std::filesystem::path& path);

}  // namespace dualsep
