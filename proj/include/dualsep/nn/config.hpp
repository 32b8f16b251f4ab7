#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace dualsep::nn {

/// S fuses the two encoder outputs by addition, L by concatenation followed
/// by a linear projection back to the hidden width.
enum class Variant { S, L };

struct ModelConfig {
  Variant variant = Variant::S;
  bool causal = true;
  std::size_t zones = 6;
  std::size_t bins = 257;
  std::vector<std::size_t> enc_channels{12, 12, 24, 48, 64};
  std::size_t tfcm_layers = 4;
  std::vector<std::size_t> tfcm_dilations{1, 2, 4, 8};
  std::size_t tfcm_kernel = 3;
  std::size_t kernel_f = 3;
  std::size_t kernel_t = 2;
  std::size_t stride_f = 2;
  std::size_t stride_t = 1;
  std::size_t hidden = 64;
  std::size_t triple_path_layers = 2;

  static constexpr std::size_t kInputPlanes = 2;  // real, imag
  static constexpr std::size_t kMaskPlanes = 2;

  void validate() const;
  /// Frequency size after each encoder block, starting with `bins`.
  std::vector<std::size_t> encoder_bins() const;
  std::size_t latent_bins() const { return encoder_bins().back(); }
  /// Canonical one-line JSON of every field; stored in weight files.
  std::string fingerprint() const;
  static ModelConfig from_fingerprint(const std::string& text);
  bool operator==(const ModelConfig&) const = default;
};

const char* to_string(Variant v) noexcept;
Variant variant_from_string(const std::string& s);

enum class InitKind { uniform, ones, zeros, prelu };

struct ParamSpec {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t fan_in = 1;
  InitKind init = InitKind::uniform;

  std::size_t size() const noexcept;
};

/// Every tensor the configuration needs, in canonical order.
std::vector<ParamSpec> parameter_specs(const ModelConfig& config);

std::size_t count_params(const ModelConfig& config);

}  // namespace dualsep::nn
