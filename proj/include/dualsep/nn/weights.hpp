#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dualsep/nn/config.hpp"

namespace dualsep::nn {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<float> data;

  std::size_t size() const noexcept { return data.size(); }
  bool operator==(const Tensor&) const = default;
};

/// Named float32 parameters plus the fingerprint of the config they belong to.
class WeightStore {
 public:
  WeightStore() = default;
  explicit WeightStore(std::string fingerprint) : fingerprint_(std::move(fingerprint)) {}

  const std::string& fingerprint() const noexcept { return fingerprint_; }
  void set_fingerprint(std::string f) { fingerprint_ = std::move(f); }

  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  /// Throws LoadError(missing_tensor) when absent.
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  void set(const std::string& name, Tensor tensor);

  /// Tensor names in insertion order.
  const std::vector<std::string>& names() const noexcept { return order_; }
  std::size_t total_size() const noexcept;

  /// Checks that the store matches `config` exactly: same fingerprint, every
  /// demanded tensor present with its shape, nothing extra.
  void validate_against(const ModelConfig& config) const;

  bool operator==(const WeightStore& other) const;

 private:
  std::string fingerprint_;
  std::map<std::string, Tensor> tensors_;
  std::vector<std::string> order_;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases, unit layer-norm
/// gains, zero shifts and 0.25 PReLU slopes, from mt19937_64(seed).
WeightStore init_random(const ModelConfig& config, std::uint64_t seed);

/// Every tensor of `config` set to zero (layer-norm gains stay at one).
WeightStore init_zeros(const ModelConfig& config);

/// Container: "DSEPW1\0\0", u32 LE header length, JSON header
/// {fingerprint, tensors: name -> {shape, dtype, offset}}, float32 LE payloads.
void save_weights(const WeightStore& store, const std::filesystem::path& path);
WeightStore load_weights(const std::filesystem::path& path);

}  // namespace dualsep::nn
