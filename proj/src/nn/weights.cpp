#include "dualsep/nn/weights.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>

#include "json.hpp"

#include "dualsep/error.hpp"

namespace dualsep::nn {
namespace {

using json = nlohmann::ordered_json;

constexpr char kMagic[8] = {'D', 'S', 'E', 'P', 'W', '1', '\0', '\0'};

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

WeightStore init_with(const ModelConfig& config, std::mt19937_64* rng) {
  WeightStore store(config.fingerprint());
  for (const auto& spec : parameter_specs(config)) {
    Tensor t{spec.shape, std::vector<float>(spec.size(), 0.0f)};
    switch (spec.init) {
      case InitKind::uniform:
        if (rng != nullptr) {
          const double a = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
          std::uniform_real_distribution<double> dist(-a, a);
          for (auto& v : t.data) v = static_cast<float>(dist(*rng));
        }
        break;
      case InitKind::ones:
        std::fill(t.data.begin(), t.data.end(), 1.0f);
        break;
      case InitKind::zeros:
        break;
      case InitKind::prelu:
        if (rng != nullptr) std::fill(t.data.begin(), t.data.end(), 0.25f);
        break;
    }
    store.set(spec.name, std::move(t));
  }
  return store;
}

}  // namespace

const Tensor& WeightStore::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw LoadError(LoadError::Kind::missing_tensor, "missing tensor '" + name + "'");
  return it->second;
}

Tensor& WeightStore::get(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw LoadError(LoadError::Kind::missing_tensor, "missing tensor '" + name + "'");
  return it->second;
}

void WeightStore::set(const std::string& name, Tensor tensor) {
  const std::size_t expected =
      std::accumulate(tensor.shape.begin(), tensor.shape.end(), std::size_t{1}, std::multiplies<>());
  if (expected != tensor.data.size()) throw ValidationError("tensor '" + name + "' data does not match its shape");
  if (tensors_.count(name) == 0) order_.push_back(name);
  tensors_[name] = std::move(tensor);
}

std::size_t WeightStore::total_size() const noexcept {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_) n += t.size();
  return n;
}

void WeightStore::validate_against(const ModelConfig& config) const {
  if (fingerprint_ != config.fingerprint()) {
    throw LoadError(LoadError::Kind::config_mismatch,
                    "weights were made for config " + fingerprint_ + ", requested " + config.fingerprint());
  }
  const auto specs = parameter_specs(config);
  for (const auto& spec : specs) {
    auto it = tensors_.find(spec.name);
    if (it == tensors_.end()) throw LoadError(LoadError::Kind::missing_tensor, "missing tensor '" + spec.name + "'");
    if (it->second.shape != spec.shape) {
      throw LoadError(LoadError::Kind::shape_mismatch, "tensor '" + spec.name + "' has shape " + shape_str(it->second.shape) +
                                                           ", expected " + shape_str(spec.shape));
    }
  }
  if (tensors_.size() != specs.size()) {
    for (const auto& name : order_) {
      bool known = false;
      for (const auto& spec : specs) known = known || spec.name == name;
      if (!known) throw LoadError(LoadError::Kind::unexpected_tensor, "unexpected tensor '" + name + "'");
    }
  }
}

bool WeightStore::operator==(const WeightStore& other) const {
  return fingerprint_ == other.fingerprint_ && order_ == other.order_ && tensors_ == other.tensors_;
}

WeightStore init_random(const ModelConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return init_with(config, &rng);
}

WeightStore init_zeros(const ModelConfig& config) { return init_with(config, nullptr); }

void save_weights(const WeightStore& store, const std::filesystem::path& path) {
  json header;
  header["fingerprint"] = store.fingerprint();
  json table = json::object();
  std::size_t offset = 0;
  for (const auto& name : store.names()) {
    const Tensor& t = store.get(name);
    table[name] = {{"shape", t.shape}, {"dtype", "f32"}, {"offset", offset}};
    offset += t.size() * sizeof(float);
  }
  header["tensors"] = table;
  const std::string text = header.dump();
  if (text.size() > 0xFFFFFFFFu) throw ValidationError("weight header too large");

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(kMagic, sizeof kMagic);
  const auto len = static_cast<std::uint32_t>(text.size());
  unsigned char len_bytes[4];
  for (int i = 0; i < 4; ++i) len_bytes[i] = static_cast<unsigned char>((len >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(len_bytes), 4);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  static_assert(std::endian::native == std::endian::little, "weight files are little-endian");
  for (const auto& name : store.names()) {
    const Tensor& t = store.get(name);
    out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

WeightStore load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open weight file '" + path.string() + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = " in '" + path.string() + "'";

  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    if (bytes.size() < sizeof kMagic && std::memcmp(bytes.data(), kMagic, bytes.size()) == 0) {
      throw LoadError(LoadError::Kind::truncated, "file ends inside the magic" + where);
    }
    throw LoadError(LoadError::Kind::bad_magic, "not a weight container" + where);
  }
  if (bytes.size() < 12) throw LoadError(LoadError::Kind::truncated, "file ends inside the header length" + where);
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
  if (bytes.size() < 12 + static_cast<std::size_t>(len)) {
    throw LoadError(LoadError::Kind::truncated, "file ends inside the JSON header" + where);
  }
  const std::size_t payload = 12 + len;

  json header;
  try {
    header = json::parse(bytes.begin() + 12, bytes.begin() + static_cast<std::ptrdiff_t>(payload));
  } catch (const json::exception& e) {
    throw LoadError(LoadError::Kind::bad_header, std::string("malformed JSON header: ") + e.what() + where);
  }

  WeightStore store;
  try {
    store.set_fingerprint(header.at("fingerprint").get<std::string>());
    for (const auto& [name, entry] : header.at("tensors").items()) {
      if (entry.at("dtype").get<std::string>() != "f32") {
        throw LoadError(LoadError::Kind::bad_header, "tensor '" + name + "' has unsupported dtype" + where);
      }
      Tensor t;
      t.shape = entry.at("shape").get<std::vector<std::size_t>>();
      const std::size_t count = std::accumulate(t.shape.begin(), t.shape.end(), std::size_t{1}, std::multiplies<>());
      const std::size_t offset = entry.at("offset").get<std::size_t>();
      if (payload + offset + count * sizeof(float) > bytes.size()) {
        throw LoadError(LoadError::Kind::truncated, "payload of tensor '" + name + "' is cut short" + where);
      }
      t.data.resize(count);
      std::memcpy(t.data.data(), bytes.data() + payload + offset, count * sizeof(float));
      store.set(name, std::move(t));
    }
  } catch (const json::exception& e) {
    throw LoadError(LoadError::Kind::bad_header, std::string("weight header is missing fields: ") + e.what() + where);
  }
  return store;
}

}  // namespace dualsep::nn
