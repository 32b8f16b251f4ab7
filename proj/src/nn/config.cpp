#include "dualsep/nn/config.hpp"

#include <functional>
#include <numeric>

#include "json.hpp"

#include "dualsep/error.hpp"

namespace dualsep::nn {
namespace {

using json = nlohmann::ordered_json;

void add(std::vector<ParamSpec>& out, std::string name, std::vector<std::size_t> shape, std::size_t fan_in,
         InitKind init = InitKind::uniform) {
  out.push_back({std::move(name), std::move(shape), fan_in, init});
}

// Conv + layer norm + PReLU unit.
void add_conv_unit(std::vector<ParamSpec>& out, const std::string& prefix, std::vector<std::size_t> weight_shape,
                   std::size_t fan_in) {
  const std::size_t c = weight_shape.front();
  add(out, prefix + ".weight", std::move(weight_shape), fan_in);
  add(out, prefix + ".bias", {c}, fan_in);
  add(out, prefix + ".ln.gamma", {c}, 1, InitKind::ones);
  add(out, prefix + ".ln.beta", {c}, 1, InitKind::zeros);
  add(out, prefix + ".prelu", {c}, 1, InitKind::prelu);
}

void add_tfcm(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t c, std::size_t k) {
  add_conv_unit(out, prefix + ".pw", {c, c, 1, 1}, c);
  add_conv_unit(out, prefix + ".fconv", {c, 1, k, 1}, k);
  add_conv_unit(out, prefix + ".tconv", {c, c, 1, k}, c * k);
}

void add_gru(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t in, std::size_t hidden) {
  add(out, prefix + ".w_ih", {3 * hidden, in}, hidden);
  add(out, prefix + ".w_hh", {3 * hidden, hidden}, hidden);
  add(out, prefix + ".b_ih", {3 * hidden}, hidden);
  add(out, prefix + ".b_hh", {3 * hidden}, hidden);
}

void add_linear(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t in, std::size_t outf) {
  add(out, prefix + ".weight", {outf, in}, in);
  add(out, prefix + ".bias", {outf}, in);
}

}  // namespace

const char* to_string(Variant v) noexcept { return v == Variant::S ? "S" : "L"; }

Variant variant_from_string(const std::string& s) {
  if (s == "S" || s == "s") return Variant::S;
  if (s == "L" || s == "l") return Variant::L;
  throw ValidationError("unknown model variant '" + s + "' (expected S or L)");
}

std::size_t ParamSpec::size() const noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void ModelConfig::validate() const {
  if (zones < 1) throw ValidationError("model needs at least one zone");
  if (bins < 2) throw ValidationError("model needs at least two frequency bins");
  if (enc_channels.empty()) throw ValidationError("enc_channels must not be empty");
  for (std::size_t c : enc_channels) {
    if (c < 1) throw ValidationError("encoder channel counts must be positive");
  }
  if (tfcm_dilations.size() != tfcm_layers) throw ValidationError("tfcm_dilations must list one dilation per TFCM layer");
  for (std::size_t d : tfcm_dilations) {
    if (d < 1) throw ValidationError("TFCM dilations must be positive");
  }
  if (tfcm_kernel < 1 || tfcm_kernel % 2 == 0) throw ValidationError("tfcm_kernel must be odd");
  if (kernel_f != 3 || stride_f != 2) throw ValidationError("the gated blocks support kernel_f = 3 with stride_f = 2");
  if (kernel_t < 1) throw ValidationError("kernel_t must be positive");
  if (stride_t != 1) throw ValidationError("stride_t must be 1 so every frame yields an output frame");
  if (hidden != enc_channels.back()) throw ValidationError("hidden must equal the last encoder channel count");
  if (triple_path_layers < 1) throw ValidationError("triple_path_layers must be at least 1");
}

std::vector<std::size_t> ModelConfig::encoder_bins() const {
  std::vector<std::size_t> out{bins};
  for (std::size_t b = 0; b < enc_channels.size(); ++b) out.push_back((out.back() + 1) / 2);
  return out;
}

std::string ModelConfig::fingerprint() const {
  json j;
  j["variant"] = to_string(variant);
  j["causal"] = causal;
  j["zones"] = zones;
  j["bins"] = bins;
  j["enc_channels"] = enc_channels;
  j["tfcm_layers"] = tfcm_layers;
  j["tfcm_dilations"] = tfcm_dilations;
  j["tfcm_kernel"] = tfcm_kernel;
  j["kernel"] = {kernel_f, kernel_t};
  j["stride"] = {stride_f, stride_t};
  j["hidden"] = hidden;
  j["triple_path_layers"] = triple_path_layers;
  return j.dump();
}

ModelConfig ModelConfig::from_fingerprint(const std::string& text) {
  try {
    const json j = json::parse(text);
    ModelConfig c;
    c.variant = variant_from_string(j.at("variant").get<std::string>());
    c.causal = j.at("causal").get<bool>();
    c.zones = j.at("zones").get<std::size_t>();
    c.bins = j.at("bins").get<std::size_t>();
    c.enc_channels = j.at("enc_channels").get<std::vector<std::size_t>>();
    c.tfcm_layers = j.at("tfcm_layers").get<std::size_t>();
    c.tfcm_dilations = j.at("tfcm_dilations").get<std::vector<std::size_t>>();
    c.tfcm_kernel = j.at("tfcm_kernel").get<std::size_t>();
    c.kernel_f = j.at("kernel").at(0).get<std::size_t>();
    c.kernel_t = j.at("kernel").at(1).get<std::size_t>();
    c.stride_f = j.at("stride").at(0).get<std::size_t>();
    c.stride_t = j.at("stride").at(1).get<std::size_t>();
    c.hidden = j.at("hidden").get<std::size_t>();
    c.triple_path_layers = j.at("triple_path_layers").get<std::size_t>();
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed model config fingerprint: ") + e.what());
  }
}

std::vector<ParamSpec> parameter_specs(const ModelConfig& config) {
  config.validate();
  std::vector<ParamSpec> out;
  const auto& ch = config.enc_channels;
  const std::size_t blocks = ch.size();
  const std::size_t kf = config.kernel_f, kt = config.kernel_t, k = config.tfcm_kernel;

  for (const char* enc : {"spectral_enc", "spatial_enc"}) {
    for (std::size_t b = 0; b < blocks; ++b) {
      const std::size_t cin = b == 0 ? ModelConfig::kInputPlanes : ch[b - 1];
      const std::size_t cout = ch[b];
      const std::string p = std::string(enc) + ".b" + std::to_string(b);
      add(out, p + ".gconv.weight", {2 * cout, cin, kf, kt}, cin * kf * kt);
      add(out, p + ".gconv.bias", {2 * cout}, cin * kf * kt);
      for (std::size_t l = 0; l < config.tfcm_layers; ++l) add_tfcm(out, p + ".tfcm" + std::to_string(l), cout, k);
    }
  }

  const std::size_t H = config.hidden;
  if (config.variant == Variant::L) add_linear(out, "fusion", 2 * H, H);

  for (std::size_t l = 0; l < config.triple_path_layers; ++l) {
    const std::string p = "tp" + std::to_string(l);
    add_gru(out, p + ".frnn.fwd", H, H);
    add_gru(out, p + ".frnn.bwd", H, H);
    add_linear(out, p + ".frnn.linear", 2 * H, H);
    add_gru(out, p + ".srnn.fwd", H, H);
    add_linear(out, p + ".srnn.linear", H, H);
    add_gru(out, p + ".trnn.fwd", H, H);
    if (!config.causal) add_gru(out, p + ".trnn.bwd", H, H);
    add_linear(out, p + ".trnn.linear", config.causal ? H : 2 * H, H);
  }

  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t cin = ch[blocks - 1 - b];
    const std::size_t cout = b + 1 == blocks ? ModelConfig::kMaskPlanes : ch[blocks - 2 - b];
    const std::string p = "decoder.b" + std::to_string(b);
    for (std::size_t l = 0; l < config.tfcm_layers; ++l) add_tfcm(out, p + ".tfcm" + std::to_string(l), cin, k);
    add(out, p + ".gdeconv.weight", {cin, 2 * cout, kf, kt}, cin * kf * kt);
    add(out, p + ".gdeconv.bias", {2 * cout}, cin * kf * kt);
  }
  return out;
}

std::size_t count_params(const ModelConfig& config) {
  std::size_t n = 0;
  for (const auto& p : parameter_specs(config)) n += p.size();
  return n;
}

}  // namespace dualsep::nn
