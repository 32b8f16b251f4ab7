#include "dualsep/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "dualsep/dataset.hpp"
#include "dualsep/error.hpp"
#include "dualsep/wav.hpp"

namespace dualsep {
namespace {

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double sisnr(std::span<const float> estimate, std::span<const float> reference) {
  if (estimate.size() != reference.size()) throw ContractError("SiSNR needs signals of equal length");
  if (estimate.empty()) throw ContractError("SiSNR needs non-empty signals");
  const auto n = static_cast<double>(estimate.size());
  double me = 0.0, mr = 0.0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    me += estimate[i];
    mr += reference[i];
  }
  me /= n;
  mr /= n;
  double dot = 0.0, rr = 0.0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    const double r = reference[i] - mr;
    dot += (estimate[i] - me) * r;
    rr += r * r;
  }
  if (!(rr > 0.0)) throw DomainError("SiSNR is undefined for a silent reference");
  const double alpha = dot / rr;
  double target = 0.0, error = 0.0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    const double s = alpha * (reference[i] - mr);
    const double e = (estimate[i] - me) - s;
    target += s * s;
    error += e * e;
  }
  // No projection onto the reference scores the floor even when the error is zero too.
  if (target <= 0.0) return -kSisnrClampDb;
  if (error <= 0.0) return kSisnrClampDb;
  return std::clamp(10.0 * std::log10(target / error), -kSisnrClampDb, kSisnrClampDb);
}

PermutationScore sir_best_perm(const std::vector<std::span<const float>>& estimates,
                               const std::vector<std::span<const float>>& references) {
  const std::size_t M = estimates.size();
  const std::size_t N = references.size();
  if (N == 0) throw ContractError("best-permutation scoring needs at least one reference");
  if (N > M) throw ContractError("more references than estimates");
  std::vector<std::vector<double>> score(N, std::vector<double>(M));
  for (std::size_t r = 0; r < N; ++r) {
    for (std::size_t e = 0; e < M; ++e) score[r][e] = sisnr(estimates[e], references[r]);
  }
  std::vector<std::size_t> order(M);
  std::iota(order.begin(), order.end(), 0);
  PermutationScore best;
  best.value = -std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t r = 0; r < N; ++r) total += score[r][order[r]];
    const double value = total / static_cast<double>(N);
    if (value > best.value) {
      best.value = value;
      best.mapping.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(N));
    }
  } while (std::next_permutation(order.begin(), order.end()));
  for (std::size_t r = 0; r < N; ++r) best.per_reference.push_back(score[r][best.mapping[r]]);
  return best;
}

double spectral_mse(const MultichannelSignal& a, const MultichannelSignal& b, const StftConfig& stft) {
  if (a.channels() != b.channels() || a.length() != b.length()) throw ContractError("spectral MSE needs equally shaped signals");
  const ComplexSpectrogram A = analyze(a, stft);
  const ComplexSpectrogram B = analyze(b, stft);
  if (A.data().empty()) throw ContractError("spectral MSE needs non-empty signals");
  double sum = 0.0;
  for (std::size_t i = 0; i < A.data().size(); ++i) sum += std::norm(std::complex<double>(A.data()[i] - B.data()[i]));
  return sum / static_cast<double>(A.data().size());
}

const char* to_string(EvalSystem s) noexcept {
  switch (s) {
    case EvalSystem::unprocessed: return "unprocessed";
    case EvalSystem::bf: return "bf";
    case EvalSystem::bf_iva: return "bf_iva";
    case EvalSystem::dualsep: return "dualsep";
  }
  return "?";
}

EvalSystem system_from_string(const std::string& s) {
  for (auto v : {EvalSystem::unprocessed, EvalSystem::bf, EvalSystem::bf_iva, EvalSystem::dualsep}) {
    if (s == to_string(v)) return v;
  }
  throw ValidationError("unknown system '" + s + "' (expected unprocessed, bf, bf_iva or dualsep)");
}

MultichannelSignal zone_reference(const MultichannelSignal& image) {
  if (image.channels() == 0) throw ContractError("zone reference needs at least one channel");
  MultichannelSignal out = MultichannelSignal::mono(image.length(), image.sample_rate());
  auto y = out.channel(0);
  const double gain = 1.0 / static_cast<double>(image.channels());
  for (std::size_t n = 0; n < image.length(); ++n) {
    double acc = 0.0;
    for (std::size_t c = 0; c < image.channels(); ++c) acc += image.at(c, n);
    y[n] = static_cast<float>(acc * gain);
  }
  return out;
}

std::vector<MultichannelSignal> system_output(const MultichannelSignal& mix, EvalSystem system,
                                              const PipelineConfig& config, const nn::Model* model) {
  if (system == EvalSystem::unprocessed) {
    const MultichannelSignal raw = mix.as_raw_mics(config.layout);
    std::vector<MultichannelSignal> out;
    for (std::size_t z = 0; z < config.layout.zones; ++z) out.push_back(raw.extract(config.layout.raw_index(z, 0)));
    return out;
  }
  PipelineConfig c = config;
  c.mode = system == EvalSystem::bf ? PipelineMode::bf_only
           : system == EvalSystem::bf_iva ? PipelineMode::dsp_only
                                          : (config.mode == PipelineMode::streaming ? PipelineMode::streaming
                                                                                    : PipelineMode::offline);
  return separate_offline(mix, c, model);
}

UtteranceScore score_utterance(const std::string& id, const MultichannelSignal& mix,
                               const std::vector<MultichannelSignal>& refs, const std::vector<std::size_t>& zones,
                               EvalSystem system, const PipelineConfig& config, const nn::Model* model) {
  if (refs.size() != zones.size()) throw ContractError("one reference per active zone is required");
  UtteranceScore score;
  score.id = id;
  score.zones = zones;
  const auto inputs = system_output(mix, EvalSystem::unprocessed, config, nullptr);
  const auto outputs = system == EvalSystem::unprocessed ? inputs : system_output(mix, system, config, model);

  std::vector<MultichannelSignal> zone_refs;
  for (const auto& r : refs) zone_refs.push_back(zone_reference(r));
  std::size_t length = mix.length();
  for (const auto& r : zone_refs) length = std::min(length, r.length());
  auto cut = [length](const MultichannelSignal& s) { return s.channel(0).first(length); };

  std::vector<std::span<const float>> est, ref;
  for (const auto& o : outputs) est.push_back(cut(o));
  for (std::size_t k = 0; k < zones.size(); ++k) {
    if (zones[k] >= outputs.size()) throw ContractError("active zone index out of range");
    ref.push_back(cut(zone_refs[k]));
    score.zone_sisnr_in.push_back(sisnr(cut(inputs[zones[k]]), ref.back()));
    score.zone_sisnr_out.push_back(sisnr(est[zones[k]], ref.back()));
  }
  score.sisnr_in = mean_of(score.zone_sisnr_in);
  score.sisnr_out = mean_of(score.zone_sisnr_out);
  score.delta = score.sisnr_out - score.sisnr_in;
  const PermutationScore perm = sir_best_perm(est, ref);
  score.sir = perm.value;
  score.permutation = perm.mapping;
  return score;
}

void finalize_report(EvalReport& report) {
  std::vector<double> in, out, delta, sir;
  for (const auto& u : report.utterances) {
    in.push_back(u.sisnr_in);
    out.push_back(u.sisnr_out);
    delta.push_back(u.delta);
    sir.push_back(u.sir);
  }
  report.sisnr_in = mean_of(in);
  report.sisnr_out = mean_of(out);
  report.delta = mean_of(delta);
  report.sir = mean_of(sir);
}

EvalReport eval_manifest(const std::filesystem::path& manifest, EvalSystem system, const PipelineConfig& config,
                         const nn::Model* model, std::size_t threads) {
  const auto records = load_manifest(manifest);
  EvalReport report;
  report.system = to_string(system);

  struct Slot {
    std::optional<UtteranceScore> score;
    std::string missing;
  };
  std::vector<Slot> slots(records.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < records.size(); i = next++) {
      const auto& rec = records[i];
      try {
        const MultichannelSignal mix = load_wav(rec.mix_path, config.sample_rate);
        std::vector<MultichannelSignal> refs;
        for (const auto& p : rec.ref_paths) refs.push_back(load_wav(p, config.sample_rate));
        slots[i].score = score_utterance(rec.id, mix, refs, rec.zones_active, system, config, model);
      } catch (const IoError& e) {
        slots[i].missing = rec.id + ": " + e.what();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(threads, records.size()));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& s : slots) {
    if (s.score) report.utterances.push_back(std::move(*s.score));
    if (!s.missing.empty()) report.missing.push_back(s.missing);
  }
  finalize_report(report);
  return report;
}

std::string EvalReport::to_json() const {
  using json = nlohmann::ordered_json;
  json j;
  j["system"] = system;
  j["count"] = utterances.size();
  j["aggregate"] = {{"sisnr_in", sisnr_in}, {"sisnr_out", sisnr_out}, {"delta", delta}, {"sir", sir}};
  json rows = json::array();
  for (const auto& u : utterances) {
    rows.push_back({{"id", u.id},
                    {"zones", u.zones},
                    {"sisnr_in", u.sisnr_in},
                    {"sisnr_out", u.sisnr_out},
                    {"delta", u.delta},
                    {"sir", u.sir},
                    {"permutation", u.permutation},
                    {"zone_sisnr_in", u.zone_sisnr_in},
                    {"zone_sisnr_out", u.zone_sisnr_out}});
  }
  j["utterances"] = rows;
  j["missing"] = missing;
  return j.dump(2) + "\n";
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "id,sisnr_in,sisnr_out,delta,sir\n";
  for (const auto& u : utterances) {
    out << u.id << ',' << u.sisnr_in << ',' << u.sisnr_out << ',' << u.delta << ',' << u.sir << '\n';
  }
  return out.str();
}

}  // namespace dualsep
