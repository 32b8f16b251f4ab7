#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dualsep/nn/model.hpp"
#include "dualsep/pipeline.hpp"
#include "dualsep/signal.hpp"

namespace dualsep {

inline constexpr double kSisnrClampDb = 60.0;

/// Scale-invariant SNR in dB after removing both means, clamped to +-60 dB.
/// Throws ContractError on unequal or empty lengths, DomainError on a silent
/// reference.
double sisnr(std::span<const float> estimate, std::span<const float> reference);

struct PermutationScore {
  double value = 0.0;                // mean SiSNR of the assignment
  std::vector<std::size_t> mapping;  // mapping[n] = estimate matched to reference n
  std::vector<double> per_reference;
};

/// Exhaustive search over assignments of N references to distinct estimates
/// (N <= M) maximizing mean SiSNR. Ties keep the lexicographically first.
PermutationScore sir_best_perm(const std::vector<std::span<const float>>& estimates,
                               const std::vector<std::span<const float>>& references);

/// Mean |X - Y|^2 over every STFT cell of two equally shaped signals.
double spectral_mse(const MultichannelSignal& a, const MultichannelSignal& b, const StftConfig& stft = {});

enum class EvalSystem { unprocessed, bf, bf_iva, dualsep };
const char* to_string(EvalSystem s) noexcept;
EvalSystem system_from_string(const std::string& s);

struct UtteranceScore {
  std::string id;
  std::vector<std::size_t> zones;
  std::vector<double> zone_sisnr_in, zone_sisnr_out;
  double sisnr_in = 0.0;   // mean over active zones
  double sisnr_out = 0.0;
  double delta = 0.0;
  double sir = 0.0;
  std::vector<std::size_t> permutation;  // zone output matched to each active source
};

struct EvalReport {
  std::string system;
  std::vector<UtteranceScore> utterances;
  double sisnr_in = 0.0;  // means of the per-utterance values
  double sisnr_out = 0.0;
  double delta = 0.0;
  double sir = 0.0;
  std::vector<std::string> missing;

  std::string to_json() const;
  std::string to_csv() const;
};

/// Zone reference: a P-channel reverberant image averaged over its microphones.
MultichannelSignal zone_reference(const MultichannelSignal& image);

/// Per-zone estimates of `system` for one raw mix. The unprocessed system
/// returns microphone 0 of each zone's array.
std::vector<MultichannelSignal> system_output(const MultichannelSignal& mix, EvalSystem system,
                                              const PipelineConfig& config, const nn::Model* model);

/// Scores one utterance: `refs[k]` is the P-channel image of zone zones[k].
UtteranceScore score_utterance(const std::string& id, const MultichannelSignal& mix,
                               const std::vector<MultichannelSignal>& refs, const std::vector<std::size_t>& zones,
                               EvalSystem system, const PipelineConfig& config, const nn::Model* model);

/// Evaluates every manifest row. Rows with unreadable files are listed in
/// `missing` and skipped. Utterances run on up to `threads` workers; results
/// keep manifest order.
EvalReport eval_manifest(const std::filesystem::path& manifest, EvalSystem system, const PipelineConfig& config,
                         const nn::Model* model, std::size_t threads = 1);

/// Aggregates are the means of the per-utterance values.
void finalize_report(EvalReport& report);

}  // namespace dualsep
