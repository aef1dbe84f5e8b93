#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "scorefilter/feature_store.hpp"
#include "scorefilter/toy_model.hpp"

namespace scorefilter {

struct RegimeSpec {
  double fraction = 0.5;
  // Temperature applied to the shared standard-normal base logits. Low values
  // give near-deterministic (easy) chains, high values near-uniform (hard).
  double temperature = 1.0;
  // Per-regime sequence length range; 0 falls back to the dataset range.
  std::size_t min_len = 0;
  std::size_t max_len = 0;
};

struct SynthSpec {
  std::size_t n = 2000;
  std::size_t vocab_size = 16;
  std::size_t min_len = 16;
  std::size_t max_len = 32;
  std::vector<RegimeSpec> regimes = {{0.5, 0.1}, {0.5, 10.0}};
  std::size_t clusters_per_regime = 1;
  std::size_t feature_dim = 8;
  double feature_noise = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthTruth {
  std::size_t regime = 0;
  std::size_t cluster = 0;
  // Position of the regime when regimes are ordered by expected per-token
  // loss under their own chain; higher is harder.
  std::size_t difficulty_rank = 0;
};

struct SynthData {
  std::vector<TokenSample> samples;
  FeatureMatrix features;
  std::vector<InstructionMeta> meta;
  std::vector<SynthTruth> truth;
  // Generating chain of each regime, as a bigram model.
  std::vector<BigramModel> chains;
  // Expected per-token loss of each regime's chain at stationarity.
  std::vector<double> entropy_rates;
};

/// Deterministic given spec.seed.
SynthData generate(const SynthSpec& spec);

/// Fresh samples from the same chains and cluster centers as generate(spec),
/// drawn from an independent stream. Ids are prefixed with "h".
SynthData generate_heldout(const SynthSpec& spec, std::size_t count, std::uint64_t stream);

/// Entropy rate sum_u pi_u H(P[u]) of the chain with transition logits `chain`.
double chain_entropy_rate(const BigramModel& chain);

/// Writes features.sffm, meta.jsonl, tokens.jsonl and truth.jsonl into `dir`.
void write_synth(const SynthData& data, const std::filesystem::path& dir);

std::vector<SynthTruth> load_truth(const std::filesystem::path& path,
                                   std::span<const InstructionMeta> meta);

/// Scalar keys mirror SynthSpec fields; regimes come from [[regimes]] tables.
SynthSpec load_synth_spec(const std::filesystem::path& path, SynthSpec base = {});

}  // namespace scorefilter
