#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "scorefilter/feature_store.hpp"
#include "scorefilter/score_net.hpp"
#include "scorefilter/toy_model.hpp"

namespace scorefilter {

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t epochs = 20;
  double lr_model = 1.0;
  double lr_scorenet = 2.0;
  std::uint64_t seed = 0;
  double l2_scorenet = 0.0;
  // Local batches aggregated into one optimizer step. The softmax window is
  // always the local batch.
  std::size_t grad_accum_steps = 1;
  // 0 infers V as (largest token id + 1).
  std::size_t vocab_size = 0;

  void validate() const;
};

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double weighted_loss = 0.0;
  double mean_loss = 0.0;
  double min_w = 0.0;
  double max_w = 0.0;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  // Full forward pass of the trained score net over every feature row.
  std::vector<double> final_raw_weights;

  void write_csv(const std::filesystem::path& path) const;
};

struct Stage1Result {
  BigramModel model;
  ScoreNetParams score_net;
  TrainLog log;
};

/// Co-trains the bigram model and the score net under the softmax-weighted
/// loss. Row i of `features` pairs with `samples[i]`.
Stage1Result train_stage1(std::span<const TokenSample> samples, const FeatureMatrix& features,
                          const TrainConfig& config);

/// Reads the keys batch_size, epochs, lr_model, lr_scorenet, seed,
/// l2_scorenet, grad_accum_steps, vocab_size from a TOML file. Missing keys
/// keep the values already in `base`.
TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base = {});

std::size_t infer_vocab_size(std::span<const TokenSample> samples);

}  // namespace scorefilter
