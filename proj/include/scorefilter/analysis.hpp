#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "scorefilter/feature_store.hpp"
#include "scorefilter/selector.hpp"
#include "scorefilter/stage1.hpp"
#include "scorefilter/synth.hpp"

namespace scorefilter {

/// Pearson product-moment correlation. Throws UndefinedError when either
/// input is constant.
double pearson(std::span<const double> x, std::span<const double> y);

/// Ranks starting at 1; tied values share their average rank.
std::vector<double> average_ranks(std::span<const double> x);

/// Pearson correlation of average ranks.
double spearman(std::span<const double> x, std::span<const double> y);

struct Coverage {
  std::size_t clusters_covered = 0;
  double max_concentration = 0.0;  // largest per-cluster share of the selection
};

/// Counts distinct "cluster:" tags among the selected samples.
Coverage cluster_coverage(const SelectionResult& selection,
                          std::span<const InstructionMeta> meta);

/// End-to-end toy pipeline: stage 1 on the pool, difficulty, selection,
/// retraining a fresh model on the selected subset, held-out evaluation.
struct PipelineConfig {
  TrainConfig train;
  std::size_t m = 100;
  std::size_t k = 10;
  double gamma = 1.0;
  bool diversity = true;
  bool easiest = false;
  // Retraining runs to convergence so subsets are compared on what they teach.
  PlainTrainConfig retrain{.epochs = 100, .batch_size = 16, .lr = 2.0, .seed = 0};
};

struct PipelineOutcome {
  DifficultyTable difficulty;
  SelectionResult selection;
  double heldout_loss = 0.0;
};

PipelineOutcome run_pipeline(const PipelineConfig& config, const SynthData& pool,
                             std::span<const TokenSample> heldout);

/// Trains a fresh uniform model on `samples[indices]` and returns its mean
/// held-out loss.
double retrain_heldout_loss(std::span<const TokenSample> samples,
                            std::span<const std::size_t> indices, std::size_t vocab_size,
                            const PlainTrainConfig& config, std::span<const TokenSample> heldout);

enum class SweepVariable { kPruningSize, kBatchSize };

struct SweepRow {
  double value = 0.0;
  std::size_t selected = 0;
  double heldout_loss = 0.0;
  double hard_fraction = 0.0;  // share of selected samples from the hardest regime
};

struct Report {
  std::map<std::string, double> metrics;
  std::string variable;
  std::vector<SweepRow> rows;

  void write_csv(const std::filesystem::path& path) const;
  void write_json(const std::filesystem::path& path) const;
};

/// Runs the pipeline once per value. Every row uses the same seeds, so rows
/// differ only in the swept variable. Batch-size rows raise
/// grad_accum_steps to keep the base overall batch where it divides evenly.
Report sweep(const PipelineConfig& base, const SynthData& pool,
             std::span<const TokenSample> heldout, SweepVariable variable,
             std::span<const double> values);

}  // namespace scorefilter
