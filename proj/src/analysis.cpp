#include "scorefilter/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <unordered_map>

#include "scorefilter/error.hpp"
#include "scorefilter/jsonl.hpp"

namespace scorefilter {

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("correlation inputs differ in length");
  if (x.size() < 2) throw UndefinedError("correlation needs at least 2 points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw UndefinedError("correlation is undefined for a constant input");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t lo = 0; lo < order.size();) {
    std::size_t hi = lo + 1;
    while (hi < order.size() && x[order[hi]] == x[order[lo]]) ++hi;
    const double avg = 0.5 * static_cast<double>(lo + 1 + hi);  // mean of lo+1..hi
    for (std::size_t k = lo; k < hi; ++k) ranks[order[k]] = avg;
    lo = hi;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("correlation inputs differ in length");
  return pearson(average_ranks(x), average_ranks(y));
}

Coverage cluster_coverage(const SelectionResult& selection,
                          std::span<const InstructionMeta> meta) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& pick : selection.picks) {
    if (pick.index >= meta.size()) throw ValidationError("selection index outside metadata");
    auto cluster = tag_value(meta[pick.index], "cluster");
    if (!cluster) {
      throw ValidationError("sample \"" + meta[pick.index].id + "\" has no cluster tag");
    }
    ++counts[*cluster];
  }
  Coverage cov;
  cov.clusters_covered = counts.size();
  if (!selection.picks.empty()) {
    std::size_t largest = 0;
    for (const auto& [_, c] : counts) largest = std::max(largest, c);
    cov.max_concentration =
        static_cast<double>(largest) / static_cast<double>(selection.picks.size());
  }
  return cov;
}

double retrain_heldout_loss(std::span<const TokenSample> samples,
                            std::span<const std::size_t> indices, std::size_t vocab_size,
                            const PlainTrainConfig& config, std::span<const TokenSample> heldout) {
  std::vector<TokenSample> subset;
  subset.reserve(indices.size());
  for (auto i : indices) subset.push_back(samples[i]);
  auto trained = train_plain(BigramModel(vocab_size), subset, config);
  return trained.heldout_loss(heldout);
}

PipelineOutcome run_pipeline(const PipelineConfig& config, const SynthData& pool,
                             std::span<const TokenSample> heldout) {
  TrainConfig train = config.train;
  if (train.vocab_size == 0) train.vocab_size = pool.chains.front().vocab_size();
  const auto stage1 = train_stage1(pool.samples, pool.features, train);
  auto table = compute_difficulty(stage1.score_net, pool.features);
  const DifficultyTable ranked = config.easiest ? table.negated() : table;
  const bool penalize = config.diversity && config.gamma != 0.0;
  const NeighborIndex index = penalize ? build_knn(pool.features, config.k) : NeighborIndex{};
  auto selection = select(ranked, index, config.m, config.gamma, penalize);
  const auto picked = selection.indices();
  const double loss =
      retrain_heldout_loss(pool.samples, picked, train.vocab_size, config.retrain, heldout);
  return {std::move(table), std::move(selection), loss};
}

Report sweep(const PipelineConfig& base, const SynthData& pool,
             std::span<const TokenSample> heldout, SweepVariable variable,
             std::span<const double> values) {
  if (values.empty()) throw ValidationError("sweep needs at least one value");
  std::size_t hardest_rank = 0;
  for (const auto& t : pool.truth) hardest_rank = std::max(hardest_rank, t.difficulty_rank);

  Report report;
  report.variable = variable == SweepVariable::kPruningSize ? "m" : "batch_size";
  for (double value : values) {
    if (!(value >= 1.0) || value != std::floor(value)) {
      throw ValidationError("sweep values must be positive integers");
    }
    PipelineConfig cfg = base;
    if (variable == SweepVariable::kPruningSize) {
      cfg.m = static_cast<std::size_t>(value);
    } else {
      // The optimizer step keeps the base overall batch; only the softmax
      // window shrinks or grows.
      const std::size_t overall = base.train.batch_size * base.train.grad_accum_steps;
      cfg.train.batch_size = static_cast<std::size_t>(value);
      cfg.train.grad_accum_steps = std::max<std::size_t>(1, overall / cfg.train.batch_size);
    }
    PipelineOutcome outcome;
    try {
      outcome = run_pipeline(cfg, pool, heldout);
    } catch (const Error& e) {
      throw Error("sweep aborted at " + report.variable + "=" + std::to_string(value) +
                  " after " + std::to_string(report.rows.size()) + " completed rows: " +
                  e.what());
    }
    std::size_t hard = 0;
    for (const auto& p : outcome.selection.picks) {
      if (pool.truth[p.index].difficulty_rank == hardest_rank) ++hard;
    }
    report.rows.push_back({value, outcome.selection.picks.size(), outcome.heldout_loss,
                           static_cast<double>(hard) /
                               static_cast<double>(std::max<std::size_t>(1, cfg.m))});
  }
  return report;
}

void Report::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StorageError("cannot open for writing: " + path.string());
  out << std::setprecision(17);
  if (rows.empty()) {
    out << "metric,value\n";
    for (const auto& [k, v] : metrics) {
      out << k << ',';
      if (std::isfinite(v)) {
        out << v;
      } else {
        out << "undefined";
      }
      out << '\n';
    }
    if (!out) throw StorageError("write failed: " + path.string());
    return;
  }
  out << (variable.empty() ? "value" : variable) << ",selected,heldout_loss,hard_fraction\n";
  for (const auto& r : rows) {
    out << r.value << ',' << r.selected << ',' << r.heldout_loss << ',' << r.hard_fraction
        << '\n';
  }
  if (!out) throw StorageError("write failed: " + path.string());
}

void Report::write_json(const std::filesystem::path& path) const {
  Json obj;
  Json m = Json::object();
  for (const auto& [k, v] : metrics) {
    m[k] = std::isfinite(v) ? Json(v) : Json("undefined");
  }
  obj["metrics"] = m;
  obj["variable"] = variable;
  obj["rows"] = Json::array();
  for (const auto& r : rows) {
    obj["rows"].push_back({{"value", r.value},
                           {"selected", r.selected},
                           {"heldout_loss", r.heldout_loss},
                           {"hard_fraction", r.hard_fraction}});
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StorageError("cannot open for writing: " + path.string());
  out << obj.dump(2) << '\n';
}

}  // namespace scorefilter
