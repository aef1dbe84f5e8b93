#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "scorefilter/feature_store.hpp"
#include "scorefilter/score_net.hpp"

namespace scorefilter {

/// Per-sample difficulty (higher = harder) plus the not-yet-selected flags.
struct DifficultyTable {
  std::vector<double> difficulty;
  std::vector<bool> alive;

  static DifficultyTable from_scores(std::vector<double> scores);
  std::size_t size() const { return difficulty.size(); }
  /// Same table with every difficulty negated; selecting from it picks the easiest.
  DifficultyTable negated() const;
};

struct Neighbor {
  std::size_t index = 0;
  double similarity = 0.0;

  bool operator==(const Neighbor&) const = default;
};

/// Exact k-nearest-neighbor lists by cosine similarity, self excluded,
/// sorted by descending similarity with ties broken by lower index.
struct NeighborIndex {
  std::size_t k = 0;
  std::vector<std::vector<Neighbor>> lists;
};

struct SelectedSample {
  std::size_t index = 0;
  double difficulty = 0.0;  // at selection time
  std::size_t rank = 0;

  bool operator==(const SelectedSample&) const = default;
};

struct SelectionResult {
  std::vector<SelectedSample> picks;
  double gamma = 1.0;
  bool diversity = true;

  std::vector<std::size_t> indices() const;
};

/// d_i = -s(S_i) for every feature row; all samples alive.
DifficultyTable compute_difficulty(const ScoreNetParams& params, const FeatureMatrix& features);

/// a.b / (|a||b|), clamped to [-1, 1]. Throws on a zero vector.
double cosine_sim(std::span<const double> a, std::span<const double> b);

NeighborIndex build_knn(const FeatureMatrix& features, std::size_t k);

/// Greedy hardest-first selection of m samples. After each pick i, every
/// still-alive neighbor j of i has d_j -= gamma * sim(i,j)^2 * d_i, where d_i
/// is the picked sample's difficulty at selection time. Ties pick the lowest
/// index. With diversity off (or gamma = 0) this is the stable top-m.
SelectionResult select(DifficultyTable table, const NeighborIndex& index, std::size_t m,
                       double gamma, bool diversity);

/// Indices of the m largest scores, descending, ties by lower index.
std::vector<std::size_t> stable_top_m(std::span<const double> scores, std::size_t m);

// --- file formats -----------------------------------------------------------

/// {"id", "d"} per line, in metadata order.
void save_difficulty(const DifficultyTable& table, std::span<const InstructionMeta> meta,
                     const std::filesystem::path& path);

/// Reads {"id": ..., <value_key>: ...} lines and aligns them to `meta` by id.
/// Every id must appear exactly once.
std::vector<double> load_scores_by_id(const std::filesystem::path& path,
                                      std::span<const InstructionMeta> meta,
                                      const char* value_key);

struct SelectionRecord {
  std::string id;
  std::size_t rank = 0;
  double d_at_selection = 0.0;
};

/// {"id", "rank", "d_at_selection"} per line, in selection order.
void save_selection(const SelectionResult& result, std::span<const InstructionMeta> meta,
                    const std::filesystem::path& path);
std::vector<SelectionRecord> load_selection(const std::filesystem::path& path);

}  // namespace scorefilter
