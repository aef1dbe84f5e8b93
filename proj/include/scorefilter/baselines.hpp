#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "scorefilter/feature_store.hpp"
#include "scorefilter/selector.hpp"
#include "scorefilter/toy_model.hpp"

namespace scorefilter {

/// Per-sample pruning score. Higher means keep first.
struct ScoreVector {
  std::string metric;
  std::vector<double> scores;
};

/// Average next-token cross-entropy of each sample.
ScoreVector el2n_scores(const BigramModel& model, std::span<const TokenSample> samples);

/// Frobenius norm of each sample's loss gradient at `model`.
ScoreVector grand_scores(const BigramModel& model, std::span<const TokenSample> samples);

/// GraNd averaged over several parameter snapshots.
ScoreVector grand_scores(std::span<const BigramModel> models,
                         std::span<const TokenSample> samples);

struct KMeansResult {
  std::vector<double> centroids;  // K x d, row-major
  std::size_t clusters = 0;
  std::size_t dim = 0;
  std::vector<std::size_t> assignments;
  // Sum of squared distances to assigned centroids after every assignment step.
  std::vector<double> objective_history;
  std::size_t iterations = 0;

  std::span<const double> centroid(std::size_t c) const {
    return {centroids.data() + c * dim, dim};
  }
};

/// Lloyd's algorithm. Initial centroids are K distinct rows drawn uniformly
/// without replacement; a cluster that empties is re-seeded at the point
/// farthest from its own centroid. Final assignments are nearest-centroid
/// with respect to the returned centroids.
KMeansResult kmeans(const FeatureMatrix& features, std::size_t clusters, std::uint64_t seed,
                    std::size_t max_iters = 100);

/// Rows used to seed kmeans for (n, K, seed).
std::vector<std::size_t> kmeans_init_rows(std::size_t n, std::size_t clusters,
                                          std::uint64_t seed);

/// round(sqrt(n)), at least 1.
std::size_t default_cluster_count(std::size_t n);

/// Euclidean distance of every row to its k-means prototype.
ScoreVector prototypicality_scores(const FeatureMatrix& features, std::size_t clusters,
                                   std::uint64_t seed, std::size_t max_iters = 100);

/// m distinct indices drawn uniformly without replacement.
std::vector<std::size_t> random_select(std::size_t n, std::size_t m, std::uint64_t seed);

/// {"id", "score"} per line, aligned to `meta` by id.
ScoreVector ingest_external_scores(const std::filesystem::path& path,
                                   std::span<const InstructionMeta> meta);

void save_scores(const ScoreVector& scores, std::span<const InstructionMeta> meta,
                 const std::filesystem::path& path);

/// Top-m by score through the selector with diversity disabled.
SelectionResult rank_scores(const ScoreVector& scores, std::size_t m);

}  // namespace scorefilter
