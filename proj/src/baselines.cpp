#include "scorefilter/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "scorefilter/error.hpp"
#include "scorefilter/jsonl.hpp"
#include "scorefilter/random.hpp"

namespace scorefilter {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double diff = a[j] - b[j];
    s += diff * diff;
  }
  return s;
}

}  // namespace

ScoreVector el2n_scores(const BigramModel& model, std::span<const TokenSample> samples) {
  const TransitionTable table(model);
  ScoreVector out{"el2n", {}};
  out.scores.reserve(samples.size());
  for (const auto& s : samples) out.scores.push_back(sample_loss(table, s));
  return out;
}

ScoreVector grand_scores(const BigramModel& model, std::span<const TokenSample> samples) {
  return grand_scores(std::span<const BigramModel>(&model, 1), samples);
}

ScoreVector grand_scores(std::span<const BigramModel> models,
                         std::span<const TokenSample> samples) {
  if (models.empty()) throw ValidationError("GraNd needs at least one model snapshot");
  ScoreVector out{"grand", std::vector<double>(samples.size(), 0.0)};
  for (const auto& model : models) {
    const TransitionTable table(model);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      ModelGradient g(model.vocab_size());
      accumulate_sample_grad(table, samples[i], 1.0, g);
      out.scores[i] += g.norm();
    }
  }
  if (models.size() > 1) {
    for (double& s : out.scores) s /= static_cast<double>(models.size());
  }
  return out;
}

std::size_t default_cluster_count(std::size_t n) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(std::sqrt(double(n)))));
}

std::vector<std::size_t> kmeans_init_rows(std::size_t n, std::size_t clusters,
                                          std::uint64_t seed) {
  return random_select(n, clusters, seed);
}

KMeansResult kmeans(const FeatureMatrix& features, std::size_t clusters, std::uint64_t seed,
                    std::size_t max_iters) {
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  if (clusters < 1) throw ValidationError("k-means needs K >= 1");
  if (clusters > n) {
    throw ValidationError("k-means K=" + std::to_string(clusters) + " exceeds n=" +
                          std::to_string(n));
  }

  KMeansResult res;
  res.clusters = clusters;
  res.dim = d;
  res.centroids.resize(clusters * d);
  const auto init = kmeans_init_rows(n, clusters, seed);
  for (std::size_t c = 0; c < clusters; ++c) {
    auto r = features.row(init[c]);
    std::copy(r.begin(), r.end(), res.centroids.begin() + static_cast<std::ptrdiff_t>(c * d));
  }

  res.assignments.assign(n, 0);
  std::vector<double> dist(n, 0.0);
  auto assign = [&]() {
    bool changed = false;
    double objective = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < clusters; ++c) {
        const double dd = squared_distance(features.row(i), res.centroid(c));
        if (dd < best_d) {
          best_d = dd;
          best = c;
        }
      }
      changed = changed || best != res.assignments[i];
      res.assignments[i] = best;
      dist[i] = best_d;
      objective += best_d;
    }
    res.objective_history.push_back(objective);
    return changed;
  };

  assign();
  std::vector<double> sums(clusters * d);
  std::vector<std::size_t> counts(clusters);
  for (res.iterations = 0; res.iterations < max_iters;) {
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = res.assignments[i];
      ++counts[c];
      auto r = features.row(i);
      for (std::size_t j = 0; j < d; ++j) sums[c * d + j] += r[j];
    }
    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < clusters; ++c) {
      if (counts[c] > 0) {
        for (std::size_t j = 0; j < d; ++j) {
          res.centroids[c * d + j] = sums[c * d + j] / static_cast<double>(counts[c]);
        }
        continue;
      }
      // Empty cluster: move it onto the point farthest from its own centroid.
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (taken[i]) continue;
        if (far == n || dist[i] > dist[far]) far = i;
      }
      if (far == n) continue;
      taken[far] = true;
      auto r = features.row(far);
      std::copy(r.begin(), r.end(), res.centroids.begin() + static_cast<std::ptrdiff_t>(c * d));
    }
    ++res.iterations;
    if (!assign()) break;
  }
  return res;
}

ScoreVector prototypicality_scores(const FeatureMatrix& features, std::size_t clusters,
                                   std::uint64_t seed, std::size_t max_iters) {
  const auto km = kmeans(features, clusters, seed, max_iters);
  ScoreVector out{"proto", std::vector<double>(features.rows())};
  for (std::size_t i = 0; i < features.rows(); ++i) {
    out.scores[i] =
        std::sqrt(squared_distance(features.row(i), km.centroid(km.assignments[i])));
  }
  return out;
}

std::vector<std::size_t> random_select(std::size_t n, std::size_t m, std::uint64_t seed) {
  if (m > n) {
    throw ValidationError("cannot draw m=" + std::to_string(m) + " of n=" + std::to_string(n));
  }
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  Rng rng(seed);
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < m; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(m);
  return pool;
}

ScoreVector ingest_external_scores(const std::filesystem::path& path,
                                   std::span<const InstructionMeta> meta) {
  return {"external", load_scores_by_id(path, meta, "score")};
}

void save_scores(const ScoreVector& scores, std::span<const InstructionMeta> meta,
                 const std::filesystem::path& path) {
  if (scores.scores.size() != meta.size()) {
    throw ValidationError("score vector and metadata differ in length");
  }
  std::vector<Json> lines;
  lines.reserve(meta.size());
  for (std::size_t i = 0; i < meta.size(); ++i) {
    lines.push_back({{"id", meta[i].id}, {"score", scores.scores[i]}});
  }
  write_json_lines(path, lines);
}

SelectionResult rank_scores(const ScoreVector& scores, std::size_t m) {
  return select(DifficultyTable::from_scores(scores.scores), NeighborIndex{}, m, 0.0, false);
}

}  // namespace scorefilter
