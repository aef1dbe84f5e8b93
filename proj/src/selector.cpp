#include "scorefilter/selector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include "scorefilter/error.hpp"
#include "scorefilter/jsonl.hpp"

namespace scorefilter {

namespace {

double squared_norm(std::span<const double> a) {
  double s = 0.0;
  for (double x : a) s += x * x;
  return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
  return s;
}

// Dividing by sqrt(|a|^2 |b|^2) keeps parallel vectors at exactly 1 in the
// common case; the split form covers products that leave double range.
double cosine_from_squared_norms(std::span<const double> a, double sq_a,
                                 std::span<const double> b, double sq_b) {
  double denom = sq_a * sq_b;
  denom = (std::isfinite(denom) && denom > 0.0) ? std::sqrt(denom)
                                                 : std::sqrt(sq_a) * std::sqrt(sq_b);
  return std::clamp(dot(a, b) / denom, -1.0, 1.0);
}

}  // namespace

DifficultyTable DifficultyTable::from_scores(std::vector<double> scores) {
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) {
      throw ValidationError("non-finite difficulty at index " + std::to_string(i));
    }
  }
  const std::size_t n = scores.size();
  return {std::move(scores), std::vector<bool>(n, true)};
}

DifficultyTable DifficultyTable::negated() const {
  DifficultyTable out = *this;
  for (double& d : out.difficulty) d = -d;
  return out;
}

std::vector<std::size_t> SelectionResult::indices() const {
  std::vector<std::size_t> out;
  out.reserve(picks.size());
  for (const auto& p : picks) out.push_back(p.index);
  return out;
}

DifficultyTable compute_difficulty(const ScoreNetParams& params, const FeatureMatrix& features) {
  if (features.cols() != params.dim()) {
    throw ValidationError("features have d=" + std::to_string(features.cols()) +
                          " but score net expects d=" + std::to_string(params.dim()));
  }
  auto w = score_rows(params, features);
  for (double& x : w) x = -x;
  return DifficultyTable::from_scores(std::move(w));
}

double cosine_sim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("cosine_sim: dimension mismatch");
  const double sa = squared_norm(a);
  const double sb = squared_norm(b);
  if (sa == 0.0 || sb == 0.0) {
    throw ValidationError("cosine similarity is undefined for a zero vector");
  }
  return cosine_from_squared_norms(a, sa, b, sb);
}

NeighborIndex build_knn(const FeatureMatrix& features, std::size_t k) {
  const std::size_t n = features.rows();
  if (n < 2) throw ValidationError("nearest-neighbor index needs at least 2 samples");
  if (k < 1) throw ValidationError("k must be >= 1");

  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    norms[i] = squared_norm(features.row(i));
    if (norms[i] == 0.0) {
      throw ValidationError("feature row " + std::to_string(i) +
                            " is all zeros; cosine similarity undefined");
    }
  }

  const std::size_t keep = std::min(k, n - 1);
  NeighborIndex index{k, std::vector<std::vector<Neighbor>>(n)};
  std::vector<Neighbor> candidates(n - 1);
  auto closer = [](const Neighbor& a, const Neighbor& b) {
    return a.similarity > b.similarity || (a.similarity == b.similarity && a.index < b.index);
  };
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      candidates[c++] = {j, cosine_from_squared_norms(features.row(i), norms[i],
                                                      features.row(j), norms[j])};
    }
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                      candidates.end(), closer);
    index.lists[i].assign(candidates.begin(),
                          candidates.begin() + static_cast<std::ptrdiff_t>(keep));
  }
  return index;
}

SelectionResult select(DifficultyTable table, const NeighborIndex& index, std::size_t m,
                       double gamma, bool diversity) {
  const std::size_t n = table.size();
  if (m > n) {
    throw ValidationError("cannot select m=" + std::to_string(m) + " from " +
                          std::to_string(n) + " samples");
  }
  if (!(gamma >= 0.0)) throw ValidationError("gamma must be >= 0");
  if (table.alive.size() != n) throw ValidationError("difficulty table flags are inconsistent");
  if (diversity && index.lists.size() != n) {
    throw ValidationError("neighbor index covers " + std::to_string(index.lists.size()) +
                          " samples, difficulty table " + std::to_string(n));
  }

  // Lazy max-heap keyed by (difficulty desc, index asc). A penalty bumps the
  // sample's version and pushes a fresh entry; stale entries are skipped.
  using Entry = std::tuple<double, std::size_t, std::size_t>;  // d, index, version
  auto lower_priority = [](const Entry& a, const Entry& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) < std::get<0>(b);
    return std::get<1>(a) > std::get<1>(b);
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(lower_priority)> heap(lower_priority);
  std::vector<std::size_t> version(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (table.alive[i]) heap.emplace(table.difficulty[i], i, 0);
  }

  SelectionResult result{{}, gamma, diversity};
  result.picks.reserve(m);
  while (result.picks.size() < m) {
    if (heap.empty()) throw ValidationError("not enough alive samples to select m");
    const auto [d, i, ver] = heap.top();
    heap.pop();
    if (!table.alive[i] || ver != version[i]) continue;

    table.alive[i] = false;
    result.picks.push_back({i, d, result.picks.size()});
    if (!diversity) continue;
    for (const auto& nb : index.lists[i]) {
      if (!table.alive[nb.index]) continue;
      table.difficulty[nb.index] -= gamma * nb.similarity * nb.similarity * d;
      heap.emplace(table.difficulty[nb.index], nb.index, ++version[nb.index]);
    }
  }
  return result;
}

std::vector<std::size_t> stable_top_m(std::span<const double> scores, std::size_t m) {
  if (m > scores.size()) throw ValidationError("m exceeds number of scores");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(m);
  return order;
}

void save_difficulty(const DifficultyTable& table, std::span<const InstructionMeta> meta,
                     const std::filesystem::path& path) {
  if (meta.size() != table.size()) {
    throw ValidationError("difficulty table and metadata differ in length");
  }
  std::vector<Json> lines;
  lines.reserve(meta.size());
  for (std::size_t i = 0; i < meta.size(); ++i) {
    lines.push_back({{"id", meta[i].id}, {"d", table.difficulty[i]}});
  }
  write_json_lines(path, lines);
}

std::vector<double> load_scores_by_id(const std::filesystem::path& path,
                                      std::span<const InstructionMeta> meta,
                                      const char* value_key) {
  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < meta.size(); ++i) position.emplace(meta[i].id, i);

  std::vector<double> values(meta.size(), 0.0);
  std::vector<bool> seen(meta.size(), false);
  for_each_json_line(path, [&](const Json& obj, std::size_t line) {
    const auto id = require_string(obj, "id", line);
    const double v = require_number(obj, value_key, line);
    auto it = position.find(id);
    if (it == position.end()) {
      throw ValidationError(path.string() + ":" + std::to_string(line) + ": unknown id \"" +
                            id + "\"");
    }
    if (seen[it->second]) {
      throw ValidationError(path.string() + ":" + std::to_string(line) + ": duplicate id \"" +
                            id + "\"");
    }
    if (!std::isfinite(v)) {
      throw ValidationError(path.string() + ":" + std::to_string(line) +
                            ": non-finite value for id \"" + id + "\"");
    }
    seen[it->second] = true;
    values[it->second] = v;
  });
  for (std::size_t i = 0; i < meta.size(); ++i) {
    if (!seen[i]) {
      throw ValidationError(path.string() + ": missing id \"" + meta[i].id + "\"");
    }
  }
  return values;
}

void save_selection(const SelectionResult& result, std::span<const InstructionMeta> meta,
                    const std::filesystem::path& path) {
  std::vector<Json> lines;
  lines.reserve(result.picks.size());
  for (const auto& p : result.picks) {
    if (p.index >= meta.size()) throw ValidationError("selection index outside metadata");
    lines.push_back(
        {{"id", meta[p.index].id}, {"rank", p.rank}, {"d_at_selection", p.difficulty}});
  }
  write_json_lines(path, lines);
}

std::vector<SelectionRecord> load_selection(const std::filesystem::path& path) {
  std::vector<SelectionRecord> out;
  std::unordered_set<std::string> seen;
  for_each_json_line(path, [&](const Json& obj, std::size_t line) {
    SelectionRecord r;
    r.id = require_string(obj, "id", line);
    const auto rank = require_int(obj, "rank", line);
    if (rank < 0) throw ParseError("line " + std::to_string(line) + ": negative rank");
    r.rank = static_cast<std::size_t>(rank);
    r.d_at_selection = require_number(obj, "d_at_selection", line);
    if (!seen.insert(r.id).second) {
      throw ValidationError("selection lists id \"" + r.id + "\" twice");
    }
    out.push_back(std::move(r));
  });
  return out;
}

}  // namespace scorefilter
