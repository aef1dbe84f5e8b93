#pragma once

// Independent reference implementations used as test oracles. They favour
// directness over speed and share no code with the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

namespace oracle {

using Rows = std::vector<std::vector<double>>;

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

// For each row, all other rows sorted by (similarity desc, index asc), cut to k.
inline std::vector<std::vector<std::pair<std::size_t, double>>> knn(const Rows& rows,
                                                                    std::size_t k) {
  const std::size_t n = rows.size();
  std::vector<std::vector<std::pair<std::size_t, double>>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::pair<std::size_t, double>> all;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) all.emplace_back(j, cosine(rows[i], rows[j]));
    }
    std::stable_sort(all.begin(), all.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    all.resize(std::min(k, all.size()));
    out[i] = all;
  }
  return out;
}

struct Pick {
  std::size_t index;
  double difficulty;
};

// Step-by-step greedy selection: linear argmax scan (first maximum wins),
// remove, penalize surviving neighbors by gamma * sim^2 * d_selected.
inline std::vector<Pick> greedy_select(
    std::vector<double> d,
    const std::vector<std::vector<std::pair<std::size_t, double>>>& neighbors, std::size_t m,
    double gamma, bool diversity) {
  std::vector<bool> taken(d.size(), false);
  std::vector<Pick> picks;
  for (std::size_t step = 0; step < m; ++step) {
    std::size_t best = d.size();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (taken[i]) continue;
      if (best == d.size() || d[i] > d[best]) best = i;
    }
    taken[best] = true;
    const double di = d[best];
    picks.push_back({best, di});
    if (!diversity) continue;
    for (const auto& [j, sim] : neighbors[best]) {
      if (!taken[j]) d[j] -= gamma * sim * sim * di;
    }
  }
  return picks;
}

inline std::vector<double> ranks(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) {
    // 1 + #smaller + (#equal - 1) / 2
    double smaller = 0, equal = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (x[j] < x[i]) ++smaller;
      if (x[j] == x[i]) ++equal;
    }
    r[i] = 1.0 + smaller + (equal - 1.0) / 2.0;
  }
  return r;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

inline double squared_distance(const double* a, const double* b, std::size_t d) {
  double s = 0;
  for (std::size_t j = 0; j < d; ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return s;
}

}  // namespace oracle

namespace oracle {

// Mean next-token NLL of a bigram model from its definition, in long double.
inline long double bigram_loss(std::size_t V, const std::vector<double>& logits,
                               const std::vector<std::uint32_t>& tokens) {
  long double total = 0.0L;
  for (std::size_t j = 0; j + 1 < tokens.size(); ++j) {
    const std::size_t u = tokens[j];
    long double z = 0.0L;
    for (std::size_t v = 0; v < V; ++v) z += std::exp(static_cast<long double>(logits[u * V + v]));
    total += std::log(z) - logits[u * V + tokens[j + 1]];
  }
  return total / static_cast<long double>(tokens.size() - 1);
}

inline std::vector<double> bigram_fd_grad(std::size_t V, std::vector<double> logits,
                                          const std::vector<std::uint32_t>& tokens, double h) {
  std::vector<double> g(V * V);
  for (std::size_t k = 0; k < V * V; ++k) {
    const double keep = logits[k];
    logits[k] = keep + h;
    const long double up = bigram_loss(V, logits, tokens);
    logits[k] = keep - h;
    const long double down = bigram_loss(V, logits, tokens);
    logits[k] = keep;
    g[k] = static_cast<double>((up - down) / (2.0L * h));
  }
  return g;
}

// Softmax-weighted loss of an affine score net over a batch, plus l2/2 |w|^2.
inline long double weighted_objective(const std::vector<double>& weights, double bias,
                                      const Rows& features, const std::vector<double>& losses,
                                      double l2) {
  long double z = 0.0L, num = 0.0L, penalty = 0.0L;
  for (std::size_t i = 0; i < features.size(); ++i) {
    long double w = bias;
    for (std::size_t j = 0; j < weights.size(); ++j) {
      w += static_cast<long double>(weights[j]) * features[i][j];
    }
    z += std::exp(w);
    num += std::exp(w) * losses[i];
  }
  for (double v : weights) penalty += static_cast<long double>(v) * v;
  return num / z + 0.5L * l2 * penalty;
}

inline double vector_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? std::sqrt(diff) : std::sqrt(diff) / scale;
}

}  // namespace oracle
