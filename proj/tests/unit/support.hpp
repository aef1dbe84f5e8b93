#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "scorefilter/feature_store.hpp"
#include "scorefilter/toy_model.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("scorefilter_test_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<double> normal_vector(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> out(n);
  for (auto& x : out) x = dist(rng);
  return out;
}

inline scorefilter::FeatureMatrix random_matrix(std::mt19937_64& rng, std::size_t n,
                                                std::size_t d, double scale = 1.0) {
  return scorefilter::FeatureMatrix(n, d, normal_vector(rng, n * d, scale));
}

inline scorefilter::TokenSample random_sample(std::mt19937_64& rng, std::size_t vocab,
                                              std::size_t min_len, std::size_t max_len,
                                              std::string id = "x") {
  std::uniform_int_distribution<std::size_t> len(min_len, max_len);
  std::uniform_int_distribution<std::uint32_t> tok(0, static_cast<std::uint32_t>(vocab - 1));
  scorefilter::TokenSample s{std::move(id), {}};
  s.tokens.resize(len(rng));
  for (auto& t : s.tokens) t = tok(rng);
  return s;
}

inline scorefilter::BigramModel random_model(std::mt19937_64& rng, std::size_t vocab,
                                             double scale = 1.0) {
  return scorefilter::BigramModel(vocab, normal_vector(rng, vocab * vocab, scale));
}

// Relative error that falls back to absolute error near zero.
inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// |a - b| / max(|a|, |b|) over whole vectors: the usual gradient-check metric,
// well defined when individual components are near zero.
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

}  // namespace testing
