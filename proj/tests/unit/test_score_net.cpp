#include <cmath>
#include <numeric>

#include "doctest.h"
#include "scorefilter/error.hpp"
#include "scorefilter/score_net.hpp"
#include "support.hpp"

using namespace scorefilter;

namespace {

// Weighted loss from its definition with a naive softmax, evaluated in long
// double so finite differences are not dominated by rounding.
long double reference_weighted_loss(const std::vector<long double>& w,
                                    const std::vector<double>& losses) {
  long double z = 0.0L, num = 0.0L;
  for (std::size_t i = 0; i < w.size(); ++i) {
    z += std::exp(w[i]);
    num += std::exp(w[i]) * losses[i];
  }
  return num / z;
}

double reference_weighted_loss(const std::vector<double>& w, const std::vector<double>& losses) {
  return static_cast<double>(
      reference_weighted_loss(std::vector<long double>(w.begin(), w.end()), losses));
}

long double reference_objective(const ScoreNetParams& p, const FeatureMatrix& x,
                                const std::vector<double>& losses, double l2) {
  std::vector<long double> w(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    w[i] = p.bias;
    for (std::size_t j = 0; j < x.cols(); ++j) {
      w[i] += static_cast<long double>(p.weights[j]) * x.at(i, j);
    }
  }
  long double penalty = 0.0L;
  for (double v : p.weights) penalty += static_cast<long double>(v) * v;
  return reference_weighted_loss(w, losses) + 0.5L * l2 * penalty;
}

}  // namespace

TEST_CASE("score_forward examples") {
  std::mt19937_64 rng(1);
  const auto s = testing::normal_vector(rng, 5);
  CHECK(score_forward(ScoreNetParams::zeros(5), s) == 0.0);
  const std::vector<double> a = {3.5, -2.0};
  CHECK(score_forward({{1.0, 0.0}, 0.0}, a) == 3.5);
  const std::vector<double> b = {2.0, 4.0};
  CHECK(score_forward({{0.5, 0.5}, 1.0}, b) == doctest::Approx(4.0));
  CHECK_THROWS_AS(score_forward(ScoreNetParams::zeros(3), b), ValidationError);
}

TEST_CASE("normalize_batch examples") {
  for (double x : normalize_batch(std::vector<double>{0, 0, 0, 0})) CHECK(x == 1.0);
  for (double c : {-50.0, 0.3, 700.0}) {
    for (std::size_t b : {1u, 3u, 17u}) {
      for (double x : normalize_batch(std::vector<double>(b, c))) {
        CHECK(x == doctest::Approx(1.0).epsilon(1e-15));
      }
    }
  }
  const auto out = normalize_batch(std::vector<double>{std::log(2.0), 0.0});
  CHECK(out[0] == doctest::Approx(4.0 / 3.0).epsilon(1e-14));
  CHECK(out[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK_THROWS_AS(normalize_batch(std::vector<double>{}), ValidationError);
  CHECK_THROWS_AS(normalize_batch(std::vector<double>{NAN}), ValidationError);
}

TEST_CASE("normalize_batch sums to b, stays in (0, b) and is shift-invariant") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> shift(-100.0, 100.0);
  for (int i = 0; i < 500; ++i) {
    const std::size_t b = 1 + i % 40;
    const auto w = testing::normal_vector(rng, b, 5.0);
    const auto out = normalize_batch(w);
    CHECK(std::abs(std::accumulate(out.begin(), out.end(), 0.0) - static_cast<double>(b)) < 1e-9);
    for (double x : out) {
      CHECK(x > 0.0);
      CHECK(x <= static_cast<double>(b));
    }
    auto shifted = w;
    const double c = shift(rng);
    for (auto& x : shifted) x += c;
    const auto out2 = normalize_batch(shifted);
    for (std::size_t k = 0; k < b; ++k) CHECK(std::abs(out[k] - out2[k]) < 1e-12);
  }
}

TEST_CASE("weighted_loss examples") {
  CHECK(weighted_loss(std::vector<double>{0, 0}, std::vector<double>{1, 3}) == 2.0);
  CHECK(weighted_loss(std::vector<double>{100, -100}, std::vector<double>{1, 3}) ==
        doctest::Approx(1.0));
  CHECK(weighted_loss(std::vector<double>{std::log(2.0), 0}, std::vector<double>{3, 6}) ==
        doctest::Approx(4.0).epsilon(1e-14));
  CHECK_THROWS_AS(weighted_loss(std::vector<double>{0, 0}, std::vector<double>{1}),
                  ValidationError);
}

TEST_CASE("weighted_loss is a convex combination and equals the mean for equal weights") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> loss(0.0, 5.0);
  for (int i = 0; i < 300; ++i) {
    const std::size_t b = 1 + i % 20;
    const auto w = testing::normal_vector(rng, b, 4.0);
    std::vector<double> l(b);
    for (auto& x : l) x = loss(rng);
    const double L = weighted_loss(w, l);
    CHECK(L >= *std::min_element(l.begin(), l.end()) - 1e-12);
    CHECK(L <= *std::max_element(l.begin(), l.end()) + 1e-12);
    CHECK(testing::rel_err(L, reference_weighted_loss(w, l)) < 1e-12);
    const double mean = std::accumulate(l.begin(), l.end(), 0.0) / static_cast<double>(b);
    CHECK(weighted_loss(std::vector<double>(b, 0.7), l) == doctest::Approx(mean).epsilon(1e-14));
  }
}

TEST_CASE("model_batch_grad_weights examples") {
  const auto half = model_batch_grad_weights(std::vector<double>{0, 0});
  CHECK(half[0] == 0.5);
  CHECK(half[1] == 0.5);
  const auto p = model_batch_grad_weights(std::vector<double>{std::log(3.0), 0});
  CHECK(p[0] == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(0.25).epsilon(1e-14));
  std::mt19937_64 rng(4);
  const auto w = testing::normal_vector(rng, 9);
  auto shifted = w;
  for (auto& x : shifted) x += 7.0;
  const auto a = model_batch_grad_weights(w);
  const auto b = model_batch_grad_weights(shifted);
  for (std::size_t i = 0; i < 9; ++i) CHECK(std::abs(a[i] - b[i]) < 1e-15);
  CHECK(std::accumulate(a.begin(), a.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(model_batch_grad_weights(std::vector<double>{}), ValidationError);
}

TEST_CASE("raw-weight gradient sign tracks loss relative to the weighted mean") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> loss(0.0, 3.0);
  for (int i = 0; i < 300; ++i) {
    const std::size_t b = 2 + i % 15;
    const auto w = testing::normal_vector(rng, b);
    std::vector<double> l(b);
    for (auto& x : l) x = loss(rng);
    const double L = weighted_loss(w, l);
    const auto g = grad_wrt_raw_weights(w, l);
    for (std::size_t k = 0; k < b; ++k) {
      if (l[k] > L) CHECK(g[k] > 0.0);
      if (l[k] < L) CHECK(g[k] < 0.0);
    }
  }
}

TEST_CASE("parameter gradient vanishes for equal losses and single-sample batches") {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 50; ++i) {
    const auto x = testing::random_matrix(rng, 8, 4);
    const ScoreNetParams p{testing::normal_vector(rng, 4), 0.3};
    CHECK(grad_wrt_params(p, x, std::vector<double>(8, 1.7)).norm() < 1e-12);
    const auto one = testing::random_matrix(rng, 1, 4);
    CHECK(grad_wrt_params(p, one, std::vector<double>{2.5}).norm() < 1e-12);
  }
}

TEST_CASE("parameter gradient matches central finite differences") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> loss(0.0, 4.0);
  const double h = 1e-6;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t b = 2 + trial % 16, d = 1 + trial % 6;
    const auto x = testing::random_matrix(rng, b, d);
    std::vector<double> l(b);
    for (auto& v : l) v = loss(rng);
    const ScoreNetParams p{testing::normal_vector(rng, d, 0.5), 0.1};
    const double l2 = (trial % 3 == 0) ? 0.25 : 0.0;
    const auto g = grad_wrt_params(p, x, l, l2);
    std::vector<double> analytic = g.weights, fd;
    analytic.push_back(g.bias);
    for (std::size_t j = 0; j <= d; ++j) {
      auto up = p, down = p;
      if (j < d) {
        up.weights[j] += h;
        down.weights[j] -= h;
      } else {
        up.bias += h;
        down.bias -= h;
      }
      fd.push_back(static_cast<double>(
          (reference_objective(up, x, l, l2) - reference_objective(down, x, l, l2)) / (2 * h)));
    }
    worst = std::max(worst, testing::vector_rel_err(analytic, fd));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("grad_wrt_params validates shapes") {
  const FeatureMatrix x(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK_THROWS_AS(grad_wrt_params(ScoreNetParams::zeros(2), x, std::vector<double>{1, 2}),
                  ValidationError);
  CHECK_THROWS_AS(grad_wrt_params(ScoreNetParams::zeros(3), x, std::vector<double>{1}),
                  ValidationError);
}

TEST_CASE("params_step arithmetic") {
  const auto zero = ScoreNetParams::zeros(3);
  CHECK(params_step(zero, {{0, 0, 0}, 0}, 0.5) == zero);
  CHECK(params_step(zero, {{0, 0, 0}, 1.0}, 0.1).bias == doctest::Approx(-0.1));
  const ScoreNetParams p{{1, 2, 3}, 4};
  const ScoreNetGrad g{{0.5, -1, 2}, 3};
  const auto a = params_step(p, g, 0.2);
  const auto b = params_step(p, g, 0.4);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(b.weights[j] - p.weights[j] == doctest::Approx(2 * (a.weights[j] - p.weights[j])));
  }
  CHECK_THROWS_AS(params_step(p, {{1}, 0}, 0.1), ValidationError);
}

TEST_CASE("score net checkpoint round-trips") {
  testing::TempDir dir;
  const ScoreNetParams p{{0.1, -2.5, 1e-300}, 3.25};
  save_score_net(p, dir / "net.json");
  CHECK(load_score_net(dir / "net.json") == p);
}
