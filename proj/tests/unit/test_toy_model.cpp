#include <cmath>
#include <fstream>

#include "doctest.h"
#include "scorefilter/error.hpp"
#include "scorefilter/toy_model.hpp"
#include "support.hpp"

using namespace scorefilter;

namespace {

// Independent evaluation of the mean next-token NLL, straight from the formula.
double reference_loss(std::size_t V, const std::vector<double>& logits, const TokenSample& s) {
  double total = 0.0;
  for (std::size_t j = 0; j + 1 < s.tokens.size(); ++j) {
    const std::size_t u = s.tokens[j];
    double z = 0.0;
    for (std::size_t v = 0; v < V; ++v) z += std::exp(logits[u * V + v]);
    total += std::log(z) - logits[u * V + s.tokens[j + 1]];
  }
  return total / static_cast<double>(s.tokens.size() - 1);
}

std::vector<double> fd_gradient(std::size_t V, std::vector<double> logits, const TokenSample& s,
                                double h) {
  std::vector<double> g(V * V);
  for (std::size_t i = 0; i < V * V; ++i) {
    const double keep = logits[i];
    logits[i] = keep + h;
    const double up = reference_loss(V, logits, s);
    logits[i] = keep - h;
    const double down = reference_loss(V, logits, s);
    logits[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

BigramModel fit_to(const TokenSample& s, std::size_t V) {
  std::vector<double> logits(V * V, -30.0);
  for (std::size_t j = 0; j + 1 < s.tokens.size(); ++j) {
    logits[s.tokens[j] * V + s.tokens[j + 1]] = 30.0;
  }
  return BigramModel(V, logits);
}

}  // namespace

TEST_CASE("model construction validates vocabulary and logits") {
  CHECK_THROWS_AS(BigramModel(1), ValidationError);
  CHECK_THROWS_AS(BigramModel(2, {0, 0, 0}), ValidationError);
  CHECK_THROWS_AS(BigramModel(2, {0, 0, 0, NAN}), ValidationError);
  CHECK(BigramModel(3).logits().size() == 9);
}

TEST_CASE("uniform model has loss ln V on any sample") {
  std::mt19937_64 rng(1);
  const BigramModel model(4);
  for (int i = 0; i < 20; ++i) {
    CHECK(sample_loss(model, testing::random_sample(rng, 4, 2, 30)) ==
          doctest::Approx(1.3862944).epsilon(1e-7));
  }
}

TEST_CASE("row-constant logits also give exactly ln V") {
  std::vector<double> logits(25);
  for (std::size_t u = 0; u < 5; ++u) {
    for (std::size_t v = 0; v < 5; ++v) logits[u * 5 + v] = static_cast<double>(u) * 3.0 - 4.0;
  }
  const BigramModel model(5, logits);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 10; ++i) {
    CHECK(std::abs(sample_loss(model, testing::random_sample(rng, 5, 2, 9)) - std::log(5.0)) <
          1e-12);
  }
}

TEST_CASE("near-deterministic model on its own transitions has near-zero loss") {
  const TokenSample s{"a", {0, 1, 2, 3, 0, 1}};
  CHECK(sample_loss(fit_to(s, 4), s) < 1e-10);
}

TEST_CASE("hand-evaluated two-token loss") {
  // Theta[0] = [0, ln 3]: P(1 | 0) = 3/4.
  const BigramModel model(2, {0.0, std::log(3.0), 0.0, 0.0});
  CHECK(sample_loss(model, TokenSample{"a", {0, 1}}) == doctest::Approx(0.2876821).epsilon(1e-7));
}

TEST_CASE("out-of-range tokens and short samples are rejected") {
  const BigramModel model(3);
  CHECK_THROWS_AS(sample_loss(model, TokenSample{"a", {0, 3}}), ValidationError);
  CHECK_THROWS_AS(sample_loss(model, TokenSample{"a", {0}}), ValidationError);
  CHECK_THROWS_AS(sample_grad(model, TokenSample{"a", {5, 0}}), ValidationError);
}

TEST_CASE("loss is nonnegative and matches the reference formula") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const auto model = testing::random_model(rng, 6, 3.0);
    const auto s = testing::random_sample(rng, 6, 2, 20);
    const double loss = sample_loss(model, s);
    CHECK(loss >= 0.0);
    const std::vector<double> logits(model.logits().begin(), model.logits().end());
    CHECK(testing::rel_err(loss, reference_loss(6, logits, s)) < 1e-12);
  }
}

TEST_CASE("fitted model has near-zero gradient") {
  const TokenSample s{"a", {2, 0, 1, 2, 0}};
  CHECK(sample_grad(fit_to(s, 3), s).norm() < 1e-6);
}

TEST_CASE("rows of unused contexts have zero gradient") {
  std::mt19937_64 rng(4);
  const auto model = testing::random_model(rng, 5);
  const TokenSample s{"a", {0, 1, 0, 1, 4}};  // contexts 0 and 1 only
  const auto g = sample_grad(model, s);
  for (std::size_t u : {2u, 3u, 4u}) {
    for (std::size_t v = 0; v < 5; ++v) CHECK(g.at(u, v) == 0.0);
  }
}

TEST_CASE("gradient rows sum to zero") {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 100; ++i) {
    const auto model = testing::random_model(rng, 7, 2.0);
    const auto g = sample_grad(model, testing::random_sample(rng, 7, 2, 25));
    for (std::size_t u = 0; u < 7; ++u) {
      double sum = 0.0;
      for (std::size_t v = 0; v < 7; ++v) sum += g.at(u, v);
      CHECK(std::abs(sum) < 1e-12);
    }
  }
}

TEST_CASE("analytic gradient matches central finite differences") {
  std::mt19937_64 rng(7);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t V = 2 + i % 5;
    const auto model = testing::random_model(rng, V);
    const auto s = testing::random_sample(rng, V, 2, 12);
    const auto g = sample_grad(model, s);
    const std::vector<double> logits(model.logits().begin(), model.logits().end());
    const auto fd = fd_gradient(V, logits, s, 1e-5);
    for (std::size_t k = 0; k < V * V; ++k) {
      worst = std::max(worst, testing::rel_err(g.values[k], fd[k], 1e-6));
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("accumulate_sample_grad adds a scaled gradient") {
  std::mt19937_64 rng(8);
  const auto model = testing::random_model(rng, 4);
  const auto s = testing::random_sample(rng, 4, 2, 10);
  ModelGradient acc(4);
  accumulate_sample_grad(TransitionTable(model), s, 0.25, acc);
  accumulate_sample_grad(TransitionTable(model), s, 0.5, acc);
  const auto g = sample_grad(model, s);
  for (std::size_t k = 0; k < 16; ++k) CHECK(acc.values[k] == doctest::Approx(0.75 * g.values[k]));
}

TEST_CASE("model_step arithmetic") {
  std::mt19937_64 rng(9);
  const auto model = testing::random_model(rng, 3);
  CHECK(model_step(model, ModelGradient(3), 0.7) == model);

  ModelGradient same(3);
  same.values.assign(model.logits().begin(), model.logits().end());
  const auto zeroed = model_step(model, same, 1.0);
  for (double x : zeroed.logits()) CHECK(x == 0.0);

  ModelGradient g(3);
  g.values = testing::normal_vector(rng, 9);
  const auto twice = model_step(model_step(model, g, 0.1), g, 0.1);
  const auto once = model_step(model, g, 0.2);
  for (std::size_t k = 0; k < 9; ++k) {
    CHECK(twice.logits()[k] == doctest::Approx(once.logits()[k]).epsilon(1e-12));
  }
  CHECK_THROWS_AS(model_step(model, ModelGradient(4), 0.1), ValidationError);
}

TEST_CASE("train_plain fits samples from a known chain") {
  // Deterministic cycle 0 -> 1 -> 2 -> 3 -> 0 with occasional noise.
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<std::uint32_t> any(0, 3);
  auto draw = [&](std::size_t count, const std::string& prefix) {
    std::vector<TokenSample> out;
    for (std::size_t i = 0; i < count; ++i) {
      TokenSample s{prefix + std::to_string(i), {any(rng)}};
      for (int j = 0; j < 15; ++j) {
        s.tokens.push_back(coin(rng) < 0.9 ? (s.tokens.back() + 1) % 4 : any(rng));
      }
      out.push_back(std::move(s));
    }
    return out;
  };
  const auto train = draw(200, "t");
  const auto heldout = draw(100, "h");
  const auto result = train_plain(BigramModel(4), train, {5, 16, 1.0, 0});
  CHECK(result.heldout_loss(heldout) < std::log(4.0) - 0.5);
  CHECK(result.heldout_loss(heldout) == doctest::Approx(mean_loss(result.model, heldout)));
}

TEST_CASE("train_plain with zero epochs leaves the model unchanged") {
  std::mt19937_64 rng(12);
  const auto init = testing::random_model(rng, 3);
  const std::vector<TokenSample> data = {testing::random_sample(rng, 3, 2, 5)};
  CHECK(train_plain(init, data, {0, 4, 1.0, 0}).model == init);
}

TEST_CASE("train_plain is deterministic given a seed and rejects empty data") {
  std::mt19937_64 rng(13);
  std::vector<TokenSample> data;
  for (int i = 0; i < 50; ++i) data.push_back(testing::random_sample(rng, 5, 2, 10));
  const auto a = train_plain(BigramModel(5), data, {3, 8, 0.5, 42}).model;
  const auto b = train_plain(BigramModel(5), data, {3, 8, 0.5, 42}).model;
  const auto c = train_plain(BigramModel(5), data, {3, 8, 0.5, 43}).model;
  CHECK(a == b);
  CHECK_FALSE(a == c);
  CHECK_THROWS_AS(train_plain(BigramModel(5), std::vector<TokenSample>{}, {}), ValidationError);
}

TEST_CASE("token samples and model checkpoints round-trip") {
  testing::TempDir dir;
  const std::vector<TokenSample> data = {{"a", {0, 1, 2}}, {"b", {2, 2}}};
  save_token_samples(data, dir / "tokens.jsonl");
  CHECK(load_token_samples(dir / "tokens.jsonl") == data);

  std::vector<double> logits = {0.5, -1.25, 2.0, 0.0};
  const BigramModel model(2, logits);
  save_model(model, dir / "model.sffm", dir / "model.json");
  CHECK(load_model(dir / "model.sffm", dir / "model.json") == model);

  std::ofstream(dir / "bad.json") << "{\"vocab_size\": 3}";
  CHECK_THROWS_AS(load_model(dir / "model.sffm", dir / "bad.json"), ValidationError);
}
