#include "scorefilter/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "scorefilter/error.hpp"
#include "scorefilter/feature_store.hpp"
#include "scorefilter/jsonl.hpp"
#include "scorefilter/random.hpp"

namespace scorefilter {

double ModelGradient::norm() const {
  double s = 0.0;
  for (double g : values) s += g * g;
  return std::sqrt(s);
}

BigramModel::BigramModel(std::size_t vocab_size)
    : BigramModel(vocab_size, std::vector<double>(vocab_size * vocab_size, 0.0)) {}

BigramModel::BigramModel(std::size_t vocab_size, std::vector<double> logits)
    : vocab_(vocab_size), logits_(std::move(logits)) {
  if (vocab_ < 2) throw ValidationError("vocab_size must be >= 2");
  if (logits_.size() != vocab_ * vocab_) {
    throw ValidationError("logit table must be V x V");
  }
  for (double x : logits_) {
    if (!std::isfinite(x)) throw ValidationError("non-finite logit in bigram model");
  }
}

TransitionTable::TransitionTable(const BigramModel& model)
    : vocab_(model.vocab_size()),
      probs_(vocab_ * vocab_),
      log_norm_(vocab_),
      logits_(model.logits().begin(), model.logits().end()) {
  for (std::size_t u = 0; u < vocab_; ++u) {
    auto row = model.row(u);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (std::size_t v = 0; v < vocab_; ++v) {
      probs_[u * vocab_ + v] = std::exp(row[v] - mx);
      z += probs_[u * vocab_ + v];
    }
    for (std::size_t v = 0; v < vocab_; ++v) probs_[u * vocab_ + v] /= z;
    log_norm_[u] = mx + std::log(z);
  }
}

double TransitionTable::log_prob(std::size_t u, std::size_t v) const {
  return logits_[u * vocab_ + v] - log_norm_[u];
}

void validate_sample(std::size_t vocab_size, const TokenSample& sample) {
  if (sample.tokens.size() < 2) {
    throw ValidationError("sample \"" + sample.id + "\" needs at least 2 tokens");
  }
  for (auto t : sample.tokens) {
    if (t >= vocab_size) {
      throw ValidationError("sample \"" + sample.id + "\" has token " +
                            std::to_string(t) + " outside vocabulary of size " +
                            std::to_string(vocab_size));
    }
  }
}

double sample_loss(const TransitionTable& table, const TokenSample& sample) {
  validate_sample(table.vocab_size(), sample);
  double nll = 0.0;
  for (std::size_t j = 0; j + 1 < sample.tokens.size(); ++j) {
    nll -= table.log_prob(sample.tokens[j], sample.tokens[j + 1]);
  }
  // Rounding in log-sum-exp can leave a -1e-17 residue on a perfect fit.
  return std::max(0.0, nll / static_cast<double>(sample.tokens.size() - 1));
}

double sample_loss(const BigramModel& model, const TokenSample& sample) {
  return sample_loss(TransitionTable(model), sample);
}

void accumulate_sample_grad(const TransitionTable& table, const TokenSample& sample,
                            double coef, ModelGradient& into) {
  validate_sample(table.vocab_size(), sample);
  const std::size_t vocab = table.vocab_size();
  const double scale = coef / static_cast<double>(sample.tokens.size() - 1);
  for (std::size_t j = 0; j + 1 < sample.tokens.size(); ++j) {
    const std::size_t u = sample.tokens[j];
    for (std::size_t v = 0; v < vocab; ++v) into.at(u, v) += scale * table.prob(u, v);
    into.at(u, sample.tokens[j + 1]) -= scale;
  }
}

ModelGradient sample_grad(const BigramModel& model, const TokenSample& sample) {
  ModelGradient g(model.vocab_size());
  accumulate_sample_grad(TransitionTable(model), sample, 1.0, g);
  return g;
}

BigramModel model_step(const BigramModel& model, const ModelGradient& gradient,
                       double lr) {
  if (gradient.vocab_size != model.vocab_size() ||
      gradient.values.size() != model.logits().size()) {
    throw ValidationError("gradient shape does not match model");
  }
  std::vector<double> next(model.logits().begin(), model.logits().end());
  for (std::size_t k = 0; k < next.size(); ++k) next[k] -= lr * gradient.values[k];
  return BigramModel(model.vocab_size(), std::move(next));
}

double mean_loss(const BigramModel& model, std::span<const TokenSample> samples) {
  if (samples.empty()) throw ValidationError("mean_loss of an empty sample set");
  const TransitionTable table(model);
  double total = 0.0;
  for (const auto& s : samples) total += sample_loss(table, s);
  return total / static_cast<double>(samples.size());
}

PlainTrainResult train_plain(const BigramModel& init, std::span<const TokenSample> samples,
                             const PlainTrainConfig& config) {
  if (samples.empty()) throw ValidationError("train_plain: empty dataset");
  if (config.batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!(config.lr > 0.0)) throw ValidationError("lr must be positive");
  for (const auto& s : samples) validate_sample(init.vocab_size(), s);

  BigramModel model = init;
  EpochShuffler shuffler(samples.size(), config.seed);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto& order = shuffler.next();
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const double coef = 1.0 / static_cast<double>(stop - start);
      const TransitionTable table(model);
      ModelGradient grad(model.vocab_size());
      for (std::size_t k = start; k < stop; ++k) {
        accumulate_sample_grad(table, samples[order[k]], coef, grad);
      }
      model = model_step(model, grad, config.lr);
    }
  }
  PlainTrainResult result{model, {}};
  result.heldout_loss = [trained = model](std::span<const TokenSample> heldout) {
    return mean_loss(trained, heldout);
  };
  return result;
}

std::vector<TokenSample> load_token_samples(const std::filesystem::path& path) {
  std::vector<TokenSample> out;
  for_each_json_line(path, [&](const Json& obj, std::size_t line) {
    TokenSample s;
    s.id = require_string(obj, "id", line);
    auto it = obj.find("tokens");
    if (it == obj.end() || !it->is_array()) {
      throw ParseError("line " + std::to_string(line) + ": \"tokens\" must be an array");
    }
    for (const auto& t : *it) {
      if (!t.is_number_unsigned() && !(t.is_number_integer() && t.get<std::int64_t>() >= 0)) {
        throw ParseError("line " + std::to_string(line) +
                         ": tokens must be nonnegative integers");
      }
      s.tokens.push_back(t.get<std::uint32_t>());
    }
    out.push_back(std::move(s));
  });
  return out;
}

void save_token_samples(std::span<const TokenSample> samples,
                        const std::filesystem::path& path) {
  std::vector<Json> lines;
  lines.reserve(samples.size());
  for (const auto& s : samples) lines.push_back({{"id", s.id}, {"tokens", s.tokens}});
  write_json_lines(path, lines);
}

void save_model(const BigramModel& model, const std::filesystem::path& matrix_path,
                const std::filesystem::path& sidecar_path) {
  save_features(FeatureMatrix(model.vocab_size(), model.vocab_size(),
                              {model.logits().begin(), model.logits().end()}),
                matrix_path);
  std::ofstream out(sidecar_path, std::ios::binary | std::ios::trunc);
  if (!out) throw StorageError("cannot open for writing: " + sidecar_path.string());
  out << Json{{"vocab_size", model.vocab_size()}}.dump() << '\n';
}

BigramModel load_model(const std::filesystem::path& matrix_path,
                       const std::filesystem::path& sidecar_path) {
  std::ifstream in(sidecar_path);
  if (!in) throw StorageError("cannot open " + sidecar_path.string());
  Json meta;
  try {
    meta = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ParseError(sidecar_path.string() + ": " + e.what());
  }
  if (!meta.contains("vocab_size") || !meta["vocab_size"].is_number_unsigned()) {
    throw ParseError(sidecar_path.string() + ": missing \"vocab_size\"");
  }
  const auto vocab = meta["vocab_size"].get<std::size_t>();
  auto matrix = load_features(matrix_path);
  if (matrix.rows() != vocab || matrix.cols() != vocab) {
    throw ValidationError("checkpoint matrix is " + std::to_string(matrix.rows()) + "x" +
                          std::to_string(matrix.cols()) + ", sidecar says V=" +
                          std::to_string(vocab));
  }
  return BigramModel(vocab, {matrix.values().begin(), matrix.values().end()});
}

}  // namespace scorefilter
