#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace scorefilter {

/// A tokenized training sample. `tokens` must have length >= 2 and every
/// entry below the model's vocabulary size.
struct TokenSample {
  std::string id;
  std::vector<std::uint32_t> tokens;

  bool operator==(const TokenSample&) const = default;
};

/// V x V gradient (or any V x V update) in row-major order.
struct ModelGradient {
  std::size_t vocab_size = 0;
  std::vector<double> values;

  explicit ModelGradient(std::size_t v = 0) : vocab_size(v), values(v * v, 0.0) {}
  double& at(std::size_t u, std::size_t v) { return values[u * vocab_size + v]; }
  double at(std::size_t u, std::size_t v) const { return values[u * vocab_size + v]; }
  double norm() const;
};

/// Autoregressive bigram language model. logits(u, v) is the unnormalized
/// log-probability of token v following token u.
class BigramModel {
 public:
  /// Uniform model: all logits zero.
  explicit BigramModel(std::size_t vocab_size);
  BigramModel(std::size_t vocab_size, std::vector<double> logits);

  std::size_t vocab_size() const { return vocab_; }
  std::span<const double> logits() const { return logits_; }
  std::span<const double> row(std::size_t u) const {
    return {logits_.data() + u * vocab_, vocab_};
  }
  double at(std::size_t u, std::size_t v) const { return logits_[u * vocab_ + v]; }

  bool operator==(const BigramModel&) const = default;

 private:
  std::size_t vocab_;
  std::vector<double> logits_;
};

/// Row-wise softmax of a model, computed once and reused across the samples
/// of a batch.
class TransitionTable {
 public:
  explicit TransitionTable(const BigramModel& model);
  std::size_t vocab_size() const { return vocab_; }
  double prob(std::size_t u, std::size_t v) const { return probs_[u * vocab_ + v]; }
  double log_prob(std::size_t u, std::size_t v) const;

 private:
  std::size_t vocab_;
  std::vector<double> probs_;
  std::vector<double> log_norm_;  // per-row log-sum-exp
  std::vector<double> logits_;
};

void validate_sample(std::size_t vocab_size, const TokenSample& sample);

/// Mean next-token negative log-likelihood, in nats per token.
double sample_loss(const BigramModel& model, const TokenSample& sample);
double sample_loss(const TransitionTable& table, const TokenSample& sample);

ModelGradient sample_grad(const BigramModel& model, const TokenSample& sample);

/// into += coef * sample_grad(model, sample), touching only the rows of
/// context tokens that occur in the sample.
void accumulate_sample_grad(const TransitionTable& table, const TokenSample& sample,
                            double coef, ModelGradient& into);

/// Plain gradient-descent step: logits - lr * gradient.
BigramModel model_step(const BigramModel& model, const ModelGradient& gradient,
                       double lr);

double mean_loss(const BigramModel& model, std::span<const TokenSample> samples);

struct PlainTrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 16;
  double lr = 0.5;
  std::uint64_t seed = 0;
};

struct PlainTrainResult {
  BigramModel model;
  /// Mean per-sample loss of the trained model on a held-out set.
  std::function<double(std::span<const TokenSample>)> heldout_loss;
};

/// Unweighted minibatch SGD over seeded shuffled epochs.
PlainTrainResult train_plain(const BigramModel& init, std::span<const TokenSample> samples,
                             const PlainTrainConfig& config);

std::vector<TokenSample> load_token_samples(const std::filesystem::path& path);
void save_token_samples(std::span<const TokenSample> samples,
                        const std::filesystem::path& path);

/// Checkpoint: SFFM matrix with n = d = V plus a sidecar {"vocab_size": V}.
/// Logits are rounded to binary32 on save.
void save_model(const BigramModel& model, const std::filesystem::path& matrix_path,
                const std::filesystem::path& sidecar_path);
BigramModel load_model(const std::filesystem::path& matrix_path,
                       const std::filesystem::path& sidecar_path);

}  // namespace scorefilter
