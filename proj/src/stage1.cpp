#include "scorefilter/stage1.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "scorefilter/error.hpp"
#include "scorefilter/random.hpp"

namespace scorefilter {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (grad_accum_steps < 1) throw ValidationError("grad_accum_steps must be >= 1");
  if (!(lr_model > 0.0)) throw ValidationError("lr_model must be > 0");
  if (!(lr_scorenet >= 0.0)) throw ValidationError("lr_scorenet must be >= 0");
  if (!(l2_scorenet >= 0.0)) throw ValidationError("l2_scorenet must be >= 0");
}

std::size_t infer_vocab_size(std::span<const TokenSample> samples) {
  std::uint32_t mx = 0;
  for (const auto& s : samples) {
    for (auto t : s.tokens) mx = std::max(mx, t);
  }
  return std::max<std::size_t>(2, std::size_t{mx} + 1);
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StorageError("cannot open for writing: " + path.string());
  out << "epoch,step,weighted_loss,mean_loss,min_w,max_w\n";
  out << std::setprecision(17);
  for (const auto& r : steps) {
    out << r.epoch << ',' << r.step << ',' << r.weighted_loss << ',' << r.mean_loss << ','
        << r.min_w << ',' << r.max_w << '\n';
  }
  if (!out) throw StorageError("write failed: " + path.string());
}

Stage1Result train_stage1(std::span<const TokenSample> samples, const FeatureMatrix& features,
                          const TrainConfig& config) {
  config.validate();
  if (samples.size() != features.rows()) {
    throw ValidationError("stage 1 needs one feature row per sample: " +
                          std::to_string(samples.size()) + " samples, " +
                          std::to_string(features.rows()) + " feature rows");
  }
  const std::size_t vocab =
      config.vocab_size == 0 ? infer_vocab_size(samples) : config.vocab_size;
  for (const auto& s : samples) validate_sample(vocab, s);

  BigramModel model(vocab);
  ScoreNetParams params = ScoreNetParams::zeros(features.cols());
  TrainLog log;

  EpochShuffler shuffler(samples.size(), config.seed);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto& order = shuffler.next();

    ModelGradient model_grad(vocab);
    ScoreNetGrad net_grad{std::vector<double>(params.dim(), 0.0), 0.0};
    std::size_t pending = 0;
    TransitionTable table(model);

    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, stop - start);

      std::vector<double> losses(batch.size());
      for (std::size_t k = 0; k < batch.size(); ++k) {
        const auto& sample = samples[batch[k]];
        losses[k] = sample_loss(table, sample);
        if (!std::isfinite(losses[k])) {
          throw NumericError("non-finite loss on sample \"" + sample.id + "\" at epoch " +
                             std::to_string(epoch) + ", step " + std::to_string(step));
        }
      }
      const FeatureMatrix batch_features = features.gather(batch);
      const auto raw = score_rows(params, batch_features);
      const auto coef = model_batch_grad_weights(raw);

      double weighted = 0.0;
      double mean = 0.0;
      for (std::size_t k = 0; k < batch.size(); ++k) {
        weighted += coef[k] * losses[k];
        mean += losses[k];
        accumulate_sample_grad(table, samples[batch[k]], coef[k], model_grad);
      }
      mean /= static_cast<double>(batch.size());

      const auto g = grad_wrt_params(params, batch_features, losses, config.l2_scorenet);
      for (std::size_t j = 0; j < g.weights.size(); ++j) net_grad.weights[j] += g.weights[j];
      net_grad.bias += g.bias;

      const auto [min_w, max_w] = std::minmax_element(raw.begin(), raw.end());
      log.steps.push_back({epoch, step, weighted, mean, *min_w, *max_w});
      ++step;
      ++pending;

      if (pending == config.grad_accum_steps || stop == order.size()) {
        if (pending > 1) {
          const double inv = 1.0 / static_cast<double>(pending);
          for (double& x : model_grad.values) x *= inv;
          for (double& x : net_grad.weights) x *= inv;
          net_grad.bias *= inv;
        }
        model = model_step(model, model_grad, config.lr_model);
        params = params_step(params, net_grad, config.lr_scorenet);
        model_grad = ModelGradient(vocab);
        net_grad = ScoreNetGrad{std::vector<double>(params.dim(), 0.0), 0.0};
        pending = 0;
        table = TransitionTable(model);
      }
    }
  }

  log.final_raw_weights = score_rows(params, features);
  return {std::move(model), std::move(params), std::move(log)};
}

TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base) {
  toml::table tbl;
  try {
    tbl = toml::parse_file(path.string());
  } catch (const toml::parse_error& e) {
    throw ParseError(path.string() + ": " + std::string(e.description()));
  }
  static constexpr std::string_view kKeys[] = {
      "batch_size", "epochs",      "lr_model",         "lr_scorenet",
      "seed",       "l2_scorenet", "grad_accum_steps", "vocab_size"};
  for (const auto& [key, _] : tbl) {
    if (std::find(std::begin(kKeys), std::end(kKeys), key.str()) == std::end(kKeys)) {
      throw ParseError(path.string() + ": unknown key \"" + std::string(key.str()) + "\"");
    }
  }
  auto read_size = [&](const char* key, std::size_t& dst) {
    if (auto v = tbl[key].value<std::int64_t>()) {
      if (*v < 0) throw ValidationError(std::string(key) + " must be nonnegative");
      dst = static_cast<std::size_t>(*v);
    } else if (tbl.contains(key)) {
      throw ParseError(path.string() + ": " + key + " must be an integer");
    }
  };
  auto read_double = [&](const char* key, double& dst) {
    if (auto v = tbl[key].value<double>()) {
      dst = *v;
    } else if (tbl.contains(key)) {
      throw ParseError(path.string() + ": " + key + " must be a number");
    }
  };
  read_size("batch_size", base.batch_size);
  read_size("epochs", base.epochs);
  read_size("grad_accum_steps", base.grad_accum_steps);
  read_size("vocab_size", base.vocab_size);
  read_double("lr_model", base.lr_model);
  read_double("lr_scorenet", base.lr_scorenet);
  read_double("l2_scorenet", base.l2_scorenet);
  if (auto v = tbl["seed"].value<std::int64_t>()) {
    base.seed = static_cast<std::uint64_t>(*v);
  } else if (tbl.contains("seed")) {
    throw ParseError(path.string() + ": seed must be an integer");
  }
  base.validate();
  return base;
}

}  // namespace scorefilter
