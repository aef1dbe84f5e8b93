#include "scorefilter/score_net.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "scorefilter/error.hpp"
#include "scorefilter/jsonl.hpp"

namespace scorefilter {

namespace {

void require_nonempty(std::span<const double> w) {
  if (w.empty()) throw ValidationError("empty batch");
}

void require_same_length(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ValidationError("length mismatch: " + std::to_string(a.size()) + " raw weights vs " +
                          std::to_string(b.size()) + " losses");
  }
}

}  // namespace

double ScoreNetGrad::norm() const {
  double s = bias * bias;
  for (double g : weights) s += g * g;
  return std::sqrt(s);
}

double score_forward(const ScoreNetParams& params, std::span<const double> features) {
  if (features.size() != params.dim()) {
    throw ValidationError("score net expects d=" + std::to_string(params.dim()) +
                          ", got " + std::to_string(features.size()));
  }
  double w = params.bias;
  for (std::size_t j = 0; j < features.size(); ++j) w += params.weights[j] * features[j];
  return w;
}

std::vector<double> score_rows(const ScoreNetParams& params, const FeatureMatrix& features) {
  std::vector<double> out(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    out[i] = score_forward(params, features.row(i));
  }
  return out;
}

std::vector<double> model_batch_grad_weights(std::span<const double> raw_weights) {
  require_nonempty(raw_weights);
  const double mx = *std::max_element(raw_weights.begin(), raw_weights.end());
  std::vector<double> p(raw_weights.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!std::isfinite(raw_weights[i])) throw ValidationError("non-finite raw weight");
    p[i] = std::exp(raw_weights[i] - mx);
    z += p[i];
  }
  for (double& x : p) x /= z;
  return p;
}

std::vector<double> normalize_batch(std::span<const double> raw_weights) {
  auto p = model_batch_grad_weights(raw_weights);
  const double b = static_cast<double>(p.size());
  for (double& x : p) x *= b;
  return p;
}

double weighted_loss(std::span<const double> raw_weights, std::span<const double> losses) {
  require_same_length(raw_weights, losses);
  const auto p = model_batch_grad_weights(raw_weights);
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += p[i] * losses[i];
  return total;
}

std::vector<double> grad_wrt_raw_weights(std::span<const double> raw_weights,
                                         std::span<const double> losses) {
  require_same_length(raw_weights, losses);
  const auto p = model_batch_grad_weights(raw_weights);
  double mean = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) mean += p[i] * losses[i];
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) g[i] = p[i] * (losses[i] - mean);
  return g;
}

ScoreNetGrad grad_wrt_params(const ScoreNetParams& params, const FeatureMatrix& batch_features,
                             std::span<const double> losses, double l2) {
  if (batch_features.cols() != params.dim()) {
    throw ValidationError("feature dimension " + std::to_string(batch_features.cols()) +
                          " does not match score net d=" + std::to_string(params.dim()));
  }
  if (batch_features.rows() != losses.size()) {
    throw ValidationError("batch has " + std::to_string(batch_features.rows()) +
                          " feature rows but " + std::to_string(losses.size()) + " losses");
  }
  const auto raw = score_rows(params, batch_features);
  const auto dw = grad_wrt_raw_weights(raw, losses);

  ScoreNetGrad grad{std::vector<double>(params.dim(), 0.0), 0.0};
  for (std::size_t i = 0; i < dw.size(); ++i) {
    auto row = batch_features.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) grad.weights[j] += dw[i] * row[j];
    grad.bias += dw[i];
  }
  if (l2 != 0.0) {
    for (std::size_t j = 0; j < grad.weights.size(); ++j) {
      grad.weights[j] += l2 * params.weights[j];
    }
  }
  return grad;
}

ScoreNetParams params_step(const ScoreNetParams& params, const ScoreNetGrad& grad, double lr) {
  if (grad.weights.size() != params.dim()) {
    throw ValidationError("score-net gradient has wrong dimension");
  }
  ScoreNetParams next = params;
  for (std::size_t j = 0; j < next.weights.size(); ++j) next.weights[j] -= lr * grad.weights[j];
  next.bias -= lr * grad.bias;
  return next;
}

void save_score_net(const ScoreNetParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StorageError("cannot open for writing: " + path.string());
  out << Json{{"d", params.dim()}, {"w_vec", params.weights}, {"bias", params.bias}}.dump()
      << '\n';
  if (!out) throw StorageError("write failed: " + path.string());
}

ScoreNetParams load_score_net(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw StorageError("cannot open " + path.string());
  Json obj;
  try {
    obj = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  ScoreNetParams params;
  try {
    const auto d = obj.at("d").get<std::size_t>();
    params.weights = obj.at("w_vec").get<std::vector<double>>();
    params.bias = obj.at("bias").get<double>();
    if (params.weights.size() != d) {
      throw ValidationError(path.string() + ": w_vec has " +
                            std::to_string(params.weights.size()) + " entries, d=" +
                            std::to_string(d));
    }
  } catch (const Json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  for (double w : params.weights) {
    if (!std::isfinite(w)) throw ValidationError(path.string() + ": non-finite weight");
  }
  if (!std::isfinite(params.bias)) throw ValidationError(path.string() + ": non-finite bias");
  return params;
}

}  // namespace scorefilter
