#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "scorefilter/feature_store.hpp"

namespace scorefilter {

/// Affine score net: raw weight = weights . features + bias.
struct ScoreNetParams {
  std::vector<double> weights;
  double bias = 0.0;

  static ScoreNetParams zeros(std::size_t dim) { return {std::vector<double>(dim, 0.0), 0.0}; }
  std::size_t dim() const { return weights.size(); }
  bool operator==(const ScoreNetParams&) const = default;
};

struct ScoreNetGrad {
  std::vector<double> weights;
  double bias = 0.0;

  double norm() const;
};

double score_forward(const ScoreNetParams& params, std::span<const double> features);

/// Raw weight of every row of `features`.
std::vector<double> score_rows(const ScoreNetParams& params, const FeatureMatrix& features);

/// softmax(raw_weights). These are the coefficients with which per-sample
/// gradients enter the weighted model update; they sum to one.
std::vector<double> model_batch_grad_weights(std::span<const double> raw_weights);

/// b * softmax(raw_weights): the batch-normalized weights, summing to b.
std::vector<double> normalize_batch(std::span<const double> raw_weights);

/// Softmax-weighted batch loss, sum_i softmax(w)_i * loss_i.
double weighted_loss(std::span<const double> raw_weights, std::span<const double> losses);

/// dL/dw_i = p_i (loss_i - L). Positive exactly when the sample's loss is
/// above the weighted mean, so descent pushes its raw weight down.
std::vector<double> grad_wrt_raw_weights(std::span<const double> raw_weights,
                                         std::span<const double> losses);

/// Gradient of the weighted loss (plus l2/2 * |weights|^2) with respect to
/// the score-net parameters, for a batch whose rows are `batch_features`.
ScoreNetGrad grad_wrt_params(const ScoreNetParams& params, const FeatureMatrix& batch_features,
                             std::span<const double> losses, double l2 = 0.0);

ScoreNetParams params_step(const ScoreNetParams& params, const ScoreNetGrad& grad, double lr);

/// JSON checkpoint {"d": int, "w_vec": [...], "bias": float}.
void save_score_net(const ScoreNetParams& params, const std::filesystem::path& path);
ScoreNetParams load_score_net(const std::filesystem::path& path);

}  // namespace scorefilter
