#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "clip/nd/tensor.hpp"

namespace clip::probe {

/// Multinomial logistic regression: logits = X · Wᵀ + b.
struct ProbeModel {
  nd::Tensor weights;  // K × d
  std::vector<double> bias;
  double lambda = 0.0;

  std::size_t num_classes() const { return bias.size(); }
};

struct FitOptions {
  std::size_t max_iterations = 1000;
  double gradient_tolerance = 1e-6;
  std::size_t history = 10;
};

struct FitResult {
  ProbeModel model;
  /// Full objective at the returned point.
  double loss = 0.0;
  double gradient_norm = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Mean cross-entropy + (λ/N)·‖W‖²_F; the bias is not penalized. Writes the
/// gradient into `grad_w` / `grad_b` when non-null.
double objective(const nd::Tensor& x, std::span<const std::size_t> y, const nd::Tensor& w,
                 std::span<const double> b, double lambda, nd::Tensor* grad_w = nullptr,
                 std::vector<double>* grad_b = nullptr);

/// Mean cross-entropy alone (the data term).
double data_loss(const ProbeModel& model, const nd::Tensor& x, std::span<const std::size_t> y);

/// L-BFGS with a strong-Wolfe line search from `init` (zeros when null).
/// `num_classes` = 0 infers max(y)+1. Fewer than two distinct labels, N < K,
/// non-finite features or λ ≤ 0 are errors.
FitResult fit_logreg(const nd::Tensor& x, std::span<const std::size_t> y, double lambda,
                     std::size_t num_classes = 0, const FitOptions& options = {},
                     const ProbeModel* init = nullptr);

/// Row-wise softmax probabilities, N × K.
nd::Tensor predict_proba(const ProbeModel& model, const nd::Tensor& x);
std::vector<std::size_t> predict(const ProbeModel& model, const nd::Tensor& x);

/// 10^(−6 + k/8), k = 0..95.
std::vector<double> lambda_grid();
inline constexpr std::size_t kGridSize = 96;
/// Grid indices of the starting points 10^−6, 10^−4, …, 10^6 (the last clamped to the top of the grid).
std::vector<std::size_t> sweep_seed_indices();

struct SweepPoint {
  std::size_t index = 0;
  double lambda = 0.0;
  double score = 0.0;
};

struct SweepResult {
  /// In evaluation order.
  std::vector<SweepPoint> evaluated;
  std::size_t chosen_index = 0;
  double chosen_lambda = 0.0;
  double chosen_score = 0.0;
};

/// Peak search over grid indices: the seed points, then repeated halving of
/// the gaps on both sides of the current peak until its evaluated neighbours
/// are adjacent grid points. Ties go to the smaller λ. Each index is scored
/// at most once.
SweepResult sweep_grid(const std::function<double(std::size_t index)>& score_at);

enum class MetricKind { accuracy, mean_per_class, roc_auc };
MetricKind parse_metric(const std::string& name);
std::string metric_name(MetricKind kind);

/// `scores` is N × K (class probabilities or any monotone score). roc_auc
/// needs K = 2, labels in {0,1} with both present, and ranks column 1.
double metric(MetricKind kind, const nd::Tensor& scores, std::span<const std::size_t> labels);
/// Mann–Whitney statistic with tied scores sharing their mean rank.
double roc_auc(std::span<const double> scores, std::span<const std::size_t> labels);

struct LabeledFeatures {
  nd::Tensor x;
  std::vector<std::size_t> y;
};

/// Fits at each visited λ on `train` and scores on `val`.
SweepResult sweep_lambda(const LabeledFeatures& train, const LabeledFeatures& val, MetricKind kind,
                         std::size_t num_classes = 0, const FitOptions& options = {});

struct ProtocolResult {
  SweepResult sweep;
  ProbeModel model;
  double test_score = 0.0;
};

/// Sweep on validation, refit on train ∪ validation at the chosen λ, score on test.
ProtocolResult run_protocol(const LabeledFeatures& train, const LabeledFeatures& val, const LabeledFeatures& test,
                            MetricKind kind, std::size_t num_classes = 0, const FitOptions& options = {});

}  // namespace clip::probe
