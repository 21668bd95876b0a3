#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace clip::analysis {

/// ln(p / (1 − p)). Refuses p outside the open interval rather than clamping;
/// smooth upstream if a model scores exactly 0 or 1.
double logit(double p);
double inverse_logit(double x);

enum class PointTag { zeroshot, linear, other };
std::string tag_name(PointTag tag);
PointTag parse_tag(const std::string& name);

struct RobustnessPoint {
  std::string model;
  double in_dist_acc = 0.5;
  double shift_acc = 0.5;
  PointTag tag = PointTag::other;
};

struct Band {
  double low = 0.0;
  double high = 0.0;
};

/// Least-squares line in logit-logit space with percentile bootstrap bands.
struct RobustnessFit {
  double slope = 0.0;
  double intercept = 0.0;
  Band slope_band;
  double band_level = 0.95;
  Band intercept_band;
  std::size_t resamples = 0;
  /// Resamples whose x values were all equal and so had no defined line.
  std::size_t degenerate_resamples = 0;
  /// (slope, intercept) of every usable resample, kept for pointwise bands.
  std::vector<std::pair<double, double>> draws;

  double predict_logit(double in_dist_logit) const { return slope * in_dist_logit + intercept; }
  /// Predicted shifted accuracy for an in-distribution accuracy.
  double predict(double in_dist_acc) const;
};

inline constexpr std::size_t kDefaultResamples = 10000;
inline constexpr std::uint64_t kDefaultBootstrapSeed = 20210226;

/// Plain OLS of y on x. Throws when every x is equal or fewer than 2 points.
std::pair<double, double> ols(std::span<const double> x, std::span<const double> y);

/// Fits on the logits of the points. Each bootstrap resample draws |points|
/// points with replacement; the band is the 2.5/97.5 percentile. The
/// result does not depend on the order of `points`: they are sorted by
/// (in_dist, shift, model) before resampling.
RobustnessFit fit_line(std::span<const RobustnessPoint> points, std::size_t resamples = kDefaultResamples,
                       std::uint64_t seed = kDefaultBootstrapSeed);

/// shift_acc minus the baseline's prediction at in_dist_acc; positive is above trend.
double effective_robustness(const RobustnessPoint& point, const RobustnessFit& baseline);

/// Rows for external plotting: every point in logit space, then the fitted
/// line and its pointwise bootstrap band on `grid` evenly spaced logit-x values.
std::string plot_csv(std::span<const RobustnessPoint> points, const RobustnessFit& fit, std::size_t grid = 50);

/// Linear-interpolated percentile (q in [0,1]) of unsorted values.
double percentile(std::vector<double> values, double q);

/// P(X ≥ k) for X ~ Binomial(n, p), summed term by term in log space.
double binomial_sf(std::size_t k, std::size_t n, double p);

/// Exact two-sided interval from Beta quantiles.
std::pair<double, double> clopper_pearson(std::size_t k, std::size_t n, double confidence = 0.995);

/// min(1, p · tests).
double bonferroni(double p_value, std::size_t tests);

struct OverlapExample {
  bool overlap = false;
  bool correct = false;
};

struct OverlapReport {
  std::size_t total = 0;
  std::size_t overlap_count = 0;
  std::size_t clean_count = 0;
  double contamination_ratio = 0.0;
  double acc_all = 0.0;
  std::optional<double> acc_clean;
  std::optional<double> acc_overlap;
  /// acc_all − acc_clean; absent when there are no clean examples.
  std::optional<double> delta_all_clean;
  /// One-tailed P(X ≥ overlap hits) with the clean accuracy as the null rate.
  std::optional<double> binomial_p;
  std::optional<Band> overlap_interval;
  double confidence = 0.995;
  /// Set when the report cannot be fully computed (e.g. nothing is clean).
  std::string degenerate;
};

/// Throws on an empty input. With no clean examples the null accuracy is
/// undefined: the report comes back with `degenerate` set and no delta or p.
OverlapReport overlap_report(std::span<const OverlapExample> examples, double confidence = 0.995);

nlohmann::json to_json(const RobustnessFit& fit);
nlohmann::json to_json(const OverlapReport& report);
RobustnessPoint point_from_json(const nlohmann::json& j);

}  // namespace clip::analysis
