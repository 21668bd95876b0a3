#include "clip/analysis/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include <boost/math/special_functions/beta.hpp>

#include "clip/nd/rng.hpp"

namespace clip::analysis {

double logit(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::domain_error("logit needs an accuracy strictly inside (0, 1), got " + std::to_string(p));
  }
  return std::log(p / (1.0 - p));
}

double inverse_logit(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::string tag_name(PointTag tag) {
  switch (tag) {
    case PointTag::zeroshot: return "zeroshot";
    case PointTag::linear: return "linear";
    case PointTag::other: return "other";
  }
  return "other";
}

PointTag parse_tag(const std::string& name) {
  if (name == "zeroshot") return PointTag::zeroshot;
  if (name == "linear") return PointTag::linear;
  if (name == "other" || name.empty()) return PointTag::other;
  throw std::invalid_argument("unknown point tag '" + name + "' (zeroshot|linear|other)");
}

double RobustnessFit::predict(double in_dist_acc) const { return inverse_logit(predict_logit(logit(in_dist_acc))); }

std::pair<double, double> ols(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("ols: x and y lengths differ");
  if (x.size() < 2) throw std::invalid_argument("a line fit needs at least 2 points");
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  // Relative test: centred sums of identical values can leave ~1e-32 of noise.
  if (sxx <= 1e-24 * (1.0 + mx * mx) * n) throw std::invalid_argument("all in-distribution accuracies are equal");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty sample");
  if (q < 0.0 || q > 1.0) throw std::invalid_argument("percentile level outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

RobustnessFit fit_line(std::span<const RobustnessPoint> points, std::size_t resamples, std::uint64_t seed) {
  std::vector<RobustnessPoint> sorted(points.begin(), points.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    return std::tie(a.in_dist_acc, a.shift_acc, a.model) < std::tie(b.in_dist_acc, b.shift_acc, b.model);
  });
  std::vector<double> x, y;
  for (const auto& p : sorted) {
    x.push_back(logit(p.in_dist_acc));
    y.push_back(logit(p.shift_acc));
  }
  RobustnessFit fit;
  std::tie(fit.slope, fit.intercept) = ols(x, y);
  fit.resamples = resamples;
  fit.slope_band = {fit.slope, fit.slope};
  fit.intercept_band = {fit.intercept, fit.intercept};
  if (resamples == 0) return fit;

  nd::Rng rng(seed);
  std::vector<double> bx(x.size()), by(y.size()), slopes, intercepts;
  fit.draws.reserve(resamples);
  for (std::size_t r = 0; r < resamples; ++r) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const auto j = rng.index(x.size());
      bx[i] = x[j];
      by[i] = y[j];
    }
    try {
      fit.draws.push_back(ols(bx, by));
    } catch (const std::invalid_argument&) {
      ++fit.degenerate_resamples;  // every draw hit one x value
    }
  }
  if (fit.draws.empty()) return fit;
  for (const auto& [s, c] : fit.draws) {
    slopes.push_back(s);
    intercepts.push_back(c);
  }
  const double tail = (1.0 - fit.band_level) / 2.0;
  // A percentile band can miss a skewed point estimate; widen to cover it.
  fit.slope_band = {std::min(fit.slope, percentile(slopes, tail)), std::max(fit.slope, percentile(slopes, 1 - tail))};
  fit.intercept_band = {std::min(fit.intercept, percentile(intercepts, tail)),
                        std::max(fit.intercept, percentile(intercepts, 1 - tail))};
  return fit;
}

double effective_robustness(const RobustnessPoint& point, const RobustnessFit& baseline) {
  return point.shift_acc - baseline.predict(point.in_dist_acc);
}

std::string plot_csv(std::span<const RobustnessPoint> points, const RobustnessFit& fit, std::size_t grid) {
  if (points.empty()) throw std::invalid_argument("plot_csv: no points");
  if (grid < 2) throw std::invalid_argument("plot_csv: grid needs at least 2 values");
  std::ostringstream out;
  out << std::setprecision(17);
  out << "series,model,tag,logit_x,logit_y,band_low,band_high\n";
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& p : points) {
    const double x = logit(p.in_dist_acc);
    lo = std::min(lo, x);
    hi = std::max(hi, x);
    out << "point," << p.model << ',' << tag_name(p.tag) << ',' << x << ',' << logit(p.shift_acc) << ",,\n";
  }
  const double tail = (1.0 - fit.band_level) / 2.0;
  for (std::size_t g = 0; g < grid; ++g) {
    const double x = lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(grid - 1);
    const double y = fit.predict_logit(x);
    out << "fit,,," << x << ',' << y << ',';
    if (!fit.draws.empty()) {
      std::vector<double> ys;
      ys.reserve(fit.draws.size());
      for (const auto& [s, c] : fit.draws) ys.push_back(s * x + c);
      out << std::min(y, percentile(ys, tail)) << ',' << std::max(y, percentile(ys, 1 - tail));
    } else {
      out << y << ',' << y;
    }
    out << '\n';
  }
  return out.str();
}

double binomial_sf(std::size_t k, std::size_t n, double p) {
  if (k > n) throw std::invalid_argument("binomial_sf: k > n");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("binomial_sf: p outside [0, 1]");
  if (k == 0) return 1.0;
  if (p == 0.0) return 0.0;
  if (p == 1.0) return 1.0;
  const auto dn = static_cast<double>(n);
  double s = 0.0;
  if (n <= 62) {
    // C(n, i) is exact in 64 bits up to n = 62, so the only rounding is in the powers.
    std::uint64_t c = 1;
    for (std::size_t i = 0; i <= n; ++i) {
      if (i > 0) c = c / i * (n - i + 1) + c % i * (n - i + 1) / i;
      if (i >= k) {
        const auto di = static_cast<double>(i);
        s += static_cast<double>(c) * std::pow(p, di) * std::pow(1.0 - p, dn - di);
      }
    }
  } else {
    const double lp = std::log(p), lq = std::log1p(-p);
    const double lgn = std::lgamma(dn + 1.0);
    for (std::size_t i = k; i <= n; ++i) {
      const auto di = static_cast<double>(i);
      s += std::exp(lgn - std::lgamma(di + 1.0) - std::lgamma(dn - di + 1.0) + di * lp + (dn - di) * lq);
    }
  }
  return std::min(1.0, s);
}

std::pair<double, double> clopper_pearson(std::size_t k, std::size_t n, double confidence) {
  if (n == 0) throw std::invalid_argument("clopper_pearson: no trials");
  if (k > n) throw std::invalid_argument("clopper_pearson: more successes than trials");
  if (!(confidence > 0.0 && confidence < 1.0)) throw std::invalid_argument("confidence outside (0, 1)");
  const double half = (1.0 - confidence) / 2.0;
  const auto dk = static_cast<double>(k), dn = static_cast<double>(n);
  const double low = k == 0 ? 0.0 : boost::math::ibeta_inv(dk, dn - dk + 1.0, half);
  const double high = k == n ? 1.0 : boost::math::ibeta_inv(dk + 1.0, dn - dk, 1.0 - half);
  return {low, high};
}

double bonferroni(double p_value, std::size_t tests) {
  if (tests == 0) throw std::invalid_argument("bonferroni: zero tests");
  return std::min(1.0, p_value * static_cast<double>(tests));
}

OverlapReport overlap_report(std::span<const OverlapExample> examples, double confidence) {
  if (examples.empty()) throw std::invalid_argument("overlap_report: the evaluation set is empty");
  OverlapReport r;
  r.confidence = confidence;
  r.total = examples.size();
  std::size_t hits_all = 0, hits_overlap = 0, hits_clean = 0;
  for (const auto& e : examples) {
    hits_all += e.correct;
    if (e.overlap) {
      ++r.overlap_count;
      hits_overlap += e.correct;
    } else {
      ++r.clean_count;
      hits_clean += e.correct;
    }
  }
  const auto frac = [](std::size_t a, std::size_t b) { return static_cast<double>(a) / static_cast<double>(b); };
  r.contamination_ratio = frac(r.overlap_count, r.total);
  r.acc_all = frac(hits_all, r.total);
  if (r.clean_count) r.acc_clean = frac(hits_clean, r.clean_count);
  if (r.overlap_count) {
    r.acc_overlap = frac(hits_overlap, r.overlap_count);
    const auto [lo, hi] = clopper_pearson(hits_overlap, r.overlap_count, confidence);
    r.overlap_interval = Band{lo, hi};
  }
  if (!r.clean_count) {
    r.degenerate = "no clean examples: the null accuracy for the overlap test is undefined";
    return r;
  }
  r.delta_all_clean = r.acc_all - *r.acc_clean;
  r.binomial_p = r.overlap_count ? binomial_sf(hits_overlap, r.overlap_count, *r.acc_clean) : 1.0;
  return r;
}

namespace {

nlohmann::json band_json(const Band& b) { return {{"low", b.low}, {"high", b.high}}; }

template <typename T>
nlohmann::json opt(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

nlohmann::json to_json(const RobustnessFit& fit) {
  return {{"slope", fit.slope},
          {"intercept", fit.intercept},
          {"slope_band", band_json(fit.slope_band)},
          {"intercept_band", band_json(fit.intercept_band)},
          {"band_level", fit.band_level},
          {"resamples", fit.resamples},
          {"degenerate_resamples", fit.degenerate_resamples}};
}

nlohmann::json to_json(const OverlapReport& r) {
  nlohmann::json j{{"total", r.total},
                   {"overlap_count", r.overlap_count},
                   {"clean_count", r.clean_count},
                   {"contamination_ratio", r.contamination_ratio},
                   {"acc_all", r.acc_all},
                   {"acc_clean", opt(r.acc_clean)},
                   {"acc_overlap", opt(r.acc_overlap)},
                   {"delta_all_clean", opt(r.delta_all_clean)},
                   {"binomial_p", opt(r.binomial_p)},
                   {"confidence", r.confidence}};
  j["overlap_interval"] = r.overlap_interval ? band_json(*r.overlap_interval) : nlohmann::json(nullptr);
  if (!r.degenerate.empty()) j["degenerate"] = r.degenerate;
  return j;
}

RobustnessPoint point_from_json(const nlohmann::json& j) {
  RobustnessPoint p;
  p.model = j.value("model", "");
  p.in_dist_acc = j.at("in_dist_acc").get<double>();
  p.shift_acc = j.at("shift_acc").get<double>();
  p.tag = parse_tag(j.value("tag", "other"));
  logit(p.in_dist_acc);
  logit(p.shift_acc);
  return p;
}

}  // namespace clip::analysis
