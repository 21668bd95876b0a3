#include "clip/probe/probe.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

namespace clip::probe {

namespace {

using Vec = std::vector<double>;

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

void check_inputs(const nd::Tensor& x, std::span<const std::size_t> y, std::size_t k) {
  nd::require_matrix(x, "probe features");
  if (x.rows() != y.size()) {
    throw nd::ShapeError("probe: " + std::to_string(x.rows()) + " feature rows for " + std::to_string(y.size()) +
                         " labels");
  }
  for (auto label : y)
    if (label >= k) throw std::out_of_range("probe: label " + std::to_string(label) + " outside " + std::to_string(k) + " classes");
}

// logits = X · Wᵀ + b, then in-place softmax. Returns the mean cross-entropy.
double softmax_ce(const nd::Tensor& x, std::span<const std::size_t> y, const nd::Tensor& w,
                  std::span<const double> b, nd::Tensor& probs) {
  nd::gemm_nt(x, w, probs);
  const std::size_t n = x.rows(), k = w.rows();
  double ce = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto r = probs.row(i);
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) m = std::max(m, r[c] += b[c]);
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) z += std::exp(r[c] - m);
    const double lse = m + std::log(z);
    if (!y.empty()) ce += lse - r[y[i]];
    for (std::size_t c = 0; c < k; ++c) r[c] = std::exp(r[c] - lse);
  }
  return n ? ce / static_cast<double>(n) : 0.0;
}

struct Problem {
  const nd::Tensor& x;
  std::span<const std::size_t> y;
  std::size_t k, d;
  double lambda;

  std::size_t size() const { return k * d + k; }

  void unpack(const Vec& theta, nd::Tensor& w, Vec& b) const {
    w = nd::Tensor({k, d}, Vec(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(k * d)));
    b.assign(theta.begin() + static_cast<std::ptrdiff_t>(k * d), theta.end());
  }

  double eval(const Vec& theta, Vec& grad) const {
    nd::Tensor w, gw;
    Vec b, gb;
    unpack(theta, w, b);
    const double f = objective(x, y, w, b, lambda, &gw, &gb);
    grad.assign(gw.values().begin(), gw.values().end());
    grad.insert(grad.end(), gb.begin(), gb.end());
    return f;
  }
};

// Minimizer of the cubic through (a, fa, ga) and (b, fb, gb), safeguarded into the bracket.
double cubic_step(double a, double fa, double ga, double b, double fb, double gb) {
  const double d1 = ga + gb - 3 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - ga * gb;
  const double lo = std::min(a, b), hi = std::max(a, b);
  if (disc >= 0) {
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    const double t = b - (b - a) * (gb + d2 - d1) / (gb - ga + 2 * d2);
    const double margin = 0.1 * (hi - lo);
    if (std::isfinite(t) && t > lo + margin && t < hi - margin) return t;
  }
  return 0.5 * (a + b);
}

struct LineSearchResult {
  double step = 0.0;
  double f = 0.0;
  Vec theta, grad;
  bool ok = false;
};

LineSearchResult strong_wolfe(const Problem& p, const Vec& theta, double f0, const Vec& g0, const Vec& dir,
                              double initial_step) {
  constexpr double c1 = 1e-4, c2 = 0.9;
  const double dg0 = dot(g0, dir);
  LineSearchResult best;
  auto at = [&](double a, LineSearchResult& r) {
    r.step = a;
    r.theta = theta;
    for (std::size_t i = 0; i < theta.size(); ++i) r.theta[i] += a * dir[i];
    r.f = p.eval(r.theta, r.grad);
    return dot(r.grad, dir);
  };
  auto zoom = [&](double lo, double flo, double glo, double hi, double fhi, double ghi) {
    LineSearchResult r;
    for (int it = 0; it < 30; ++it) {
      const double a = cubic_step(lo, flo, glo, hi, fhi, ghi);
      const double ga = at(a, r);
      if (r.f > f0 + c1 * a * dg0 || r.f >= flo) {
        hi = a, fhi = r.f, ghi = ga;
      } else {
        if (std::abs(ga) <= -c2 * dg0) {
          r.ok = true;
          return r;
        }
        if (ga * (hi - lo) >= 0) hi = lo, fhi = flo, ghi = glo;
        lo = a, flo = r.f, glo = ga;
      }
      if (std::abs(hi - lo) < 1e-16) break;
    }
    // Accept any sufficient decrease found while bracketing.
    r.ok = r.f < f0;
    return r;
  };
  double prev = 0.0, fprev = f0, gprev = dg0;
  double a = initial_step;
  for (int it = 0; it < 40; ++it) {
    LineSearchResult r;
    const double ga = at(a, r);
    if (r.f > f0 + c1 * a * dg0 || (it > 0 && r.f >= fprev)) return zoom(prev, fprev, gprev, a, r.f, ga);
    if (std::abs(ga) <= -c2 * dg0) {
      r.ok = true;
      return r;
    }
    if (ga >= 0) return zoom(a, r.f, ga, prev, fprev, gprev);
    prev = a, fprev = r.f, gprev = ga;
    a *= 2.0;
  }
  return best;
}

}  // namespace

double objective(const nd::Tensor& x, std::span<const std::size_t> y, const nd::Tensor& w, std::span<const double> b,
                 double lambda, nd::Tensor* grad_w, std::vector<double>* grad_b) {
  nd::require_matrix(w, "probe weights");
  if (w.cols() != x.cols() || b.size() != w.rows()) {
    throw nd::ShapeError("probe objective: features " + nd::shape_str(x.shape()) + ", weights " +
                         nd::shape_str(w.shape()) + ", bias of " + std::to_string(b.size()));
  }
  const std::size_t n = x.rows(), k = w.rows();
  nd::Tensor probs;
  double f = softmax_ce(x, y, w, b, probs);
  double sq = 0.0;
  for (double v : w.values()) sq += v * v;
  const double reg = lambda / static_cast<double>(n);
  f += reg * sq;
  if (grad_w || grad_b) {
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      probs(i, y[i]) -= 1.0;
      for (auto& v : probs.row(i)) v *= inv_n;
    }
    if (grad_w) {
      nd::gemm_tn(probs, x, *grad_w);
      for (std::size_t i = 0; i < w.size(); ++i) (*grad_w)[i] += 2.0 * reg * w[i];
    }
    if (grad_b) {
      grad_b->assign(k, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < k; ++c) (*grad_b)[c] += probs(i, c);
    }
  }
  return f;
}

double data_loss(const ProbeModel& model, const nd::Tensor& x, std::span<const std::size_t> y) {
  check_inputs(x, y, model.num_classes());
  nd::Tensor probs;
  return softmax_ce(x, y, model.weights, model.bias, probs);
}

FitResult fit_logreg(const nd::Tensor& x, std::span<const std::size_t> y, double lambda, std::size_t num_classes,
                     const FitOptions& options, const ProbeModel* init) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("fit_logreg: lambda must be positive");
  if (y.empty()) throw std::invalid_argument("fit_logreg: no examples");
  const std::size_t k = num_classes ? num_classes : *std::max_element(y.begin(), y.end()) + 1;
  check_inputs(x, y, k);
  if (!x.all_finite()) throw std::invalid_argument("fit_logreg: features contain non-finite values");
  if (std::all_of(y.begin(), y.end(), [&](std::size_t v) { return v == y[0]; })) {
    throw std::invalid_argument("fit_logreg: every example has label " + std::to_string(y[0]));
  }
  if (k < 2 || x.rows() < k) {
    throw std::invalid_argument("fit_logreg: need N >= K >= 2, got N=" + std::to_string(x.rows()) +
                                ", K=" + std::to_string(k));
  }
  const Problem p{x, y, k, x.cols(), lambda};
  Vec theta(p.size(), 0.0);
  if (init) {
    if (init->weights.shape() != nd::Shape{k, x.cols()} || init->bias.size() != k) {
      throw nd::ShapeError("fit_logreg: initial model does not match the problem");
    }
    std::copy(init->weights.values().begin(), init->weights.values().end(), theta.begin());
    std::copy(init->bias.begin(), init->bias.end(), theta.begin() + static_cast<std::ptrdiff_t>(k * x.cols()));
  }
  Vec grad;
  double f = p.eval(theta, grad);
  std::deque<std::pair<Vec, Vec>> history;  // (s, y) pairs
  FitResult out;
  std::size_t it = 0;
  while (it < options.max_iterations && norm(grad) >= options.gradient_tolerance) {
    // Two-loop recursion.
    Vec q = grad;
    std::vector<double> alpha(history.size());
    for (std::size_t i = history.size(); i-- > 0;) {
      const auto& [s, yv] = history[i];
      alpha[i] = dot(s, q) / dot(yv, s);
      for (std::size_t j = 0; j < q.size(); ++j) q[j] -= alpha[i] * yv[j];
    }
    if (!history.empty()) {
      const auto& [s, yv] = history.back();
      const double gamma = dot(s, yv) / dot(yv, yv);
      for (auto& v : q) v *= gamma;
    }
    for (std::size_t i = 0; i < history.size(); ++i) {
      const auto& [s, yv] = history[i];
      const double beta = dot(yv, q) / dot(yv, s);
      for (std::size_t j = 0; j < q.size(); ++j) q[j] += s[j] * (alpha[i] - beta);
    }
    Vec dir(q.size());
    for (std::size_t j = 0; j < q.size(); ++j) dir[j] = -q[j];
    if (dot(dir, grad) >= 0) {
      history.clear();
      for (std::size_t j = 0; j < q.size(); ++j) dir[j] = -grad[j];
    }
    const double first = history.empty() ? std::min(1.0, 1.0 / norm(grad)) : 1.0;
    auto ls = strong_wolfe(p, theta, f, grad, dir, first);
    ++it;
    if (!ls.ok) break;
    Vec s(theta.size()), yv(theta.size());
    for (std::size_t j = 0; j < theta.size(); ++j) {
      s[j] = ls.theta[j] - theta[j];
      yv[j] = ls.grad[j] - grad[j];
    }
    theta = std::move(ls.theta);
    grad = std::move(ls.grad);
    f = ls.f;
    if (dot(s, yv) > 1e-12 * norm(s) * norm(yv)) {
      history.emplace_back(std::move(s), std::move(yv));
      if (history.size() > options.history) history.pop_front();
    }
  }
  p.unpack(theta, out.model.weights, out.model.bias);
  out.model.lambda = lambda;
  out.loss = f;
  out.gradient_norm = norm(grad);
  out.iterations = it;
  out.converged = out.gradient_norm < options.gradient_tolerance;
  return out;
}

nd::Tensor predict_proba(const ProbeModel& model, const nd::Tensor& x) {
  nd::require_matrix(x, "probe features");
  if (x.cols() != model.weights.cols()) {
    throw nd::ShapeError("predict_proba: features " + nd::shape_str(x.shape()) + " for weights " +
                         nd::shape_str(model.weights.shape()));
  }
  nd::Tensor probs;
  softmax_ce(x, {}, model.weights, model.bias, probs);
  return probs;
}

std::vector<std::size_t> predict(const ProbeModel& model, const nd::Tensor& x) {
  const auto p = predict_proba(model, x);
  std::vector<std::size_t> out(p.rows());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    const auto r = p.row(i);
    out[i] = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> lambda_grid() {
  std::vector<double> out(kGridSize);
  for (std::size_t k = 0; k < kGridSize; ++k) out[k] = std::pow(10.0, -6.0 + static_cast<double>(k) / 8.0);
  return out;
}

std::vector<std::size_t> sweep_seed_indices() { return {0, 16, 32, 48, 64, 80, kGridSize - 1}; }

SweepResult sweep_grid(const std::function<double(std::size_t)>& score_at) {
  const auto grid = lambda_grid();
  std::map<std::size_t, double> scores;
  SweepResult out;
  auto visit = [&](std::size_t k) {
    if (scores.count(k)) return;
    const double s = score_at(k);
    scores[k] = s;
    out.evaluated.push_back({k, grid[k], s});
  };
  for (auto k : sweep_seed_indices()) visit(k);
  auto peak = [&] {
    // Strictly greater wins, so equal scores keep the smaller index.
    auto best = scores.begin();
    for (auto it = scores.begin(); it != scores.end(); ++it)
      if (it->second > best->second) best = it;
    return best->first;
  };
  for (;;) {
    const auto p = peak();
    auto it = scores.find(p);
    bool refined = false;
    if (it != scores.begin()) {
      const auto left = std::prev(it)->first;
      if (p - left > 1) {
        visit((left + p) / 2);
        refined = true;
      }
    }
    if (std::next(it) != scores.end()) {
      const auto right = std::next(it)->first;
      if (right - p > 1) {
        visit((p + right) / 2);
        refined = true;
      }
    }
    if (!refined) break;
  }
  out.chosen_index = peak();
  out.chosen_lambda = grid[out.chosen_index];
  out.chosen_score = scores[out.chosen_index];
  return out;
}

MetricKind parse_metric(const std::string& name) {
  if (name == "accuracy") return MetricKind::accuracy;
  if (name == "mean_per_class") return MetricKind::mean_per_class;
  if (name == "roc_auc") return MetricKind::roc_auc;
  throw std::invalid_argument("unknown metric '" + name + "' (accuracy, mean_per_class, roc_auc)");
}

std::string metric_name(MetricKind kind) {
  switch (kind) {
    case MetricKind::accuracy: return "accuracy";
    case MetricKind::mean_per_class: return "mean_per_class";
    case MetricKind::roc_auc: return "roc_auc";
  }
  return "?";
}

double roc_auc(std::span<const double> scores, std::span<const std::size_t> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("roc_auc: score and label counts differ");
  std::size_t pos = 0;
  for (auto l : labels) {
    if (l > 1) throw std::invalid_argument("roc_auc: labels must be 0 or 1");
    pos += l;
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw std::invalid_argument("roc_auc: needs both classes present");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t)
      if (labels[order[t]]) rank_sum += mid;
    i = j;
  }
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (rank_sum - p * (p + 1) / 2) / (p * q);
}

double metric(MetricKind kind, const nd::Tensor& scores, std::span<const std::size_t> labels) {
  nd::require_matrix(scores, "metric scores");
  if (scores.rows() != labels.size() || labels.empty()) {
    throw std::invalid_argument("metric: " + std::to_string(scores.rows()) + " score rows for " +
                                std::to_string(labels.size()) + " labels");
  }
  if (kind == MetricKind::roc_auc) {
    if (scores.cols() != 2) throw std::invalid_argument("roc_auc needs two-class scores");
    std::vector<double> s(scores.rows());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = scores(i, 1);
    return roc_auc(s, labels);
  }
  const std::size_t k = scores.cols();
  std::vector<std::size_t> hits(k, 0), totals(k, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= k) throw std::out_of_range("metric: label outside score columns");
    const auto r = scores.row(i);
    const auto pred = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
    ++totals[labels[i]];
    if (pred == labels[i]) ++hits[labels[i]], ++correct;
  }
  if (kind == MetricKind::accuracy) return static_cast<double>(correct) / static_cast<double>(labels.size());
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < k; ++c)
    if (totals[c]) sum += static_cast<double>(hits[c]) / static_cast<double>(totals[c]), ++present;
  return sum / static_cast<double>(present);
}

SweepResult sweep_lambda(const LabeledFeatures& train, const LabeledFeatures& val, MetricKind kind,
                         std::size_t num_classes, const FitOptions& options) {
  if (val.y.empty()) throw std::invalid_argument("sweep_lambda: validation split is empty");
  const auto grid = lambda_grid();
  const std::size_t k =
      num_classes ? num_classes
                  : std::max(*std::max_element(train.y.begin(), train.y.end()),
                             *std::max_element(val.y.begin(), val.y.end())) + 1;
  return sweep_grid([&](std::size_t index) {
    const auto fit = fit_logreg(train.x, train.y, grid[index], k, options);
    return metric(kind, predict_proba(fit.model, val.x), val.y);
  });
}

ProtocolResult run_protocol(const LabeledFeatures& train, const LabeledFeatures& val, const LabeledFeatures& test,
                            MetricKind kind, std::size_t num_classes, const FitOptions& options) {
  std::size_t k = num_classes;
  if (!k) {
    for (const auto* split : {&train, &val, &test})
      for (auto l : split->y) k = std::max(k, l + 1);
  }
  ProtocolResult out;
  out.sweep = sweep_lambda(train, val, kind, k, options);
  nd::require_matrix(val.x, "validation features");
  if (train.x.cols() != val.x.cols()) throw nd::ShapeError("train and validation feature widths differ");
  std::vector<double> joined(train.x.values().begin(), train.x.values().end());
  joined.insert(joined.end(), val.x.values().begin(), val.x.values().end());
  LabeledFeatures all{nd::Tensor({train.x.rows() + val.x.rows(), train.x.cols()}, std::move(joined)), train.y};
  all.y.insert(all.y.end(), val.y.begin(), val.y.end());
  out.model = fit_logreg(all.x, all.y, out.sweep.chosen_lambda, k, options).model;
  out.test_score = metric(kind, predict_proba(out.model, test.x), test.y);
  return out;
}

}  // namespace clip::probe
