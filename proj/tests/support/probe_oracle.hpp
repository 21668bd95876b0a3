#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "clip/nd/rng.hpp"
#include "clip/nd/tensor.hpp"

namespace clip::testing {

using nd::Tensor;

struct Problem {
  Tensor x;
  std::vector<std::size_t> y;
};

// Gaussian blobs around random class centres; `spread` controls overlap.
inline Problem blobs(nd::Rng& rng, std::size_t n, std::size_t d, std::size_t k, double spread) {
  Tensor centres({k, d});
  for (auto& v : centres.values()) v = rng.normal(0.0, 1.0);
  Problem p{Tensor({n, d}), std::vector<std::size_t>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    p.y[i] = i % k;
    for (std::size_t j = 0; j < d; ++j) p.x(i, j) = centres(p.y[i], j) + rng.normal(0.0, spread);
  }
  return p;
}

// Independent oracle: plain full-batch gradient descent with Armijo
// backtracking, using its own scalar-loop loss and gradient.
inline double gd_oracle(const Problem& p, std::size_t k, double lambda) {
  const std::size_t n = p.x.rows(), d = p.x.cols();
  std::vector<double> w(k * d, 0.0), b(k, 0.0);
  auto loss_grad = [&](const std::vector<double>& w, const std::vector<double>& b, std::vector<double>* gw,
                       std::vector<double>* gb) {
    double f = 0.0;
    if (gw) gw->assign(k * d, 0.0), gb->assign(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> z(k);
      double m = -1e300;
      for (std::size_t c = 0; c < k; ++c) {
        z[c] = b[c];
        for (std::size_t j = 0; j < d; ++j) z[c] += w[c * d + j] * p.x(i, j);
        m = std::max(m, z[c]);
      }
      double s = 0.0;
      for (double v : z) s += std::exp(v - m);
      f += m + std::log(s) - z[p.y[i]];
      if (gw)
        for (std::size_t c = 0; c < k; ++c) {
          const double g = (std::exp(z[c] - m) / s - (c == p.y[i])) / n;
          (*gb)[c] += g;
          for (std::size_t j = 0; j < d; ++j) (*gw)[c * d + j] += g * p.x(i, j);
        }
    }
    double sq = 0.0;
    for (std::size_t t = 0; t < w.size(); ++t) {
      sq += w[t] * w[t];
      if (gw) (*gw)[t] += 2 * lambda / n * w[t];
    }
    return f / n + lambda / n * sq;
  };
  std::vector<double> gw, gb;
  double f = loss_grad(w, b, &gw, &gb);
  for (int it = 0; it < 2000000; ++it) {
    double gn = 0.0;
    for (double v : gw) gn += v * v;
    for (double v : gb) gn += v * v;
    if (std::sqrt(gn) < 1e-8) break;
    double step = 4.0;
    for (;;) {
      std::vector<double> w2 = w, b2 = b;
      for (std::size_t t = 0; t < w.size(); ++t) w2[t] -= step * gw[t];
      for (std::size_t t = 0; t < b.size(); ++t) b2[t] -= step * gb[t];
      const double f2 = loss_grad(w2, b2, nullptr, nullptr);
      if (f2 <= f - 0.5 * step * gn) {
        w = std::move(w2), b = std::move(b2);
        break;
      }
      step *= 0.5;
    }
    f = loss_grad(w, b, &gw, &gb);
  }
  return f;
}

}  // namespace clip::testing
