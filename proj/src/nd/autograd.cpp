#include "clip/nd/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>

namespace clip::nd {

Tensor& Node::grad_buffer() {
  if (grad.shape() != value.shape() || grad.size() != value.size()) grad = Tensor(value.shape());
  return grad;
}

Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = "constant";
  return Var(std::move(n));
}

Var parameter(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  n->op = "parameter";
  return Var(std::move(n));
}

namespace {

using Backward = std::function<void(Node&)>;

Var make_node(Tensor value, std::vector<Var> inputs, const char* op, Backward backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = op;
  for (const auto& in : inputs) n->requires_grad = n->requires_grad || in.requires_grad();
  if (n->requires_grad) {
    n->parents.reserve(inputs.size());
    for (const auto& in : inputs) n->parents.push_back(in.node());
    n->backward = std::move(backward);
  }
  return Var(std::move(n));
}

bool wants(const Node& self, std::size_t i) { return self.parents[i]->requires_grad; }
Tensor& pgrad(Node& self, std::size_t i) { return self.parents[i]->grad_buffer(); }
const Tensor& pval(const Node& self, std::size_t i) { return self.parents[i]->value; }

bool is_row_vector_for(const Tensor& b, const Tensor& a) {
  if (a.rank() < 1) return false;
  const auto c = a.cols();
  return (b.rank() == 1 && b.shape()[0] == c) || (b.rank() == 2 && b.shape()[0] == 1 && b.shape()[1] == c);
}

}  // namespace

std::vector<Tensor> grad(const Var& loss, std::span<const Var> wrt) {
  if (!loss.defined() || loss.value().size() != 1) {
    throw ShapeError("grad: loss must be a scalar, got shape " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  // Iterative post-order DFS yields a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  if (loss.requires_grad()) {
    std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
    seen.insert(loss.node().get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        Node* p = node->parents[next++].get();
        if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
  }
  for (Node* n : order) n->grad = Tensor();
  if (!order.empty()) {
    loss.node()->grad_buffer()[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backward && n->grad.size() == n->value.size()) n->backward(*n);
    }
  }
  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (const auto& v : wrt) {
    const auto& n = v.node();
    if (seen.count(n.get()) && n->grad.size() == n->value.size()) out.push_back(n->grad);
    else out.emplace_back(v.shape());
  }
  // Interior gradients are not needed after this call.
  for (Node* n : order) {
    if (!n->parents.empty()) n->grad = Tensor();
  }
  return out;
}

Var add(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() == bv.shape()) {
    Tensor out = av;
    add_inplace(out, bv);
    return make_node(std::move(out), {a, b}, "add", [](Node& self) {
      for (std::size_t i = 0; i < 2; ++i)
        if (wants(self, i)) add_inplace(pgrad(self, i), self.grad);
    });
  }
  if (!is_row_vector_for(bv, av)) {
    throw ShapeError("add: cannot combine " + shape_str(av.shape()) + " and " + shape_str(bv.shape()));
  }
  Tensor out = av;
  const auto r = av.rows(), c = av.cols();
  for (std::size_t i = 0; i < r; ++i) {
    double* row = out.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) row[j] += bv[j];
  }
  return make_node(std::move(out), {a, b}, "add_row", [r, c](Node& self) {
    if (wants(self, 0)) add_inplace(pgrad(self, 0), self.grad);
    if (wants(self, 1)) {
      Tensor& gb = pgrad(self, 1);
      for (std::size_t i = 0; i < r; ++i) {
        const double* g = self.grad.data() + i * c;
        for (std::size_t j = 0; j < c; ++j) gb[j] += g[j];
      }
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_node(std::move(out), {a, b}, "sub", [](Node& self) {
    if (wants(self, 0)) add_inplace(pgrad(self, 0), self.grad);
    if (wants(self, 1)) {
      Tensor& g = pgrad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_node(std::move(out), {a, b}, "mul", [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!wants(self, k)) continue;
      Tensor& g = pgrad(self, k);
      const Tensor& other = pval(self, 1 - k);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * other[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  Tensor out = a.value();
  for (auto& v : out.values()) v *= factor;
  return make_node(std::move(out), {a}, "scale", [factor](Node& self) {
    Tensor& g = pgrad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

Var mul_scalar(const Var& a, const Var& s) {
  if (s.value().size() != 1) {
    throw ShapeError("mul_scalar: scale must hold one value, got " + shape_str(s.shape()));
  }
  const double f = s.value()[0];
  Tensor out = a.value();
  for (auto& v : out.values()) v *= f;
  return make_node(std::move(out), {a, s}, "mul_scalar", [](Node& self) {
    const double f = pval(self, 1)[0];
    if (wants(self, 0)) {
      Tensor& g = pgrad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += f * self.grad[i];
    }
    if (wants(self, 1)) {
      const Tensor& av = pval(self, 0);
      double acc = 0.0;
      for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * self.grad[i];
      pgrad(self, 1)[0] += acc;
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  Tensor out;
  gemm_nn(a.value(), b.value(), out);
  return make_node(std::move(out), {a, b}, "matmul", [](Node& self) {
    Tensor tmp;
    if (wants(self, 0)) {
      gemm_nt(self.grad, pval(self, 1), tmp);
      add_inplace(pgrad(self, 0), tmp);
    }
    if (wants(self, 1)) {
      gemm_tn(pval(self, 0), self.grad, tmp);
      add_inplace(pgrad(self, 1), tmp);
    }
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  Tensor out;
  gemm_nt(a.value(), b.value(), out);
  return make_node(std::move(out), {a, b}, "matmul_nt", [](Node& self) {
    Tensor tmp;
    if (wants(self, 0)) {
      gemm_nn(self.grad, pval(self, 1), tmp);
      add_inplace(pgrad(self, 0), tmp);
    }
    if (wants(self, 1)) {
      gemm_tn(self.grad, pval(self, 0), tmp);
      add_inplace(pgrad(self, 1), tmp);
    }
  });
}

Var transpose(const Var& a) {
  return make_node(transpose(a.value()), {a}, "transpose", [](Node& self) {
    add_inplace(pgrad(self, 0), transpose(self.grad));
  });
}

Var exp(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = std::exp(v);
  return make_node(std::move(out), {a}, "exp", [](Node& self) {
    Tensor& g = pgrad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * self.value[i];
  });
}

Var log(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = std::log(v);
  return make_node(std::move(out), {a}, "log", [](Node& self) {
    Tensor& g = pgrad(self, 0);
    const Tensor& x = pval(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / x[i];
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Var gelu(const Var& a) {
  Tensor out = a.value();
  for (auto& x : out.values()) x = 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
  return make_node(std::move(out), {a}, "gelu", [](Node& self) {
    Tensor& g = pgrad(self, 0);
    const Tensor& xs = pval(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = xs[i];
      const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
      const double dt = (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
      g[i] += self.grad[i] * (0.5 * (1.0 + t) + 0.5 * x * dt);
    }
  });
}

Var softmax_rows(const Var& a) {
  Tensor out = a.value();
  const auto r = out.rows(), c = out.cols();
  for (std::size_t i = 0; i < r; ++i) {
    double* row = out.data() + i * c;
    const double m = *std::max_element(row, row + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += (row[j] = std::exp(row[j] - m));
    for (std::size_t j = 0; j < c; ++j) row[j] /= s;
  }
  return make_node(std::move(out), {a}, "softmax_rows", [r, c](Node& self) {
    Tensor& g = pgrad(self, 0);
    for (std::size_t i = 0; i < r; ++i) {
      const double* y = self.value.data() + i * c;
      const double* gy = self.grad.data() + i * c;
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += y[j] * gy[j];
      double* gx = g.data() + i * c;
      for (std::size_t j = 0; j < c; ++j) gx[j] += y[j] * (gy[j] - dot);
    }
  });
}

Var log_softmax_rows(const Var& a) {
  Tensor out = a.value();
  const auto r = out.rows(), c = out.cols();
  for (std::size_t i = 0; i < r; ++i) {
    double* row = out.data() + i * c;
    const double m = *std::max_element(row, row + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(row[j] - m);
    const double lse = m + std::log(s);
    for (std::size_t j = 0; j < c; ++j) row[j] -= lse;
  }
  return make_node(std::move(out), {a}, "log_softmax_rows", [r, c](Node& self) {
    Tensor& g = pgrad(self, 0);
    for (std::size_t i = 0; i < r; ++i) {
      const double* y = self.value.data() + i * c;
      const double* gy = self.grad.data() + i * c;
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) s += gy[j];
      double* gx = g.data() + i * c;
      for (std::size_t j = 0; j < c; ++j) gx[j] += gy[j] - std::exp(y[j]) * s;
    }
  });
}

Var layernorm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Tensor& xv = x.value();
  const auto r = xv.rows(), c = xv.cols();
  if (gain.value().size() != c || bias.value().size() != c) {
    throw ShapeError("layernorm: input " + shape_str(xv.shape()) + " with gain " +
                     shape_str(gain.shape()) + " and bias " + shape_str(bias.shape()));
  }
  Tensor xhat(xv.shape());
  std::vector<double> inv_std(r);
  Tensor out(xv.shape());
  const double* gn = gain.value().data();
  const double* bs = bias.value().data();
  for (std::size_t i = 0; i < r; ++i) {
    const double* xr = xv.data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += xr[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    double* hr = xhat.data() + i * c;
    double* orow = out.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) {
      hr[j] = (xr[j] - mu) * is;
      orow[j] = hr[j] * gn[j] + bs[j];
    }
  }
  return make_node(std::move(out), {x, gain, bias}, "layernorm",
                   [r, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                     const double* gn = pval(self, 1).data();
                     if (wants(self, 0)) {
                       Tensor& gx = pgrad(self, 0);
                       std::vector<double> gh(c);
                       for (std::size_t i = 0; i < r; ++i) {
                         const double* gy = self.grad.data() + i * c;
                         const double* hr = xhat.data() + i * c;
                         double mg = 0.0, mgh = 0.0;
                         for (std::size_t j = 0; j < c; ++j) {
                           gh[j] = gy[j] * gn[j];
                           mg += gh[j];
                           mgh += gh[j] * hr[j];
                         }
                         mg /= static_cast<double>(c);
                         mgh /= static_cast<double>(c);
                         double* gr = gx.data() + i * c;
                         for (std::size_t j = 0; j < c; ++j)
                           gr[j] += inv_std[i] * (gh[j] - mg - hr[j] * mgh);
                       }
                     }
                     if (wants(self, 1)) {
                       Tensor& gg = pgrad(self, 1);
                       for (std::size_t i = 0; i < r; ++i)
                         for (std::size_t j = 0; j < c; ++j)
                           gg[j] += self.grad.data()[i * c + j] * xhat.data()[i * c + j];
                     }
                     if (wants(self, 2)) {
                       Tensor& gb = pgrad(self, 2);
                       for (std::size_t i = 0; i < r; ++i)
                         for (std::size_t j = 0; j < c; ++j) gb[j] += self.grad.data()[i * c + j];
                     }
                   });
}

Var l2_normalize_rows(const Var& a) {
  Tensor out = a.value();
  const auto r = out.rows(), c = out.cols();
  std::vector<double> norms(r);
  for (std::size_t i = 0; i < r; ++i) {
    double* row = out.data() + i * c;
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += row[j] * row[j];
    if (!(s > 0.0)) {
      throw std::domain_error("l2_normalize_rows: row " + std::to_string(i) +
                              " has zero norm (undefined direction)");
    }
    norms[i] = std::sqrt(s);
    for (std::size_t j = 0; j < c; ++j) row[j] /= norms[i];
  }
  return make_node(std::move(out), {a}, "l2_normalize_rows",
                   [r, c, norms = std::move(norms)](Node& self) {
                     Tensor& g = pgrad(self, 0);
                     for (std::size_t i = 0; i < r; ++i) {
                       const double* y = self.value.data() + i * c;
                       const double* gy = self.grad.data() + i * c;
                       double dot = 0.0;
                       for (std::size_t j = 0; j < c; ++j) dot += y[j] * gy[j];
                       double* gx = g.data() + i * c;
                       for (std::size_t j = 0; j < c; ++j) gx[j] += (gy[j] - y[j] * dot) / norms[i];
                     }
                   });
}

Var gather_rows(const Var& table, std::span<const std::size_t> ids) {
  const Tensor& tv = table.value();
  require_matrix(tv, "gather_rows");
  const auto rows = tv.shape()[0], c = tv.shape()[1];
  Tensor out({ids.size(), c});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= rows) {
      throw std::out_of_range("gather_rows: index " + std::to_string(ids[i]) +
                              " out of range for " + std::to_string(rows) + " rows");
    }
    std::copy_n(tv.data() + ids[i] * c, c, out.data() + i * c);
  }
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  return make_node(std::move(out), {table}, "gather_rows", [c, idx = std::move(idx)](Node& self) {
    Tensor& g = pgrad(self, 0);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      double* dst = g.data() + idx[i] * c;
      const double* src = self.grad.data() + i * c;
      for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
    }
  });
}

Var mask_fill(const Var& a, std::span<const unsigned char> mask, double value) {
  if (mask.size() != a.value().size()) {
    throw ShapeError("mask_fill: mask of " + std::to_string(mask.size()) + " entries for tensor " +
                     shape_str(a.shape()));
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i)
    if (mask[i]) out[i] = value;
  std::vector<unsigned char> m(mask.begin(), mask.end());
  return make_node(std::move(out), {a}, "mask_fill", [m = std::move(m)](Node& self) {
    Tensor& g = pgrad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!m[i]) g[i] += self.grad[i];
  });
}

Var concat_rows(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "concat_rows");
  require_matrix(bv, "concat_rows");
  if (av.cols() != bv.cols()) {
    throw ShapeError("concat_rows: " + shape_str(av.shape()) + " and " + shape_str(bv.shape()));
  }
  Tensor out({av.rows() + bv.rows(), av.cols()});
  std::copy(av.values().begin(), av.values().end(), out.data());
  std::copy(bv.values().begin(), bv.values().end(), out.data() + av.size());
  const std::size_t split = av.size();
  return make_node(std::move(out), {a, b}, "concat_rows", [split](Node& self) {
    if (wants(self, 0)) {
      Tensor& g = pgrad(self, 0);
      for (std::size_t i = 0; i < split; ++i) g[i] += self.grad[i];
    }
    if (wants(self, 1)) {
      Tensor& g = pgrad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[split + i];
    }
  });
}

Var segment_mean(const Var& a, std::size_t groups) {
  const Tensor& av = a.value();
  require_matrix(av, "segment_mean");
  if (groups == 0 || av.rows() % groups != 0 || av.rows() == 0) {
    throw ShapeError("segment_mean: " + std::to_string(av.rows()) + " rows into " +
                     std::to_string(groups) + " groups");
  }
  const auto per = av.rows() / groups, c = av.cols();
  Tensor out({groups, c});
  for (std::size_t gi = 0; gi < groups; ++gi)
    for (std::size_t s = 0; s < per; ++s)
      for (std::size_t j = 0; j < c; ++j) out(gi, j) += av((gi * per + s), j);
  for (auto& v : out.values()) v /= static_cast<double>(per);
  return make_node(std::move(out), {a}, "segment_mean", [groups, per, c](Node& self) {
    Tensor& g = pgrad(self, 0);
    const double inv = 1.0 / static_cast<double>(per);
    for (std::size_t gi = 0; gi < groups; ++gi)
      for (std::size_t s = 0; s < per; ++s)
        for (std::size_t j = 0; j < c; ++j) g((gi * per + s), j) += self.grad(gi, j) * inv;
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return make_node(std::move(out), {a}, "reshape", [](Node& self) {
    add_inplace(pgrad(self, 0), self.grad);
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return make_node(Tensor::scalar(s), {a}, "sum", [](Node& self) {
    Tensor& g = pgrad(self, 0);
    const double gv = self.grad[0];
    for (auto& v : g.values()) v += gv;
  });
}

Var mean(const Var& a) {
  const auto n = static_cast<double>(a.value().size());
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), 1.0 / n);
}

Var attention(const Var& q, const Var& k, const Var& v, std::size_t batch, std::size_t heads,
              bool causal) {
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  require_matrix(qv, "attention");
  require_matrix(kv, "attention");
  require_matrix(vv, "attention");
  const auto d = qv.cols();
  if (kv.cols() != d || vv.cols() != d || kv.rows() != vv.rows() || batch == 0 ||
      qv.rows() % batch || kv.rows() % batch || heads == 0 || d % heads) {
    throw ShapeError("attention: q " + shape_str(qv.shape()) + ", k " + shape_str(kv.shape()) +
                     ", v " + shape_str(vv.shape()) + " with batch " + std::to_string(batch) +
                     " and " + std::to_string(heads) + " heads");
  }
  const auto tq = qv.rows() / batch, tk = kv.rows() / batch, dh = d / heads;
  if (causal && tq != tk) throw ShapeError("attention: causal mask needs equal query/key lengths");
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  // probs laid out as [batch][head][tq][tk]
  Tensor probs({batch * heads * tq * tk});
  Tensor out({qv.rows(), d});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      double* p = probs.data() + ((b * heads + h) * tq) * tk;
      for (std::size_t i = 0; i < tq; ++i) {
        const double* qi = qv.data() + (b * tq + i) * d + h * dh;
        double* pr = p + i * tk;
        const std::size_t lim = causal ? i + 1 : tk;
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < lim; ++j) {
          const double* kj = kv.data() + (b * tk + j) * d + h * dh;
          double s = 0.0;
          for (std::size_t e = 0; e < dh; ++e) s += qi[e] * kj[e];
          pr[j] = s * inv_sqrt;
          m = std::max(m, pr[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < lim; ++j) z += (pr[j] = std::exp(pr[j] - m));
        for (std::size_t j = 0; j < lim; ++j) pr[j] /= z;
        for (std::size_t j = lim; j < tk; ++j) pr[j] = 0.0;
        double* oi = out.data() + (b * tq + i) * d + h * dh;
        for (std::size_t j = 0; j < lim; ++j) {
          const double w = pr[j];
          const double* vj = vv.data() + (b * tk + j) * d + h * dh;
          for (std::size_t e = 0; e < dh; ++e) oi[e] += w * vj[e];
        }
      }
    }
  }
  return make_node(
      std::move(out), {q, k, v}, "attention",
      [batch, heads, tq, tk, d, dh, inv_sqrt, causal, probs = std::move(probs)](Node& self) {
        const Tensor& qv = pval(self, 0);
        const Tensor& kv = pval(self, 1);
        const Tensor& vv = pval(self, 2);
        const bool gq = wants(self, 0), gk = wants(self, 1), gv = wants(self, 2);
        Tensor* dq = gq ? &pgrad(self, 0) : nullptr;
        Tensor* dk = gk ? &pgrad(self, 1) : nullptr;
        Tensor* dv = gv ? &pgrad(self, 2) : nullptr;
        std::vector<double> dp(tk);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t h = 0; h < heads; ++h) {
            const double* p = probs.data() + ((b * heads + h) * tq) * tk;
            for (std::size_t i = 0; i < tq; ++i) {
              const double* pr = p + i * tk;
              const double* go = self.grad.data() + (b * tq + i) * d + h * dh;
              const std::size_t lim = causal ? i + 1 : tk;
              double dot = 0.0;
              for (std::size_t j = 0; j < lim; ++j) {
                const double* vj = vv.data() + (b * tk + j) * d + h * dh;
                double s = 0.0;
                for (std::size_t e = 0; e < dh; ++e) s += go[e] * vj[e];
                dp[j] = s;
                dot += s * pr[j];
                if (gv) {
                  double* dvj = dv->data() + (b * tk + j) * d + h * dh;
                  for (std::size_t e = 0; e < dh; ++e) dvj[e] += pr[j] * go[e];
                }
              }
              if (!gq && !gk) continue;
              const double* qi = qv.data() + (b * tq + i) * d + h * dh;
              double* dqi = gq ? dq->data() + (b * tq + i) * d + h * dh : nullptr;
              for (std::size_t j = 0; j < lim; ++j) {
                const double ds = pr[j] * (dp[j] - dot) * inv_sqrt;
                if (ds == 0.0) continue;
                const double* kj = kv.data() + (b * tk + j) * d + h * dh;
                if (gq)
                  for (std::size_t e = 0; e < dh; ++e) dqi[e] += ds * kj[e];
                if (gk) {
                  double* dkj = dk->data() + (b * tk + j) * d + h * dh;
                  for (std::size_t e = 0; e < dh; ++e) dkj[e] += ds * qi[e];
                }
              }
            }
          }
        }
      });
}

Var cross_entropy(const Var& logits, std::span<const std::size_t> targets) {
  const Tensor& lv = logits.value();
  require_matrix(lv, "cross_entropy");
  const auto n = lv.rows(), c = lv.cols();
  if (targets.size() != n || n == 0) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                     shape_str(lv.shape()));
  }
  Tensor probs(lv.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] >= c) throw std::out_of_range("cross_entropy: target out of range");
    const double* row = lv.data() + i * c;
    const double m = *std::max_element(row, row + c);
    double s = 0.0;
    double* pr = probs.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) s += (pr[j] = std::exp(row[j] - m));
    for (std::size_t j = 0; j < c; ++j) pr[j] /= s;
    // -(x_t - m - log s)
    total += (m + std::log(s)) - row[targets[i]];
  }
  std::vector<std::size_t> tg(targets.begin(), targets.end());
  return make_node(Tensor::scalar(total / static_cast<double>(n)), {logits}, "cross_entropy",
                   [n, c, tg = std::move(tg), probs = std::move(probs)](Node& self) {
                     Tensor& g = pgrad(self, 0);
                     const double f = self.grad[0] / static_cast<double>(n);
                     for (std::size_t i = 0; i < n; ++i) {
                       for (std::size_t j = 0; j < c; ++j) g(i, j) += f * probs(i, j);
                       g(i, tg[i]) -= f;
                     }
                   });
}

Var sigmoid_bce(const Var& logits, const Tensor& targets) {
  require_same_shape(logits.value(), targets, "sigmoid_bce");
  const Tensor& x = logits.value();
  const auto n = x.size();
  if (n == 0) throw ShapeError("sigmoid_bce: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total += std::max(x[i], 0.0) - x[i] * targets[i] + std::log1p(std::exp(-std::abs(x[i])));
  }
  return make_node(Tensor::scalar(total / static_cast<double>(n)), {logits}, "sigmoid_bce",
                   [n, targets](Node& self) {
                     Tensor& g = pgrad(self, 0);
                     const Tensor& x = pval(self, 0);
                     const double f = self.grad[0] / static_cast<double>(n);
                     for (std::size_t i = 0; i < n; ++i) {
                       const double sig = x[i] >= 0 ? 1.0 / (1.0 + std::exp(-x[i]))
                                                    : std::exp(x[i]) / (1.0 + std::exp(x[i]));
                       g[i] += f * (sig - targets[i]);
                     }
                   });
}

}  // namespace clip::nd
