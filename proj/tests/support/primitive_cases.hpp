#pragma once

// One randomized input generator and graph builder per autograd primitive,
// shared by the unit suite and the acceptance runner.

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "gradcheck.hpp"

namespace clip::testing {

using nd::Tensor;
using nd::Var;

using Builder = std::function<Var(const std::vector<Var>&)>;

struct PrimitiveCase {
  const char* name;
  std::function<std::vector<Tensor>(nd::Rng&)> inputs;
  Builder build;
};

inline std::vector<PrimitiveCase> primitive_cases() {
  auto mat = [](nd::Rng& rng) {
    return std::pair<std::size_t, std::size_t>{1 + rng.index(5), 1 + rng.index(6)};
  };
  std::vector<PrimitiveCase> cases;
  cases.push_back({"add", [mat](nd::Rng& r) {
                     auto [a, b] = mat(r);
                     return std::vector{random_tensor(r, {a, b}), random_tensor(r, {a, b})};
                   },
                   [](const std::vector<Var>& v) { return nd::add(v[0], v[1]); }});
  cases.push_back({"add_row", [mat](nd::Rng& r) {
                     auto [a, b] = mat(r);
                     return std::vector{random_tensor(r, {a, b}), random_tensor(r, {b})};
                   },
                   [](const std::vector<Var>& v) { return nd::add(v[0], v[1]); }});
  cases.push_back({"sub", [mat](nd::Rng& r) {
                     auto [a, b] = mat(r);
                     return std::vector{random_tensor(r, {a, b}), random_tensor(r, {a, b})};
                   },
                   [](const std::vector<Var>& v) { return nd::sub(v[0], v[1]); }});
  cases.push_back({"mul", [mat](nd::Rng& r) {
                     auto [a, b] = mat(r);
                     return std::vector{random_tensor(r, {a, b}), random_tensor(r, {a, b})};
                   },
                   [](const std::vector<Var>& v) { return nd::mul(v[0], v[1]); }});
  cases.push_back({"mul_scalar", [mat](nd::Rng& r) {
                     auto [a, b] = mat(r);
                     return std::vector{random_tensor(r, {a, b}), random_tensor(r, {1})};
                   },
                   [](const std::vector<Var>& v) { return nd::mul_scalar(v[0], v[1]); }});
  cases.push_back({"matmul", [](nd::Rng& r) {
                     auto m = 1 + r.index(5), k = 1 + r.index(5), n = 1 + r.index(5);
                     return std::vector{random_tensor(r, {m, k}), random_tensor(r, {k, n})};
                   },
                   [](const std::vector<Var>& v) { return nd::matmul(v[0], v[1]); }});
  cases.push_back({"matmul_nt", [](nd::Rng& r) {
                     auto m = 1 + r.index(5), k = 1 + r.index(5), n = 1 + r.index(5);
                     return std::vector{random_tensor(r, {m, k}), random_tensor(r, {n, k})};
                   },
                   [](const std::vector<Var>& v) { return nd::matmul_nt(v[0], v[1]); }});
  cases.push_back({"transpose", [mat](nd::Rng& r) {
                     auto [a, b] = mat(r);
                     return std::vector{random_tensor(r, {a, b})};
                   },
                   [](const std::vector<Var>& v) { return nd::transpose(v[0]); }});
  cases.push_back({"exp", [mat](nd::Rng& r) {
                     auto [a, b] = mat(r);
                     return std::vector{random_tensor(r, {a, b})};
                   },
                   [](const std::vector<Var>& v) { return nd::exp(v[0]); }});
  cases.push_back({"log", [mat](nd::Rng& r) {
                     auto [a, b] = mat(r);
                     auto t = random_tensor(r, {a, b});
                     for (auto& x : t.values()) x = 0.5 + std::abs(x);
                     return std::vector{t};
                   },
                   [](const std::vector<Var>& v) { return nd::log(v[0]); }});
  cases.push_back({"gelu", [mat](nd::Rng& r) {
                     auto [a, b] = mat(r);
                     return std::vector{random_tensor(r, {a, b}, 2.0)};
                   },
                   [](const std::vector<Var>& v) { return nd::gelu(v[0]); }});
  cases.push_back({"softmax_rows", [mat](nd::Rng& r) {
                     auto [a, b] = mat(r);
                     return std::vector{random_tensor(r, {a, b}, 2.0)};
                   },
                   [](const std::vector<Var>& v) { return nd::softmax_rows(v[0]); }});
  cases.push_back({"log_softmax_rows", [mat](nd::Rng& r) {
                     auto [a, b] = mat(r);
                     return std::vector{random_tensor(r, {a, b}, 2.0)};
                   },
                   [](const std::vector<Var>& v) { return nd::log_softmax_rows(v[0]); }});
  cases.push_back({"layernorm", [](nd::Rng& r) {
                     auto a = 1 + r.index(5), b = 2 + r.index(6);
                     return std::vector{random_tensor(r, {a, b}), random_tensor(r, {b}),
                                        random_tensor(r, {b})};
                   },
                   [](const std::vector<Var>& v) { return nd::layernorm(v[0], v[1], v[2]); }});
  cases.push_back({"l2_normalize_rows", [mat](nd::Rng& r) {
                     auto [a, b] = mat(r);
                     return std::vector{random_tensor(r, {a, b})};
                   },
                   [](const std::vector<Var>& v) { return nd::l2_normalize_rows(v[0]); }});
  cases.push_back({"gather_rows", [mat](nd::Rng& r) {
                     auto [a, b] = mat(r);
                     return std::vector{random_tensor(r, {a, b})};
                   },
                   [](const std::vector<Var>& v) {
                     const auto rows = v[0].shape()[0];
                     std::vector<std::size_t> ids{0, rows - 1, rows / 2, 0};
                     return nd::gather_rows(v[0], ids);
                   }});
  cases.push_back({"mask_fill", [mat](nd::Rng& r) {
                     auto [a, b] = mat(r);
                     return std::vector{random_tensor(r, {a, b})};
                   },
                   [](const std::vector<Var>& v) {
                     std::vector<unsigned char> m(v[0].value().size());
                     for (std::size_t i = 0; i < m.size(); ++i) m[i] = (i % 3 == 1);
                     return nd::mask_fill(v[0], m, -7.0);
                   }});
  cases.push_back({"concat_rows", [](nd::Rng& r) {
                     auto a = 1 + r.index(4), b = 1 + r.index(4), c = 1 + r.index(5);
                     return std::vector{random_tensor(r, {a, c}), random_tensor(r, {b, c})};
                   },
                   [](const std::vector<Var>& v) { return nd::concat_rows(v[0], v[1]); }});
  cases.push_back({"segment_mean", [](nd::Rng& r) {
                     auto g = 1 + r.index(3), s = 1 + r.index(4), c = 1 + r.index(5);
                     return std::vector{random_tensor(r, {g * s, c}), Tensor::scalar(double(g))};
                   },
                   [](const std::vector<Var>& v) {
                     return nd::segment_mean(v[0], static_cast<std::size_t>(v[1].value().item()));
                   }});
  cases.push_back({"reshape", [mat](nd::Rng& r) {
                     auto [a, b] = mat(r);
                     return std::vector{random_tensor(r, {a, b})};
                   },
                   [](const std::vector<Var>& v) { return nd::reshape(v[0], {v[0].value().size()}); }});
  cases.push_back({"attention", [](nd::Rng& r) {
                     auto b = 1 + r.index(3), t = 1 + r.index(4), h = 1 + r.index(2), dh = 1 + r.index(3);
                     auto d = h * dh;
                     return std::vector{random_tensor(r, {b * t, d}), random_tensor(r, {b * t, d}),
                                        random_tensor(r, {b * t, d}), Tensor::vector({double(b), double(h)})};
                   },
                   [](const std::vector<Var>& v) {
                     const auto b = static_cast<std::size_t>(v[3].value()[0]);
                     const auto h = static_cast<std::size_t>(v[3].value()[1]);
                     return nd::attention(v[0], v[1], v[2], b, h, false);
                   }});
  cases.push_back({"attention_causal", [](nd::Rng& r) {
                     auto b = 1 + r.index(3), t = 1 + r.index(4), h = 1 + r.index(2), dh = 1 + r.index(3);
                     auto d = h * dh;
                     return std::vector{random_tensor(r, {b * t, d}), random_tensor(r, {b * t, d}),
                                        random_tensor(r, {b * t, d}), Tensor::vector({double(b), double(h)})};
                   },
                   [](const std::vector<Var>& v) {
                     const auto b = static_cast<std::size_t>(v[3].value()[0]);
                     const auto h = static_cast<std::size_t>(v[3].value()[1]);
                     return nd::attention(v[0], v[1], v[2], b, h, true);
                   }});
  cases.push_back({"cross_entropy", [](nd::Rng& r) {
                     auto n = 1 + r.index(5), c = 1 + r.index(5);
                     Tensor tg({n});
                     for (auto& x : tg.values()) x = double(r.index(c));
                     return std::vector{random_tensor(r, {n, c}, 2.0), tg};
                   },
                   [](const std::vector<Var>& v) {
                     std::vector<std::size_t> t;
                     for (double x : v[1].value().values()) t.push_back(static_cast<std::size_t>(x));
                     return nd::cross_entropy(v[0], t);
                   }});
  cases.push_back({"sigmoid_bce", [mat](nd::Rng& r) {
                     auto [a, b] = mat(r);
                     Tensor tg({a, b});
                     for (auto& x : tg.values()) x = double(r.index(2));
                     return std::vector{random_tensor(r, {a, b}, 3.0), tg};
                   },
                   [](const std::vector<Var>& v) { return nd::sigmoid_bce(v[0], v[1].value()); }});
  return cases;
}


/// Integer/config payloads ride along as trailing inputs; only float operands are checked.
inline bool has_payload_input(const std::string& name) {
  return name == "segment_mean" || name.starts_with("attention") || name == "cross_entropy" || name == "sigmoid_bce";
}

/// Worst relative error over `trials` random shapes of one primitive.
inline double primitive_worst_error(const PrimitiveCase& pc, int trials = 20) {
  nd::Rng rng(std::hash<std::string>{}(pc.name) & 0xFFFF);
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    auto tensors = pc.inputs(rng);
    std::vector<Var> vars;
    for (auto& t : tensors) vars.push_back(nd::parameter(t));
    std::vector<Var> checked = vars;
    if (has_payload_input(pc.name)) checked.pop_back();
    auto fn = [&] {
      Var y = pc.build(vars);
      return y.value().size() == 1 ? y : probe_sum(y);
    };
    worst = std::max(worst, gradcheck(fn, checked).max_rel_err);
  }
  return worst;
}

}  // namespace clip::testing
