#include "clip/nd/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace clip::nd {

std::vector<Var> vars_of(const ParamList& params) {
  std::vector<Var> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.var);
  return out;
}

OptimizerState OptimizerState::for_vit() {
  OptimizerState s;
  s.beta2 = 0.98;
  s.eps = 1e-6;
  return s;
}

OptimizerState OptimizerState::for_resnet() {
  OptimizerState s;
  s.beta2 = 0.999;
  s.eps = 1e-8;
  return s;
}

double cosine_lr(std::int64_t step, const OptimizerState& state) {
  const auto total = std::max<std::int64_t>(state.total_steps, 0);
  const auto warm = std::clamp<std::int64_t>(state.warmup_steps, 0, total);
  step = std::clamp<std::int64_t>(step, 0, total);
  if (step < warm) {
    return state.base_lr * static_cast<double>(step) / static_cast<double>(warm);
  }
  const auto span = total - warm;
  if (span <= 0) return step >= total && total > 0 ? 0.0 : state.base_lr;
  const double progress = static_cast<double>(step - warm) / static_cast<double>(span);
  return 0.5 * state.base_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

double adamw_step(OptimizerState& state, ParamList& params, std::span<const Tensor> grads) {
  if (grads.size() != params.size()) {
    throw ShapeError("adamw_step: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.size()) + " parameters");
  }
  if (state.first_moment.size() != params.size()) {
    state.first_moment.clear();
    state.second_moment.clear();
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.var.shape());
      state.second_moment.emplace_back(p.var.shape());
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].var.shape()) {
      throw ShapeError("adamw_step: parameter '" + params[i].name + "' has shape " +
                       shape_str(params[i].var.shape()) + " but gradient " +
                       shape_str(grads[i].shape()));
    }
  }

  const double lr = cosine_lr(state.step, state);
  const double t = static_cast<double>(state.step + 1);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& theta = params[i].var.mutable_value();
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    const Tensor& g = grads[i];
    const double wd = params[i].decay ? state.weight_decay : 0.0;
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      theta[j] -= lr * (mhat / (std::sqrt(vhat) + state.eps) + wd * theta[j]);
    }
  }
  ++state.step;
  return lr;
}

}  // namespace clip::nd
