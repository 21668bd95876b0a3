#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "clip/nd/autograd.hpp"

namespace clip::nd {

/// A named trainable leaf. Gains, biases and temperatures set `decay = false`.
struct Parameter {
  std::string name;
  Var var;
  bool decay = true;
};

using ParamList = std::vector<Parameter>;

std::vector<Var> vars_of(const ParamList& params);

/// AdamW hyperparameters, learning-rate schedule and moment buffers.
struct OptimizerState {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-6;
  double weight_decay = 0.2;
  double base_lr = 5e-4;
  std::int64_t warmup_steps = 2000;
  std::int64_t total_steps = 10000;

  /// Number of completed updates.
  std::int64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;

  /// Encoder-family defaults: ViT-style towers use β2 0.98 / ε 1e-6,
  /// everything else 0.999 / 1e-8.
  static OptimizerState for_vit();
  static OptimizerState for_resnet();
};

/// Learning rate at 0-based update index `step`: linear warmup from 0 to
/// base_lr over warmup_steps, then half-cosine decay to 0 at total_steps.
/// Steps past total_steps clamp to the final value.
double cosine_lr(std::int64_t step, const OptimizerState& state);

/// One AdamW update at the scheduled learning rate. Bias-corrected Adam
/// direction plus decoupled weight decay (θ ← θ − lr·wd·θ) on parameters with
/// `decay` set. Returns the learning rate used.
double adamw_step(OptimizerState& state, ParamList& params, std::span<const Tensor> grads);

}  // namespace clip::nd
