#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "clip/encoders/encoders.hpp"
#include "clip/nd/autograd.hpp"
#include "clip/nd/optim.hpp"
#include "clip/nd/rng.hpp"
#include "clip/nd/serialize.hpp"

namespace clip::contrastive {

inline constexpr double kInitTemperature = 0.07;
inline constexpr double kMaxLogitScale = 100.0;

/// Linear maps from each tower's feature width into the shared embedding
/// space. No bias and no non-linearity.
struct JointProjection {
  nd::Var image;  // d_i × d_e
  nd::Var text;   // d_t × d_e

  static JointProjection create(std::size_t image_width, std::size_t text_width, std::size_t embed_dim,
                                nd::Rng& rng);
  std::size_t embed_dim() const { return image.value().cols(); }
  void collect(nd::ParamList& out) const;
};

/// Trainable log of the multiplier applied to cosine similarities.
struct LogitScale {
  nd::Var log_scale;  // shape {1}

  static LogitScale create(double initial = initial_log_scale());
  static double initial_log_scale();
  double log_value() const { return log_scale.value()[0]; }
  double value() const;
  void collect(nd::ParamList& out) const;
};

/// Largest t with exp(t) <= 100 in floating point; ln 100 itself overshoots by an ulp.
double max_log_scale();
/// min(t, max_log_scale()).
double clamp_log_scale(double log_scale);
/// Clamps in place; call after every optimizer step.
void clamp_logit_scale(LogitScale& scale);

/// features · W, then unit rows. A zero feature row is a std::domain_error.
nd::Var project_normalize(const nd::Var& features, const nd::Var& projection);

/// exp(t) · I_e · T_eᵀ.
nd::Var similarity_logits(const nd::Var& image_embeddings, const nd::Var& text_embeddings,
                          const nd::Var& log_scale);

/// Mean of the image→text and text→image cross-entropies with the diagonal as
/// the target. Non-square input is a nd::ShapeError.
nd::Var clip_loss(const nd::Var& logits);

/// Mean independent sigmoid cross-entropy of a linear head over image
/// features against binary bag-of-words targets. Non-binary targets throw.
nd::Var bow_loss(const nd::Var& image_features, const encoders::Linear& head, const nd::Tensor& targets);

struct ModelConfig {
  encoders::TextEncoderConfig text;
  encoders::ImageEncoderConfig image;
  std::size_t embed_dim = 64;

  void validate() const;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Both towers, the joint projection and the logit scale.
class ClipModel {
 public:
  ClipModel(const ModelConfig& config, nd::Rng& rng);

  /// Unit-norm joint embeddings, one row per input.
  nd::Var encode_images(std::span<const nd::Image> images) const;
  nd::Var encode_texts(std::span<const textproc::TokenSequence> texts) const;
  nd::Var loss(std::span<const nd::Image> images, std::span<const textproc::TokenSequence> texts) const;

  const ModelConfig& config() const { return config_; }
  const encoders::TextEncoder& text_encoder() const { return text_; }
  const encoders::ImageEncoder& image_encoder() const { return image_; }
  const JointProjection& projection() const { return projection_; }
  LogitScale& logit_scale() { return scale_; }
  const LogitScale& logit_scale() const { return scale_; }

  /// Every trainable tensor. Gains, biases, and the logit scale are excluded
  /// from weight decay.
  nd::ParamList parameters() const;

  /// Checkpoint whose meta carries the model config under "model" merged with `extra`.
  nd::Checkpoint checkpoint(const nlohmann::json& extra = nlohmann::json::object()) const;
  static ClipModel from_checkpoint(const nd::Checkpoint& ckpt);

 private:
  ModelConfig config_;
  encoders::TextEncoder text_;
  encoders::ImageEncoder image_;
  JointProjection projection_;
  LogitScale scale_;
};

}  // namespace clip::contrastive
