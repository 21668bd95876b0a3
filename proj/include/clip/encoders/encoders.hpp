#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clip/nd/autograd.hpp"
#include "clip/nd/image.hpp"
#include "clip/nd/optim.hpp"
#include "clip/nd/rng.hpp"
#include "clip/textproc/bpe.hpp"

namespace clip::encoders {

struct TextEncoderConfig {
  std::size_t layers = 2;
  std::size_t width = 64;
  std::size_t heads = 4;
  std::size_t context_length = 16;
  std::size_t vocab_size = textproc::kDefaultVocabSize;

  void validate() const;
};

enum class Pooling { class_token, attention };

struct ImageEncoderConfig {
  std::size_t image_size = 32;
  std::size_t patch_size = 8;
  std::size_t channels = 3;
  std::size_t layers = 2;
  std::size_t width = 64;
  std::size_t heads = 4;
  /// Layer norm on the combined patch + position embeddings before the
  /// transformer. Off only for ablations.
  bool pre_layernorm = true;
  Pooling pooling = Pooling::class_token;

  void validate() const;
  std::size_t patches_per_side() const { return image_size / patch_size; }
  std::size_t num_patches() const { return patches_per_side() * patches_per_side(); }
  /// Patches plus the class token.
  std::size_t sequence_length() const { return num_patches() + 1; }
  std::size_t patch_dim() const { return patch_size * patch_size * channels; }
};

struct LayerNorm {
  nd::Var gain;
  nd::Var bias;

  static LayerNorm create(std::size_t width);
  nd::Var operator()(const nd::Var& x) const;
  void collect(const std::string& prefix, nd::ParamList& out) const;
};

struct Linear {
  nd::Var weight;  // in × out
  nd::Var bias;    // out, may be undefined

  static Linear create(std::size_t in, std::size_t out, double stddev, nd::Rng& rng, bool with_bias = true);
  nd::Var operator()(const nd::Var& x) const;
  void collect(const std::string& prefix, nd::ParamList& out) const;
};

/// Pre-norm residual block: x + attn(ln1(x)), then x + mlp(ln2(x)), GELU MLP of width 4·D.
struct TransformerBlock {
  LayerNorm ln1;
  Linear q, k, v, out;
  LayerNorm ln2;
  Linear fc, proj;
  std::size_t heads = 1;

  static TransformerBlock create(std::size_t width, std::size_t heads, std::size_t total_layers,
                                 nd::Rng& rng);
  /// x is [(batch·seq)×D].
  nd::Var forward(const nd::Var& x, std::size_t batch, bool causal) const;
  void collect(const std::string& prefix, nd::ParamList& out) const;
};

class TextEncoder {
 public:
  TextEncoder(const TextEncoderConfig& config, nd::Rng& rng);

  /// Feature per sequence: activation at its EOS position after the final
  /// layer norm. Only positions up to the longest sequence in the batch are
  /// computed; the causal mask makes the trailing padding irrelevant.
  nd::Var embed(std::span<const textproc::TokenSequence> batch) const;

  /// Token + position embeddings for ids laid out [(batch·seq)].
  nd::Var embed_tokens(std::span<const textproc::TokenId> ids, std::size_t batch) const;
  /// Causally masked transformer stack over [(batch·seq)×D].
  nd::Var run_blocks(const nd::Var& x, std::size_t batch) const;

  const TextEncoderConfig& config() const { return config_; }
  nd::ParamList parameters(const std::string& prefix = "text") const;

 private:
  TextEncoderConfig config_;
  nd::Var token_embedding_;
  nd::Var position_embedding_;
  std::vector<TransformerBlock> blocks_;
  LayerNorm ln_final_;
};

/// Single multi-head attention layer whose one query is a projection of the
/// mean over grid positions; keys and values come from every position.
struct AttentionPool {
  Linear q, k, v, out;
  std::size_t heads = 1;

  static AttentionPool create(std::size_t width, std::size_t out_width, std::size_t heads,
                              nd::Rng& rng);
  /// grid is [(batch·S)×D] → [batch×out_width]. S = 0 is an error.
  nd::Var forward(const nd::Var& grid, std::size_t batch) const;
  void collect(const std::string& prefix, nd::ParamList& out) const;
};

/// Flattens non-overlapping patches (row-major, channels innermost) and maps
/// pixels from [0,1] to [-1,1]: [(batch·patches)×(p·p·C)].
nd::Tensor patchify(std::span<const nd::Image> images, const ImageEncoderConfig& config);

class ImageEncoder {
 public:
  ImageEncoder(const ImageEncoderConfig& config, nd::Rng& rng);

  /// Class-token output after the final layer norm (or the attention-pooled
  /// patch grid when configured).
  nd::Var embed(std::span<const nd::Image> batch) const;
  /// All token activations after the transformer, [(batch·(patches+1))×D].
  nd::Var tokens(std::span<const nd::Image> batch) const;

  const ImageEncoderConfig& config() const { return config_; }
  nd::ParamList parameters(const std::string& prefix = "image") const;

 private:
  ImageEncoderConfig config_;
  nd::Var patch_weight_;
  nd::Var class_token_;
  nd::Var position_embedding_;
  LayerNorm ln_pre_;
  std::vector<TransformerBlock> blocks_;
  LayerNorm ln_post_;
  std::optional<AttentionPool> pool_;
};

/// Multipliers that spread extra compute equally over width², depth and
/// resolution²: width = resolution = c^(1/6), depth = c^(1/3).
struct ScalePlan {
  double width_mult = 1.0;
  double depth_mult = 1.0;
  double resolution_mult = 1.0;
};

ScalePlan scale_plan(double compute_mult);

struct ScaledConfigs {
  TextEncoderConfig text;
  ImageEncoderConfig image;
  /// width_ratio² · depth_ratio · resolution_ratio² of the rounded image tower.
  double achieved_compute = 1.0;
};

/// Applies a plan with integer rounding: widths to multiples of the head
/// count, resolution to multiples of the patch size, and the depth chosen to
/// land closest to the requested compute. The text tower takes the width
/// multiplier and keeps its depth.
ScaledConfigs apply_scale_plan(const ScalePlan& plan, double compute_mult,
                               const TextEncoderConfig& text, const ImageEncoderConfig& image);

}  // namespace clip::encoders
