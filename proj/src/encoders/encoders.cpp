#include "clip/encoders/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace clip::encoders {

namespace {

// Embedding tables start at 0.02. Matrices mixing the residual stream start at
// width^-1/2; the two that write back into it are further scaled by 1/sqrt(2L).
// A flat 0.02 everywhere leaves width-64 towers nearly linear and slow to train.
constexpr double kInitStd = 0.02;

double inv_sqrt(double x) { return 1.0 / std::sqrt(x); }

nd::Tensor normal_tensor(nd::Rng& rng, nd::Shape shape, double stddev) {
  nd::Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.normal(0.0, stddev);
  return t;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

void TextEncoderConfig::validate() const {
  require(layers >= 1, "text encoder needs at least one layer");
  require(heads >= 1 && width % heads == 0, "text width " + std::to_string(width) +
                                                " is not divisible by " + std::to_string(heads) + " heads");
  require(context_length >= 2, "text context_length must be at least 2");
  require(vocab_size > textproc::kByteAlphabetSize + textproc::kSpecialTokenCount,
          "text vocab_size too small for the byte alphabet");
}

void ImageEncoderConfig::validate() const {
  require(patch_size >= 1 && image_size % patch_size == 0,
          "image_size " + std::to_string(image_size) + " is not divisible by patch_size " +
              std::to_string(patch_size));
  require(image_size >= patch_size, "image smaller than one patch");
  require(channels >= 1, "image needs at least one channel");
  require(layers >= 1, "image encoder needs at least one layer");
  require(heads >= 1 && width % heads == 0, "image width " + std::to_string(width) +
                                                 " is not divisible by " + std::to_string(heads) + " heads");
}

LayerNorm LayerNorm::create(std::size_t width) {
  return {nd::parameter(nd::Tensor({width}, 1.0)), nd::parameter(nd::Tensor({width}, 0.0))};
}

nd::Var LayerNorm::operator()(const nd::Var& x) const { return nd::layernorm(x, gain, bias); }

void LayerNorm::collect(const std::string& prefix, nd::ParamList& out) const {
  out.push_back({prefix + ".gain", gain, false});
  out.push_back({prefix + ".bias", bias, false});
}

Linear Linear::create(std::size_t in, std::size_t out, double stddev, nd::Rng& rng, bool with_bias) {
  Linear l;
  l.weight = nd::parameter(normal_tensor(rng, {in, out}, stddev));
  if (with_bias) l.bias = nd::parameter(nd::Tensor({out}, 0.0));
  return l;
}

nd::Var Linear::operator()(const nd::Var& x) const {
  auto y = nd::matmul(x, weight);
  return bias.defined() ? nd::add(y, bias) : y;
}

void Linear::collect(const std::string& prefix, nd::ParamList& out) const {
  out.push_back({prefix + ".weight", weight, true});
  if (bias.defined()) out.push_back({prefix + ".bias", bias, false});
}

TransformerBlock TransformerBlock::create(std::size_t width, std::size_t heads,
                                          std::size_t total_layers, nd::Rng& rng) {
  const auto w = static_cast<double>(width);
  const double attn_std = inv_sqrt(w);
  const double out_std = attn_std * inv_sqrt(2.0 * static_cast<double>(total_layers));
  TransformerBlock b;
  b.heads = heads;
  b.ln1 = LayerNorm::create(width);
  b.q = Linear::create(width, width, attn_std, rng);
  b.k = Linear::create(width, width, attn_std, rng);
  b.v = Linear::create(width, width, attn_std, rng);
  b.out = Linear::create(width, width, out_std, rng);
  b.ln2 = LayerNorm::create(width);
  b.fc = Linear::create(width, 4 * width, inv_sqrt(2.0 * w), rng);
  b.proj = Linear::create(4 * width, width, out_std, rng);
  return b;
}

nd::Var TransformerBlock::forward(const nd::Var& x, std::size_t batch, bool causal) const {
  auto h = ln1(x);
  auto a = nd::attention(q(h), k(h), v(h), batch, heads, causal);
  auto x1 = nd::add(x, out(a));
  auto m = proj(nd::gelu(fc(ln2(x1))));
  return nd::add(x1, m);
}

void TransformerBlock::collect(const std::string& prefix, nd::ParamList& o) const {
  ln1.collect(prefix + ".ln1", o);
  q.collect(prefix + ".attn.q", o);
  k.collect(prefix + ".attn.k", o);
  v.collect(prefix + ".attn.v", o);
  out.collect(prefix + ".attn.out", o);
  ln2.collect(prefix + ".ln2", o);
  fc.collect(prefix + ".mlp.fc", o);
  proj.collect(prefix + ".mlp.proj", o);
}

// ---------------------------------------------------------------------------

TextEncoder::TextEncoder(const TextEncoderConfig& config, nd::Rng& rng) : config_(config) {
  config_.validate();
  token_embedding_ = nd::parameter(normal_tensor(rng, {config_.vocab_size, config_.width}, kInitStd));
  position_embedding_ =
      nd::parameter(normal_tensor(rng, {config_.context_length, config_.width}, kInitStd));
  for (std::size_t i = 0; i < config_.layers; ++i)
    blocks_.push_back(TransformerBlock::create(config_.width, config_.heads, config_.layers, rng));
  ln_final_ = LayerNorm::create(config_.width);
}

nd::Var TextEncoder::embed_tokens(std::span<const textproc::TokenId> ids, std::size_t batch) const {
  if (batch == 0 || ids.size() % batch) {
    throw nd::ShapeError("embed_tokens: " + std::to_string(ids.size()) + " ids for batch " +
                         std::to_string(batch));
  }
  const auto seq = ids.size() / batch;
  if (seq > config_.context_length) {
    throw std::invalid_argument("sequence of length " + std::to_string(seq) +
                                " exceeds context length " + std::to_string(config_.context_length));
  }
  std::vector<std::size_t> tok(ids.size()), pos(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= config_.vocab_size) {
      throw std::out_of_range("token id " + std::to_string(ids[i]) + " outside vocabulary of " +
                              std::to_string(config_.vocab_size));
    }
    tok[i] = static_cast<std::size_t>(ids[i]);
    pos[i] = i % seq;
  }
  return nd::add(nd::gather_rows(token_embedding_, tok), nd::gather_rows(position_embedding_, pos));
}

nd::Var TextEncoder::run_blocks(const nd::Var& x, std::size_t batch) const {
  nd::Var h = x;
  for (const auto& b : blocks_) h = b.forward(h, batch, /*causal=*/true);
  return h;
}

nd::Var TextEncoder::embed(std::span<const textproc::TokenSequence> batch) const {
  if (batch.empty()) throw std::invalid_argument("embed_text: empty batch");
  std::size_t seq = 0;
  for (const auto& s : batch) {
    if (s.context_length() != config_.context_length) {
      throw std::invalid_argument("token sequence of length " + std::to_string(s.context_length()) +
                                  " does not match context length " +
                                  std::to_string(config_.context_length));
    }
    if (s.length < 2 || s.length > s.context_length()) {
      throw std::invalid_argument("token sequence has invalid length " + std::to_string(s.length));
    }
    seq = std::max(seq, s.length);
  }
  std::vector<textproc::TokenId> ids;
  ids.reserve(batch.size() * seq);
  std::vector<std::size_t> eos_rows;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    ids.insert(ids.end(), batch[b].ids.begin(), batch[b].ids.begin() + static_cast<std::ptrdiff_t>(seq));
    eos_rows.push_back(b * seq + batch[b].eos_position());
  }
  auto h = run_blocks(embed_tokens(ids, batch.size()), batch.size());
  return ln_final_(nd::gather_rows(h, eos_rows));
}

nd::ParamList TextEncoder::parameters(const std::string& prefix) const {
  nd::ParamList out;
  out.push_back({prefix + ".token_embedding", token_embedding_, true});
  out.push_back({prefix + ".position_embedding", position_embedding_, true});
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    blocks_[i].collect(prefix + ".blocks." + std::to_string(i), out);
  ln_final_.collect(prefix + ".ln_final", out);
  return out;
}

// ---------------------------------------------------------------------------

AttentionPool AttentionPool::create(std::size_t width, std::size_t out_width, std::size_t heads,
                                    nd::Rng& rng) {
  if (heads == 0 || width % heads) {
    throw std::invalid_argument("attention pool width not divisible by heads");
  }
  AttentionPool p;
  p.heads = heads;
  const double std = inv_sqrt(static_cast<double>(width));
  p.q = Linear::create(width, width, std, rng);
  p.k = Linear::create(width, width, std, rng);
  p.v = Linear::create(width, width, std, rng);
  p.out = Linear::create(width, out_width, std, rng);
  return p;
}

nd::Var AttentionPool::forward(const nd::Var& grid, std::size_t batch) const {
  if (grid.value().rank() != 2 || grid.value().rows() == 0 || batch == 0 ||
      grid.value().rows() % batch) {
    throw std::invalid_argument("attention_pool: empty or ragged grid " + nd::shape_str(grid.shape()));
  }
  auto query = q(nd::segment_mean(grid, batch));
  return out(nd::attention(query, k(grid), v(grid), batch, heads, /*causal=*/false));
}

void AttentionPool::collect(const std::string& prefix, nd::ParamList& o) const {
  q.collect(prefix + ".q", o);
  k.collect(prefix + ".k", o);
  v.collect(prefix + ".v", o);
  out.collect(prefix + ".out", o);
}

// ---------------------------------------------------------------------------

nd::Tensor patchify(std::span<const nd::Image> images, const ImageEncoderConfig& config) {
  const auto p = config.patch_size, side = config.patches_per_side(), c = config.channels;
  nd::Tensor out({images.size() * config.num_patches(), config.patch_dim()});
  std::size_t row = 0;
  for (const auto& img : images) {
    if (!img.valid() || img.height != config.image_size || img.width != config.image_size ||
        img.channels != c) {
      throw std::invalid_argument("image of size " + std::to_string(img.height) + "x" +
                                  std::to_string(img.width) + "x" + std::to_string(img.channels) +
                                  " does not match configured " + std::to_string(config.image_size) +
                                  "x" + std::to_string(config.image_size) + "x" + std::to_string(c));
    }
    for (std::size_t py = 0; py < side; ++py) {
      for (std::size_t px = 0; px < side; ++px, ++row) {
        double* dst = out.data() + row * config.patch_dim();
        for (std::size_t dy = 0; dy < p; ++dy)
          for (std::size_t dx = 0; dx < p; ++dx)
            for (std::size_t ch = 0; ch < c; ++ch)
              *dst++ = 2.0 * img.at(py * p + dy, px * p + dx, ch) - 1.0;
      }
    }
  }
  return out;
}

ImageEncoder::ImageEncoder(const ImageEncoderConfig& config, nd::Rng& rng) : config_(config) {
  config_.validate();
  const auto w = config_.width;
  const double token_std = inv_sqrt(static_cast<double>(w));
  patch_weight_ = nd::parameter(normal_tensor(rng, {config_.patch_dim(), w}, inv_sqrt(static_cast<double>(config_.patch_dim()))));
  class_token_ = nd::parameter(normal_tensor(rng, {1, w}, token_std));
  position_embedding_ = nd::parameter(normal_tensor(rng, {config_.sequence_length(), w}, token_std));
  ln_pre_ = LayerNorm::create(w);
  for (std::size_t i = 0; i < config_.layers; ++i)
    blocks_.push_back(TransformerBlock::create(w, config_.heads, config_.layers, rng));
  ln_post_ = LayerNorm::create(w);
  if (config_.pooling == Pooling::attention) pool_ = AttentionPool::create(w, w, config_.heads, rng);
}

nd::Var ImageEncoder::tokens(std::span<const nd::Image> batch) const {
  if (batch.empty()) throw std::invalid_argument("embed_image: empty batch");
  const auto b = batch.size(), np = config_.num_patches(), seq = config_.sequence_length();
  auto patches = nd::matmul(nd::constant(patchify(batch, config_)), patch_weight_);
  // Row 0 of the concatenation is the class token; patches of image i follow
  // at 1 + i·np.
  std::vector<std::size_t> order, pos;
  order.reserve(b * seq);
  pos.reserve(b * seq);
  for (std::size_t i = 0; i < b; ++i) {
    order.push_back(0);
    for (std::size_t j = 0; j < np; ++j) order.push_back(1 + i * np + j);
    for (std::size_t j = 0; j < seq; ++j) pos.push_back(j);
  }
  auto x = nd::gather_rows(nd::concat_rows(class_token_, patches), order);
  x = nd::add(x, nd::gather_rows(position_embedding_, pos));
  if (config_.pre_layernorm) x = ln_pre_(x);
  for (const auto& blk : blocks_) x = blk.forward(x, b, /*causal=*/false);
  return x;
}

nd::Var ImageEncoder::embed(std::span<const nd::Image> batch) const {
  auto x = tokens(batch);
  const auto b = batch.size(), seq = config_.sequence_length();
  if (pool_) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 1; j < seq; ++j) rows.push_back(i * seq + j);
    return pool_->forward(ln_post_(nd::gather_rows(x, rows)), b);
  }
  std::vector<std::size_t> cls(b);
  for (std::size_t i = 0; i < b; ++i) cls[i] = i * seq;
  return ln_post_(nd::gather_rows(x, cls));
}

nd::ParamList ImageEncoder::parameters(const std::string& prefix) const {
  nd::ParamList out;
  out.push_back({prefix + ".patch_embedding", patch_weight_, true});
  out.push_back({prefix + ".class_token", class_token_, true});
  out.push_back({prefix + ".position_embedding", position_embedding_, true});
  ln_pre_.collect(prefix + ".ln_pre", out);
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    blocks_[i].collect(prefix + ".blocks." + std::to_string(i), out);
  ln_post_.collect(prefix + ".ln_post", out);
  if (pool_) pool_->collect(prefix + ".attn_pool", out);
  return out;
}

// ---------------------------------------------------------------------------

ScalePlan scale_plan(double compute_mult) {
  if (!(compute_mult >= 1.0)) {
    throw std::invalid_argument("scale_plan: compute multiplier must be >= 1");
  }
  const double w = std::pow(compute_mult, 1.0 / 6.0);
  return {w, std::cbrt(compute_mult), w};
}

ScaledConfigs apply_scale_plan(const ScalePlan& plan, double compute_mult,
                               const TextEncoderConfig& text, const ImageEncoderConfig& image) {
  auto round_to = [](double value, std::size_t multiple) {
    const auto m = static_cast<double>(multiple);
    return static_cast<std::size_t>(std::max(1.0, std::round(value / m))) * multiple;
  };
  ScaledConfigs out{text, image, 1.0};
  out.image.width = round_to(static_cast<double>(image.width) * plan.width_mult, image.heads);
  out.image.image_size =
      round_to(static_cast<double>(image.image_size) * plan.resolution_mult, image.patch_size);
  out.text.width = round_to(static_cast<double>(text.width) * plan.width_mult, text.heads);

  const double wr = static_cast<double>(out.image.width) / static_cast<double>(image.width);
  const double rr = static_cast<double>(out.image.image_size) / static_cast<double>(image.image_size);
  const double needed_depth = compute_mult / (wr * wr * rr * rr);
  const double base_layers = static_cast<double>(image.layers);
  double best_err = std::numeric_limits<double>::infinity();
  const auto guess = static_cast<std::size_t>(std::max(1.0, std::floor(base_layers * needed_depth)));
  for (std::size_t layers = std::max<std::size_t>(1, guess > 0 ? guess - 1 : 1); layers <= guess + 2; ++layers) {
    const double achieved = wr * wr * rr * rr * static_cast<double>(layers) / base_layers;
    const double err = std::abs(achieved / compute_mult - 1.0);
    if (err < best_err) {
      best_err = err;
      out.image.layers = layers;
      out.achieved_compute = achieved;
    }
  }
  return out;
}

}  // namespace clip::encoders
