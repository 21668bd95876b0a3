#include "clip/contrastive/contrastive.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace clip::contrastive {

JointProjection JointProjection::create(std::size_t image_width, std::size_t text_width,
                                        std::size_t embed_dim, nd::Rng& rng) {
  auto init = [&](std::size_t in) {
    nd::Tensor t({in, embed_dim});
    const double std = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& v : t.values()) v = rng.normal(0.0, std);
    return nd::parameter(std::move(t));
  };
  JointProjection p;
  p.image = init(image_width);
  p.text = init(text_width);
  return p;
}

void JointProjection::collect(nd::ParamList& out) const {
  out.push_back({"projection.image", image, true});
  out.push_back({"projection.text", text, true});
}

double LogitScale::initial_log_scale() { return std::log(1.0 / kInitTemperature); }

LogitScale LogitScale::create(double initial) { return {nd::parameter(nd::Tensor({1}, initial))}; }

double LogitScale::value() const { return std::exp(log_value()); }

void LogitScale::collect(nd::ParamList& out) const { out.push_back({"logit_scale", log_scale, false}); }

double max_log_scale() {
  static const double cap = [] {
    double t = std::log(kMaxLogitScale);
    while (std::exp(t) > kMaxLogitScale) t = std::nextafter(t, 0.0);
    return t;
  }();
  return cap;
}

double clamp_log_scale(double log_scale) { return std::min(log_scale, max_log_scale()); }

void clamp_logit_scale(LogitScale& scale) {
  auto& v = scale.log_scale.mutable_value()[0];
  v = clamp_log_scale(v);
}

nd::Var project_normalize(const nd::Var& features, const nd::Var& projection) {
  const auto& f = features.value();
  nd::require_matrix(f, "project_normalize features");
  for (std::size_t r = 0; r < f.rows(); ++r) {
    bool zero = true;
    for (double v : f.row(r)) zero = zero && v == 0.0;
    if (zero) throw std::domain_error("project_normalize: feature row " + std::to_string(r) + " is zero");
  }
  return nd::l2_normalize_rows(nd::matmul(features, projection));
}

nd::Var similarity_logits(const nd::Var& image_embeddings, const nd::Var& text_embeddings,
                          const nd::Var& log_scale) {
  if (image_embeddings.value().rows() != text_embeddings.value().rows()) {
    throw nd::ShapeError("similarity_logits: " + nd::shape_str(image_embeddings.shape()) + " images vs " +
                         nd::shape_str(text_embeddings.shape()) + " texts");
  }
  return nd::mul_scalar(nd::matmul_nt(image_embeddings, text_embeddings), nd::exp(log_scale));
}

nd::Var clip_loss(const nd::Var& logits) {
  const auto& l = logits.value();
  if (l.rank() != 2 || l.rows() != l.cols() || l.rows() == 0) {
    throw nd::ShapeError("clip_loss: logits must be square and non-empty, got " + nd::shape_str(l.shape()));
  }
  std::vector<std::size_t> diag(l.rows());
  std::iota(diag.begin(), diag.end(), std::size_t{0});
  auto image_to_text = nd::cross_entropy(logits, diag);
  auto text_to_image = nd::cross_entropy(nd::transpose(logits), diag);
  return nd::scale(nd::add(image_to_text, text_to_image), 0.5);
}

nd::Var bow_loss(const nd::Var& image_features, const encoders::Linear& head, const nd::Tensor& targets) {
  for (double t : targets.values()) {
    if (t != 0.0 && t != 1.0) {
      throw std::invalid_argument("bow_loss: target value " + std::to_string(t) + " is not 0 or 1");
    }
  }
  return nd::sigmoid_bce(head(image_features), targets);
}

// ---------------------------------------------------------------------------

void ModelConfig::validate() const {
  text.validate();
  image.validate();
  if (embed_dim == 0) throw std::invalid_argument("embed_dim must be positive");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {
      {"embed_dim", c.embed_dim},
      {"text",
       {{"layers", c.text.layers},
        {"width", c.text.width},
        {"heads", c.text.heads},
        {"context_length", c.text.context_length},
        {"vocab_size", c.text.vocab_size}}},
      {"image",
       {{"image_size", c.image.image_size},
        {"patch_size", c.image.patch_size},
        {"channels", c.image.channels},
        {"layers", c.image.layers},
        {"width", c.image.width},
        {"heads", c.image.heads},
        {"pre_layernorm", c.image.pre_layernorm},
        {"pooling", c.image.pooling == encoders::Pooling::attention ? "attention" : "class_token"}}},
  };
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  const auto& t = j.at("text");
  c.text.layers = t.at("layers").get<std::size_t>();
  c.text.width = t.at("width").get<std::size_t>();
  c.text.heads = t.at("heads").get<std::size_t>();
  c.text.context_length = t.at("context_length").get<std::size_t>();
  c.text.vocab_size = t.at("vocab_size").get<std::size_t>();
  const auto& i = j.at("image");
  c.image.image_size = i.at("image_size").get<std::size_t>();
  c.image.patch_size = i.at("patch_size").get<std::size_t>();
  c.image.channels = i.value("channels", std::size_t{3});
  c.image.layers = i.at("layers").get<std::size_t>();
  c.image.width = i.at("width").get<std::size_t>();
  c.image.heads = i.at("heads").get<std::size_t>();
  c.image.pre_layernorm = i.value("pre_layernorm", true);
  const auto pooling = i.value("pooling", std::string("class_token"));
  if (pooling != "class_token" && pooling != "attention") {
    throw std::invalid_argument("unknown pooling '" + pooling + "'");
  }
  c.image.pooling = pooling == "attention" ? encoders::Pooling::attention : encoders::Pooling::class_token;
  c.validate();
  return c;
}

// The members are initialized in declaration order, so the rng is consumed
// text tower first, then image tower, then the projection.
ClipModel::ClipModel(const ModelConfig& config, nd::Rng& rng)
    : config_(config),
      text_(config.text, rng),
      image_(config.image, rng),
      projection_(JointProjection::create(config.image.width, config.text.width, config.embed_dim, rng)),
      scale_(LogitScale::create()) {
  config_.validate();
}

nd::Var ClipModel::encode_images(std::span<const nd::Image> images) const {
  return project_normalize(image_.embed(images), projection_.image);
}

nd::Var ClipModel::encode_texts(std::span<const textproc::TokenSequence> texts) const {
  return project_normalize(text_.embed(texts), projection_.text);
}

nd::Var ClipModel::loss(std::span<const nd::Image> images,
                        std::span<const textproc::TokenSequence> texts) const {
  if (images.size() != texts.size()) {
    throw std::invalid_argument("clip loss: " + std::to_string(images.size()) + " images vs " +
                                std::to_string(texts.size()) + " texts");
  }
  return clip_loss(similarity_logits(encode_images(images), encode_texts(texts), scale_.log_scale));
}

nd::ParamList ClipModel::parameters() const {
  auto out = image_.parameters();
  for (auto& p : text_.parameters()) out.push_back(std::move(p));
  projection_.collect(out);
  scale_.collect(out);
  return out;
}

nd::Checkpoint ClipModel::checkpoint(const nlohmann::json& extra) const {
  nlohmann::json meta = extra.is_object() ? extra : nlohmann::json::object();
  meta["model"] = to_json(config_);
  return nd::snapshot(parameters(), std::move(meta));
}

ClipModel ClipModel::from_checkpoint(const nd::Checkpoint& ckpt) {
  if (!ckpt.meta.contains("model")) throw std::invalid_argument("checkpoint has no model config");
  nd::Rng rng(0);
  ClipModel model(model_config_from_json(ckpt.meta.at("model")), rng);
  auto params = model.parameters();
  nd::restore(params, ckpt);
  return model;
}

}  // namespace clip::contrastive
