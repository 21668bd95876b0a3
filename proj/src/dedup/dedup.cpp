#include "clip/dedup/dedup.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "clip/contrastive/contrastive.hpp"
#include "clip/datakit/datakit.hpp"
#include "clip/nd/optim.hpp"

namespace clip::dedup {

std::string interp_name(Interp i) { return i == Interp::nearest ? "nearest" : "bilinear"; }

Interp parse_interp(const std::string& name) {
  if (name == "nearest") return Interp::nearest;
  if (name == "bilinear") return Interp::bilinear;
  throw std::invalid_argument("unknown interpolation '" + name + "' (nearest|bilinear)");
}

namespace {

void require_image(const nd::Image& image) {
  if (!image.valid()) throw std::invalid_argument("invalid image");
}

// Value of channel c at fractional pixel-index coordinates (x, y).
double sample(const nd::Image& img, double x, double y, std::size_t c, Interp interp) {
  const auto maxx = static_cast<double>(img.width - 1), maxy = static_cast<double>(img.height - 1);
  x = std::clamp(x, 0.0, maxx);
  y = std::clamp(y, 0.0, maxy);
  if (interp == Interp::nearest) {
    return img.at(static_cast<std::size_t>(std::lround(y)), static_cast<std::size_t>(std::lround(x)), c);
  }
  const double fx = std::floor(x), fy = std::floor(y);
  const auto x0 = static_cast<std::size_t>(fx), y0 = static_cast<std::size_t>(fy);
  const auto x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
  const double ax = x - fx, ay = y - fy;
  if (ax == 0.0 && ay == 0.0) return img.at(y0, x0, c);
  const double top = img.at(y0, x0, c) * (1 - ax) + img.at(y0, x1, c) * ax;
  const double bottom = img.at(y1, x0, c) * (1 - ax) + img.at(y1, x1, c) * ax;
  return top * (1 - ay) + bottom * ay;
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b}), d = mx - mn;
  v = mx;
  s = mx > 0 ? d / mx : 0.0;
  if (d == 0) {
    h = 0;
  } else if (mx == r) {
    h = (g - b) / d / 6.0;
  } else if (mx == g) {
    h = ((b - r) / d + 2.0) / 6.0;
  } else {
    h = ((r - g) / d + 4.0) / 6.0;
  }
  h -= std::floor(h);
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  const double hh = (h - std::floor(h)) * 6.0;
  const auto i = static_cast<int>(std::floor(hh)) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
}

void check_range(const Range& r, const char* name, double min_lo, double max_hi) {
  if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || r.lo > r.hi) {
    throw std::invalid_argument(std::string("augment range '") + name + "' must be finite with lo <= hi");
  }
  if (r.lo < min_lo || r.hi > max_hi) {
    throw std::invalid_argument(std::string("augment range '") + name + "' outside [" + std::to_string(min_lo) +
                                ", " + std::to_string(max_hi) + "]");
  }
}

nlohmann::json range_json(const Range& r) { return nlohmann::json::array({r.lo, r.hi}); }
Range range_from(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

}  // namespace

nd::Image resize(const nd::Image& image, std::size_t h, std::size_t w, Interp interp) {
  require_image(image);
  if (h == 0 || w == 0) throw std::invalid_argument("resize to an empty size");
  nd::Image out(h, w, image.channels);
  const double sx = static_cast<double>(image.width) / static_cast<double>(w);
  const double sy = static_cast<double>(image.height) / static_cast<double>(h);
  for (std::size_t y = 0; y < h; ++y) {
    const double src_y = (static_cast<double>(y) + 0.5) * sy - 0.5;
    for (std::size_t x = 0; x < w; ++x) {
      const double src_x = (static_cast<double>(x) + 0.5) * sx - 0.5;
      for (std::size_t c = 0; c < image.channels; ++c) out.at(y, x, c) = sample(image, src_x, src_y, c, interp);
    }
  }
  return out;
}

void AugmentConfig::validate() const {
  check_range(crop_scale, "crop_scale", 1e-3, 1e3);
  check_range(aspect, "aspect", 1e-3, 1e3);
  check_range(rotation_degrees, "rotation_degrees", -180.0, 180.0);
  check_range(downscale, "downscale", 1e-3, 1.0);
  check_range(hue, "hue", -1.0, 1.0);
  check_range(saturation, "saturation", 0.0, 1e3);
  check_range(value, "value", 0.0, 1e3);
  if (interpolations.empty()) throw std::invalid_argument("augment needs at least one interpolation");
}

AugmentConfig AugmentConfig::identity() {
  AugmentConfig c;
  c.crop_scale = c.aspect = c.downscale = c.saturation = c.value = {1.0, 1.0};
  c.rotation_degrees = c.hue = {0.0, 0.0};
  return c;
}

AugmentConfig AugmentConfig::light() {
  AugmentConfig c;
  c.crop_scale = {0.9, 1.0};
  c.aspect = {0.95, 1.05};
  c.rotation_degrees = {-3.0, 3.0};
  c.downscale = {0.75, 1.0};
  c.hue = {-0.015, 0.015};
  c.saturation = {0.9, 1.1};
  c.value = {0.9, 1.1};
  return c;
}

nlohmann::json to_json(const AugmentConfig& c) {
  nlohmann::json interps = nlohmann::json::array();
  for (auto i : c.interpolations) interps.push_back(interp_name(i));
  return {{"crop_scale", range_json(c.crop_scale)},
          {"aspect", range_json(c.aspect)},
          {"rotation_degrees", range_json(c.rotation_degrees)},
          {"downscale", range_json(c.downscale)},
          {"interpolations", interps},
          {"hue", range_json(c.hue)},
          {"saturation", range_json(c.saturation)},
          {"value", range_json(c.value)},
          {"seed", c.seed}};
}

AugmentConfig augment_config_from_json(const nlohmann::json& j) {
  AugmentConfig c;
  auto merged = to_json(c);
  merged.merge_patch(j);
  c.crop_scale = range_from(merged.at("crop_scale"));
  c.aspect = range_from(merged.at("aspect"));
  c.rotation_degrees = range_from(merged.at("rotation_degrees"));
  c.downscale = range_from(merged.at("downscale"));
  c.interpolations.clear();
  for (const auto& name : merged.at("interpolations")) c.interpolations.push_back(parse_interp(name.get<std::string>()));
  c.hue = range_from(merged.at("hue"));
  c.saturation = range_from(merged.at("saturation"));
  c.value = range_from(merged.at("value"));
  c.seed = merged.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

nd::Image augment(const nd::Image& image, const AugmentConfig& config, nd::Rng& rng) {
  require_image(image);
  config.validate();
  const auto W = static_cast<double>(image.width), H = static_cast<double>(image.height);
  auto pick = [&] { return config.interpolations[rng.index(config.interpolations.size())]; };

  // Every parameter is drawn up front so the stream does not depend on which stages run.
  const double scale = config.crop_scale.sample(rng);
  const double aspect = config.aspect.sample(rng);
  const double theta = config.rotation_degrees.sample(rng) * std::numbers::pi / 180.0;
  const double crop_w = std::min(W, scale * W * std::sqrt(aspect));
  const double crop_h = std::min(H, scale * H / std::sqrt(aspect));
  const double cx = crop_w >= W ? W / 2 : rng.uniform(crop_w / 2, W - crop_w / 2);
  const double cy = crop_h >= H ? H / 2 : rng.uniform(crop_h / 2, H - crop_h / 2);
  const Interp geo_interp = pick();
  const double down = config.downscale.sample(rng);
  const Interp down_interp = pick(), up_interp = pick();
  const double dh = config.hue.sample(rng), ms = config.saturation.sample(rng), mv = config.value.sample(rng);

  nd::Image out = image;
  if (crop_w < W || crop_h < H || theta != 0.0) {
    const double cs = std::cos(theta), sn = std::sin(theta);
    const double kx = crop_w / W, ky = crop_h / H;
    nd::Image warped(image.height, image.width, image.channels);
    for (std::size_t y = 0; y < image.height; ++y) {
      const double oy = (static_cast<double>(y) + 0.5 - H / 2) * ky;
      for (std::size_t x = 0; x < image.width; ++x) {
        const double ox = (static_cast<double>(x) + 0.5 - W / 2) * kx;
        const double sx = cx + cs * ox - sn * oy - 0.5, sy = cy + sn * ox + cs * oy - 0.5;
        for (std::size_t c = 0; c < image.channels; ++c) warped.at(y, x, c) = sample(out, sx, sy, c, geo_interp);
      }
    }
    out = std::move(warped);
  }
  if (down < 1.0) {
    const auto h = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(down * H)));
    const auto w = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(down * W)));
    if (h != image.height || w != image.width) {
      out = resize(resize(out, h, w, down_interp), image.height, image.width, up_interp);
    }
  }
  if ((dh != 0.0 || ms != 1.0 || mv != 1.0) && image.channels == 3) {
    for (std::size_t i = 0; i < out.pixels.size(); i += 3) {
      double h, s, v;
      rgb_to_hsv(out.pixels[i], out.pixels[i + 1], out.pixels[i + 2], h, s, v);
      hsv_to_rgb(h + dh, std::clamp(s * ms, 0.0, 1.0), std::clamp(v * mv, 0.0, 1.0), out.pixels[i], out.pixels[i + 1],
                 out.pixels[i + 2]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

void DetectorConfig::validate() const {
  encoder.validate();
  if (embed_dim == 0) throw std::invalid_argument("detector embed_dim must be positive");
  if (batch_size < 2) throw std::invalid_argument("detector batch_size must be at least 2 (in-batch negatives)");
  if (!(base_lr >= 0.0)) throw std::invalid_argument("detector base_lr must be >= 0");
  augment.validate();
}

namespace {

nlohmann::json encoder_json(const encoders::ImageEncoderConfig& c) {
  return {{"image_size", c.image_size}, {"patch_size", c.patch_size},
          {"channels", c.channels},     {"layers", c.layers},
          {"width", c.width},           {"heads", c.heads},
          {"pre_layernorm", c.pre_layernorm},
          {"pooling", c.pooling == encoders::Pooling::attention ? "attention" : "class_token"}};
}

encoders::ImageEncoderConfig encoder_from(const nlohmann::json& j) {
  encoders::ImageEncoderConfig c;
  c.image_size = j.at("image_size").get<std::size_t>();
  c.patch_size = j.at("patch_size").get<std::size_t>();
  c.channels = j.at("channels").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.width = j.at("width").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.pre_layernorm = j.at("pre_layernorm").get<bool>();
  const auto pooling = j.at("pooling").get<std::string>();
  if (pooling != "attention" && pooling != "class_token") throw std::invalid_argument("unknown pooling '" + pooling + "'");
  c.pooling = pooling == "attention" ? encoders::Pooling::attention : encoders::Pooling::class_token;
  c.validate();
  return c;
}

}  // namespace

nlohmann::json to_json(const DetectorConfig& c) {
  return {{"encoder", encoder_json(c.encoder)}, {"embed_dim", c.embed_dim},       {"batch_size", c.batch_size},
          {"steps", c.steps},                   {"base_lr", c.base_lr},           {"warmup_steps", c.warmup_steps},
          {"weight_decay", c.weight_decay},     {"seed", c.seed},                 {"augment", to_json(c.augment)}};
}

DetectorConfig detector_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("detector config must be a JSON object");
  DetectorConfig c;
  auto merged = to_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!merged.contains(key)) throw std::invalid_argument("unknown detector config key '" + key + "'");
  }
  merged.merge_patch(j);
  c.encoder = encoder_from(merged.at("encoder"));
  c.embed_dim = merged.at("embed_dim").get<std::size_t>();
  c.batch_size = merged.at("batch_size").get<std::size_t>();
  c.steps = merged.at("steps").get<std::size_t>();
  c.base_lr = merged.at("base_lr").get<double>();
  c.warmup_steps = merged.at("warmup_steps").get<std::int64_t>();
  c.weight_decay = merged.at("weight_decay").get<double>();
  c.seed = merged.at("seed").get<std::uint64_t>();
  c.augment = augment_config_from_json(merged.at("augment"));
  c.validate();
  return c;
}

Detector::Detector(const DetectorConfig& config, nd::Rng& rng) : config_(config), encoder_(config.encoder, rng) {
  const auto in = config.encoder.width;
  nd::Tensor w({in, config.embed_dim});
  const double sd = 1.0 / std::sqrt(static_cast<double>(in));
  for (auto& v : w.values()) v = rng.normal(0.0, sd);
  projection_ = nd::parameter(std::move(w));
}

nd::Var Detector::embed_var(std::span<const nd::Image> images) const {
  return contrastive::project_normalize(encoder_.embed(images), projection_);
}

nd::Tensor Detector::embed(std::span<const nd::Image> images, std::size_t chunk) const {
  nd::Tensor out({images.size(), config_.embed_dim});
  for (std::size_t start = 0; start < images.size(); start += chunk) {
    const auto n = std::min(chunk, images.size() - start);
    const auto e = embed_var(images.subspan(start, n)).value();
    std::copy(e.values().begin(), e.values().end(), out.data() + start * config_.embed_dim);
  }
  return out;
}

nd::ParamList Detector::parameters() const {
  auto p = encoder_.parameters("detector");
  p.push_back({"detector.projection", projection_, true});
  return p;
}

nd::Checkpoint Detector::checkpoint() const { return nd::snapshot(parameters(), {{"detector", to_json(config_)}}); }

Detector Detector::from_checkpoint(const nd::Checkpoint& ckpt) {
  if (!ckpt.meta.contains("detector")) throw std::invalid_argument("checkpoint holds no detector config");
  nd::Rng rng(0);
  Detector d(detector_config_from_json(ckpt.meta.at("detector")), rng);
  auto params = d.parameters();
  nd::restore(params, ckpt);
  return d;
}

nd::Var fixed_log_scale() {
  nd::Tensor t({1});
  t[0] = std::log(1.0 / kDetectorTemperature);
  return nd::constant(std::move(t));
}

nd::Var detector_loss(const Detector& detector, std::span<const nd::Image> sources,
                      std::span<const nd::Image> views) {
  if (sources.size() != views.size()) throw std::invalid_argument("detector_loss: sources and views differ in count");
  if (sources.size() < 2) throw std::invalid_argument("detector_loss: a batch of 1 has no negatives");
  const auto a = detector.embed_var(sources);
  const auto b = detector.embed_var(views);
  return contrastive::clip_loss(contrastive::similarity_logits(b, a, fixed_log_scale()));
}

double proxy_accuracy(const Detector& detector, std::span<const nd::Image> sources,
                      std::span<const nd::Image> views) {
  if (sources.size() != views.size() || sources.empty()) {
    throw std::invalid_argument("proxy_accuracy: need equally many sources and views");
  }
  const auto a = detector.embed(sources), b = detector.embed(views);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < b.rows(); ++i) {
    std::size_t best = 0;
    double best_sim = -2.0;
    for (std::size_t j = 0; j < a.rows(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += b(i, k) * a(j, k);
      if (s > best_sim) best_sim = s, best = j;
    }
    hits += best == i;
  }
  return static_cast<double>(hits) / static_cast<double>(b.rows());
}

DetectorTraining train_detector(std::span<const nd::Image> images, const DetectorConfig& config) {
  config.validate();
  if (images.size() < 2) throw std::invalid_argument("train_detector needs at least 2 images");
  for (const auto& im : images) {
    if (im.height != config.encoder.image_size || im.width != config.encoder.image_size) {
      throw std::invalid_argument("train_detector: image size does not match the encoder");
    }
  }
  nd::Rng rng(config.seed);
  nd::Rng init_rng(rng.fork()), order_rng(rng.fork()), aug_rng(rng.fork());
  DetectorTraining out{Detector(config, init_rng), {}, 0.0};
  auto params = out.detector.parameters();
  const auto vars = nd::vars_of(params);

  auto opt = nd::OptimizerState::for_vit();
  opt.base_lr = config.base_lr;
  opt.weight_decay = config.weight_decay;
  opt.warmup_steps = config.warmup_steps;
  opt.total_steps = static_cast<std::int64_t>(config.steps);

  const std::size_t batch = std::min(config.batch_size, images.size());
  const std::size_t per_epoch = images.size() / batch;
  std::vector<std::size_t> order(images.size());
  for (std::size_t step = 0; step < config.steps; ++step) {
    const std::size_t slot = step % per_epoch;
    if (slot == 0) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      order_rng.shuffle(order.begin(), order.end());
    }
    std::vector<nd::Image> sources, views;
    for (std::size_t i = slot * batch; i < (slot + 1) * batch; ++i) {
      sources.push_back(images[order[i]]);
      views.push_back(augment(sources.back(), config.augment, aug_rng));
    }
    const auto loss = detector_loss(out.detector, sources, views);
    const double value = loss.value()[0];
    if (!std::isfinite(value)) {
      throw std::runtime_error("detector loss became non-finite at step " + std::to_string(step + 1));
    }
    const auto grads = nd::grad(loss, vars);
    nd::adamw_step(opt, params, grads);
    out.losses.push_back(value);
  }

  std::vector<std::size_t> pick(images.size());
  std::iota(pick.begin(), pick.end(), std::size_t{0});
  order_rng.shuffle(pick.begin(), pick.end());
  std::vector<nd::Image> sources, views;
  for (std::size_t i = 0; i < batch; ++i) {
    sources.push_back(images[pick[i]]);
    views.push_back(augment(sources.back(), config.augment, aug_rng));
  }
  out.proxy_accuracy = proxy_accuracy(out.detector, sources, views);
  return out;
}

// ---------------------------------------------------------------------------

void DetectorIndex::validate() const {
  if (embeddings.rank() != 2 || embeddings.rows() != ids.size()) {
    throw nd::ShapeError("detector index: " + nd::shape_str(embeddings.shape()) + " rows for " +
                         std::to_string(ids.size()) + " ids");
  }
  for (std::size_t i = 0; i < embeddings.rows(); ++i) {
    double s = 0.0;
    for (double v : embeddings.row(i)) s += v * v;
    if (std::abs(std::sqrt(s) - 1.0) > 1e-9) {
      throw std::invalid_argument("detector index row " + std::to_string(i) + " is not unit-norm");
    }
  }
}

DetectorIndex build_index(const nd::Tensor& embeddings, std::vector<std::string> ids) {
  DetectorIndex idx{embeddings, std::move(ids)};
  idx.validate();
  return idx;
}

std::vector<double> max_similarity(const nd::Tensor& queries, const DetectorIndex& index) {
  nd::require_matrix(queries, "max_similarity queries");
  if (index.size() && queries.cols() != index.embeddings.cols()) {
    throw nd::ShapeError("queries of width " + std::to_string(queries.cols()) + " against an index of width " +
                         std::to_string(index.embeddings.cols()));
  }
  const double below_one = std::nextafter(1.0, 0.0);
  const std::size_t d = queries.cols();
  std::vector<double> out(queries.rows(), -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < queries.rows(); ++i) {
    const auto q = queries.row(i);
    for (std::size_t j = 0; j < index.size(); ++j) {
      const auto r = index.embeddings.row(j);
      double s;
      if (std::memcmp(q.data(), r.data(), d * sizeof(double)) == 0) {
        s = 1.0;
      } else {
        s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += q[k] * r[k];
        s = std::clamp(s, -1.0, below_one);
      }
      out[i] = std::max(out[i], s);
    }
  }
  return out;
}

OverlapSplit split_overlap(const nd::Tensor& eval_embeddings, const DetectorIndex& index, double threshold) {
  if (!(threshold > -1.0 && threshold <= 1.0)) throw std::invalid_argument("threshold must lie in (-1, 1]");
  OverlapSplit out;
  out.max_similarity = max_similarity(eval_embeddings, index);
  if (index.size() == 0) out.warning = "the reference index is empty: every example is clean";
  for (std::size_t i = 0; i < out.max_similarity.size(); ++i) {
    (out.max_similarity[i] >= threshold ? out.overlap : out.clean).push_back(i);
  }
  return out;
}

nd::Tensor pixel_embeddings(std::span<const nd::Image> images) {
  if (images.empty()) return nd::Tensor({0, 0});
  const auto d = images.front().pixels.size();
  nd::Tensor out({images.size(), d});
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].pixels.size() != d) throw std::invalid_argument("pixel_embeddings: images differ in size");
    const auto& px = images[i].pixels;
    const double mean = std::accumulate(px.begin(), px.end(), 0.0) / static_cast<double>(d);
    double norm = 0.0;
    for (double v : px) norm += (v - mean) * (v - mean);
    norm = std::sqrt(norm);
    auto row = out.row(i);
    if (norm == 0.0) {
      row[0] = 1.0;  // flat image: any fixed unit vector
      continue;
    }
    for (std::size_t k = 0; k < d; ++k) row[k] = (px[k] - mean) / norm;
  }
  return out;
}

RecoveryResult recover(std::span<const double> max_sim, std::span<const bool> planted) {
  if (max_sim.size() != planted.size()) throw std::invalid_argument("recover: score and flag counts differ");
  RecoveryResult r;
  double worst_negative = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < max_sim.size(); ++i) {
    if (planted[i]) {
      ++r.planted;
    } else {
      worst_negative = std::max(worst_negative, max_sim[i]);
    }
  }
  if (r.planted == 0) throw std::invalid_argument("recover: nothing was planted");
  r.threshold = std::isfinite(worst_negative) ? std::nextafter(worst_negative, 2.0) : -1.0;
  for (std::size_t i = 0; i < max_sim.size(); ++i) r.recovered += planted[i] && max_sim[i] >= r.threshold;
  r.recall_at_full_precision = static_cast<double>(r.recovered) / static_cast<double>(r.planted);
  return r;
}

std::pair<double, double> precision_recall(std::span<const double> max_sim, std::span<const bool> planted,
                                           double threshold) {
  if (max_sim.size() != planted.size()) throw std::invalid_argument("precision_recall: score and flag counts differ");
  std::size_t tp = 0, fp = 0, pos = 0;
  for (std::size_t i = 0; i < max_sim.size(); ++i) {
    pos += planted[i];
    if (max_sim[i] >= threshold) (planted[i] ? tp : fp)++;
  }
  const double precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 1.0;
  const double recall = pos ? static_cast<double>(tp) / static_cast<double>(pos) : 1.0;
  return {precision, recall};
}

void save_index(const std::filesystem::path& path, const DetectorIndex& index, const std::string& fingerprint) {
  index.validate();
  datakit::EmbeddingCache cache{index.embeddings, index.ids, fingerprint, {{"role", "detector_index"}}};
  datakit::save_cache(path, cache);
}

DetectorIndex load_index(const std::filesystem::path& path) {
  auto cache = datakit::load_cache(path);
  return build_index(cache.embeddings, std::move(cache.ids));
}

}  // namespace clip::dedup
