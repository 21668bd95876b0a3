#include "clip/trainer/trainer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "clip/nd/optim.hpp"
#include "clip/nd/serialize.hpp"
#include "clip/zeroshot/zeroshot.hpp"

namespace clip::trainer {

std::string objective_name(Objective o) { return o == Objective::bow ? "bow" : "contrastive"; }

Objective parse_objective(const std::string& name) {
  if (name == "contrastive") return Objective::contrastive;
  if (name == "bow") return Objective::bow;
  throw std::invalid_argument("unknown objective '" + name + "' (contrastive|bow)");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (!(base_lr >= 0.0) || !std::isfinite(base_lr)) throw std::invalid_argument("base_lr must be finite and >= 0");
  if (warmup_steps < 0) throw std::invalid_argument("warmup_steps must be >= 0");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be >= 0");
  if (tokenizer_vocab < textproc::kByteAlphabetSize + textproc::kSpecialTokenCount) {
    throw std::invalid_argument("tokenizer_vocab is below the byte alphabet plus special tokens");
  }
  if (stop_at_accuracy && !(*stop_at_accuracy > 0.0 && *stop_at_accuracy <= 1.0)) {
    throw std::invalid_argument("stop_at_accuracy must lie in (0, 1]");
  }
}

nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j{{"model", contrastive::to_json(c.model)},
                   {"tokenizer_vocab", c.tokenizer_vocab},
                   {"batch_size", c.batch_size},
                   {"epochs", c.epochs},
                   {"max_steps", c.max_steps ? nlohmann::json(*c.max_steps) : nlohmann::json(nullptr)},
                   {"base_lr", c.base_lr},
                   {"warmup_steps", c.warmup_steps},
                   {"weight_decay", c.weight_decay},
                   {"beta1", c.beta1},
                   {"beta2", c.beta2},
                   {"eps", c.eps},
                   {"seed", c.seed},
                   {"objective", objective_name(c.objective)},
                   {"eval_every", c.eval_every}};
  j["stop_at_accuracy"] = c.stop_at_accuracy ? nlohmann::json(*c.stop_at_accuracy) : nlohmann::json(nullptr);
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
  TrainConfig c;
  auto merged = to_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!merged.contains(key)) throw std::invalid_argument("unknown train config key '" + key + "'");
  }
  merged.merge_patch(j);
  c.model = contrastive::model_config_from_json(merged.at("model"));
  c.tokenizer_vocab = merged.at("tokenizer_vocab").get<std::size_t>();
  c.batch_size = merged.at("batch_size").get<std::size_t>();
  c.epochs = merged.at("epochs").get<std::size_t>();
  if (!merged.at("max_steps").is_null()) c.max_steps = merged.at("max_steps").get<std::size_t>();
  c.base_lr = merged.at("base_lr").get<double>();
  c.warmup_steps = merged.at("warmup_steps").get<std::int64_t>();
  c.weight_decay = merged.at("weight_decay").get<double>();
  c.beta1 = merged.at("beta1").get<double>();
  c.beta2 = merged.at("beta2").get<double>();
  c.eps = merged.at("eps").get<double>();
  c.seed = merged.at("seed").get<std::uint64_t>();
  c.objective = parse_objective(merged.at("objective").get<std::string>());
  c.eval_every = merged.at("eval_every").get<std::size_t>();
  if (!merged.at("stop_at_accuracy").is_null()) c.stop_at_accuracy = merged.at("stop_at_accuracy").get<double>();
  c.validate();
  return c;
}

void EvalSet::validate() const {
  if (images.size() != labels.size()) throw std::invalid_argument("eval set: image and label counts differ");
  if (!images.empty() && class_names.empty()) throw std::invalid_argument("eval set has images but no classes");
  for (auto l : labels) {
    if (l >= class_names.size()) throw std::out_of_range("eval label " + std::to_string(l) + " has no class");
  }
}

EvalSet eval_set_from(const datakit::PairDataset& data, std::vector<std::string> class_names) {
  if (class_names.empty()) {
    std::set<std::string> names;
    for (const auto& r : data.records)
      if (r.metadata.contains("label")) names.insert(r.metadata.at("label").get<std::string>());
    class_names.assign(names.begin(), names.end());
  }
  EvalSet out;
  out.class_names = std::move(class_names);
  for (const auto& r : data.records) {
    if (!r.metadata.contains("label")) throw std::invalid_argument("record without a label in an eval set");
    const auto label = r.metadata.at("label").get<std::string>();
    const auto it = std::find(out.class_names.begin(), out.class_names.end(), label);
    if (it == out.class_names.end()) throw std::invalid_argument("eval label '" + label + "' is not a class");
    out.images.push_back(r.image);
    out.labels.push_back(static_cast<std::size_t>(it - out.class_names.begin()));
  }
  return out;
}

std::string TrainReport::jsonl() const {
  std::ostringstream out;
  for (std::size_t s = 0; s < losses.size(); ++s) {
    out << nlohmann::json{{"type", "step"},
                          {"step", s + 1},
                          {"loss", losses[s]},
                          {"lr", learning_rates[s]},
                          {"logit_scale", logit_scales[s]}}
               .dump()
        << '\n';
  }
  for (const auto& e : evals) {
    out << nlohmann::json{{"type", "eval"}, {"step", e.step}, {"top1", e.top1}}.dump() << '\n';
  }
  out << nlohmann::json{{"type", "final"},
                        {"steps", steps},
                        {"steps_per_epoch", steps_per_epoch},
                        {"stopped_early", stopped_early},
                        {"checkpoint", checkpoint_id}}
             .dump()
      << '\n';
  return out.str();
}

std::vector<std::string> bow_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::ptrdiff_t BowHead::index_of(const std::string& word) const {
  const auto it = std::lower_bound(vocabulary.begin(), vocabulary.end(), word);
  return it != vocabulary.end() && *it == word ? it - vocabulary.begin() : -1;
}

nd::Tensor BowHead::targets(const std::vector<std::string>& captions) const {
  nd::Tensor t({captions.size(), vocabulary.size()});
  for (std::size_t i = 0; i < captions.size(); ++i)
    for (const auto& w : bow_words(captions[i]))
      if (const auto k = index_of(w); k >= 0) t(i, static_cast<std::size_t>(k)) = 1.0;
  return t;
}

nd::Checkpoint TrainResult::checkpoint() const {
  nlohmann::json extra{{"tokenizer", textproc::to_text(tokenizer)}};
  if (bow) extra["bow_vocabulary"] = bow->vocabulary;
  auto ckpt = model.checkpoint(extra);
  if (bow) {
    nd::ParamList head;
    bow->head.collect("bow_head", head);
    for (const auto& p : head) ckpt.tensors.push_back({p.name, p.var.value()});
  }
  return ckpt;
}

namespace {

nd::Tensor bow_scores(const TrainResult& r, const EvalSet& eval, std::span<const std::size_t> rows) {
  std::vector<nd::Image> batch;
  for (auto i : rows) batch.push_back(eval.images[i]);
  const auto logits = r.bow->head(r.model.image_encoder().embed(batch)).value();
  nd::Tensor scores({rows.size(), eval.class_names.size()});
  const auto tmpl = zeroshot::default_templates().front();
  for (std::size_t k = 0; k < eval.class_names.size(); ++k) {
    std::vector<std::size_t> ids;
    for (const auto& w : bow_words(tmpl.fill(eval.class_names[k])))
      if (const auto j = r.bow->index_of(w); j >= 0) ids.push_back(static_cast<std::size_t>(j));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double s = 0.0;
      for (auto j : ids) {
        const double z = logits(i, j);
        s += z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));  // log σ(z)
      }
      scores(i, k) = ids.empty() ? -std::numeric_limits<double>::infinity() : s / static_cast<double>(ids.size());
    }
  }
  return scores;
}

}  // namespace

double zero_shot_accuracy(const TrainResult& r, const EvalSet& eval) {
  eval.validate();
  if (eval.empty()) throw std::invalid_argument("zero-shot accuracy on an empty eval set");
  constexpr std::size_t kChunk = 128;
  if (!r.bow) {
    const auto classifier = zeroshot::build_classifier(eval.class_names, zeroshot::default_templates(), r.model,
                                                       r.tokenizer);
    const auto emb = zeroshot::encode_images(r.model, eval.images, kChunk);
    return zeroshot::evaluate(classifier, emb, eval.labels).top1;
  }
  std::size_t correct = 0;
  for (std::size_t start = 0; start < eval.images.size(); start += kChunk) {
    std::vector<std::size_t> rows(std::min(kChunk, eval.images.size() - start));
    std::iota(rows.begin(), rows.end(), start);
    const auto s = bow_scores(r, eval, rows);
    for (std::size_t i = 0; i < rows.size(); ++i) correct += zeroshot::argmax(s.row(i)) == eval.labels[rows[i]];
  }
  return static_cast<double>(correct) / static_cast<double>(eval.images.size());
}

void check_loss(double loss, std::size_t step, double lr, double logit_scale) {
  if (std::isfinite(loss)) return;
  std::ostringstream msg;
  msg << "non-finite loss " << loss << " at step " << step << " (lr " << lr << ", logit scale " << logit_scale << ")";
  throw TrainingDiverged(msg.str());
}

TrainResult train(const datakit::PairDataset& data, const TrainConfig& config, const EvalSet& eval) {
  config.validate();
  eval.validate();
  if (data.empty()) throw std::invalid_argument("training set is empty");
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double p : data.records[i].image.pixels) {
      if (!std::isfinite(p)) throw std::invalid_argument("image of record " + std::to_string(i) + " has a non-finite pixel");
    }
  }
  const std::size_t n = data.size();
  if (config.objective == Objective::contrastive && std::min(n, config.batch_size) < 2) {
    throw std::invalid_argument("the contrastive objective needs at least 2 pairs per batch");
  }

  std::vector<std::string> captions;
  for (const auto& r : data.records) captions.push_back(r.text);
  auto tokenizer = textproc::train_bpe(captions, config.tokenizer_vocab);
  auto model_config = config.model;
  model_config.text.vocab_size = tokenizer.vocab_size();
  model_config.validate();

  nd::Rng rng(config.seed);
  nd::Rng init_rng(rng.fork());
  nd::Rng order_rng(rng.fork());
  TrainResult result{contrastive::ClipModel(model_config, init_rng), std::move(tokenizer), std::nullopt, {}};

  nd::ParamList params;
  if (config.objective == Objective::bow) {
    std::set<std::string> words;
    for (const auto& c : captions)
      for (auto& w : bow_words(c)) words.insert(std::move(w));
    BowHead bow{{words.begin(), words.end()}, {}};
    const auto width = model_config.image.width;
    bow.head = encoders::Linear::create(width, bow.vocabulary.size(), 1.0 / std::sqrt(static_cast<double>(width)),
                                        init_rng);
    result.bow = std::move(bow);
    params = result.model.image_encoder().parameters("image");
    result.bow->head.collect("bow_head", params);
  } else {
    params = result.model.parameters();
  }

  const std::size_t batch = std::min(config.batch_size, n);
  const std::size_t per_epoch = n / batch;
  std::size_t total = per_epoch * config.epochs;
  if (config.max_steps) total = std::min(total, *config.max_steps);

  auto opt = nd::OptimizerState::for_vit();
  opt.beta1 = config.beta1;
  opt.beta2 = config.beta2;
  opt.eps = config.eps;
  opt.base_lr = config.base_lr;
  opt.weight_decay = config.weight_decay;
  opt.warmup_steps = config.warmup_steps;
  opt.total_steps = static_cast<std::int64_t>(total);

  // Token ids are fixed for the run, so encode each caption once.
  std::vector<textproc::TokenSequence> tokens;
  const auto ctx = model_config.text.context_length;
  for (const auto& c : captions) tokens.push_back(textproc::encode(c, result.tokenizer, ctx));
  const auto vars = nd::vars_of(params);

  auto& report = result.report;
  report.steps_per_epoch = per_epoch;
  std::vector<std::size_t> order(n);
  auto run_eval = [&](std::size_t step) {
    if (eval.empty()) return false;
    report.evals.push_back({step, zero_shot_accuracy(result, eval)});
    return config.stop_at_accuracy && report.evals.back().top1 >= *config.stop_at_accuracy;
  };

  for (std::size_t step = 0; step < total; ++step) {
    const std::size_t slot = step % per_epoch;
    if (slot == 0) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      order_rng.shuffle(order.begin(), order.end());
    }
    std::vector<nd::Image> images;
    std::vector<textproc::TokenSequence> texts;
    std::vector<std::string> batch_captions;
    for (std::size_t i = slot * batch; i < (slot + 1) * batch; ++i) {
      images.push_back(data.records[order[i]].image);
      if (result.bow) {
        batch_captions.push_back(captions[order[i]]);
      } else {
        texts.push_back(tokens[order[i]]);
      }
    }
    nd::Var loss;
    if (result.bow) {
      const auto features = result.model.image_encoder().embed(images);
      loss = contrastive::bow_loss(features, result.bow->head, result.bow->targets(batch_captions));
    } else {
      loss = result.model.loss(images, texts);
    }
    const double value = loss.value()[0];
    check_loss(value, step + 1, nd::cosine_lr(opt.step, opt), result.model.logit_scale().value());
    const auto grads = nd::grad(loss, vars);
    const double lr = nd::adamw_step(opt, params, grads);
    contrastive::clamp_logit_scale(result.model.logit_scale());
    report.losses.push_back(value);
    report.learning_rates.push_back(lr);
    report.logit_scales.push_back(result.model.logit_scale().value());
    report.steps = step + 1;
    const bool last = step + 1 == total;
    const bool due = config.eval_every ? (step + 1) % config.eval_every == 0 : false;
    if ((due || last) && run_eval(step + 1)) {
      report.stopped_early = !last;
      break;
    }
  }
  report.checkpoint_id = nd::fingerprint(result.checkpoint());
  return result;
}

std::vector<ObjectiveOutcome> compare_objectives(const datakit::PairDataset& data,
                                                 const std::vector<TrainConfig>& configs, const EvalSet& eval,
                                                 double target) {
  if (configs.size() < 2) throw std::invalid_argument("compare_objectives needs at least 2 configs");
  if (!(target > 0.0 && target <= 1.0)) throw std::invalid_argument("target accuracy must lie in (0, 1]");
  if (eval.empty()) throw std::invalid_argument("compare_objectives needs an eval set");
  auto without_objective = [](const TrainConfig& c) {
    auto j = to_json(c);
    j.erase("objective");
    return j;
  };
  const auto reference = without_objective(configs.front());
  for (const auto& c : configs) {
    if (without_objective(c) != reference) {
      throw std::invalid_argument("compared configs must differ only in the objective");
    }
  }
  std::vector<ObjectiveOutcome> out;
  for (const auto& c : configs) {
    ObjectiveOutcome o;
    o.objective = c.objective;
    const auto r = train(data, c, eval);
    o.curve = r.report.evals;
    if (!o.curve.empty()) o.final_accuracy = o.curve.back().top1;
    for (const auto& e : o.curve) {
      if (e.top1 >= target) {
        o.steps_to_target = e.step;
        break;
      }
    }
    out.push_back(std::move(o));
  }
  return out;
}

nlohmann::json to_json(const ObjectiveOutcome& o) {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& e : o.curve) curve.push_back({{"step", e.step}, {"top1", e.top1}});
  return {{"objective", objective_name(o.objective)},
          {"steps_to_target", o.steps_to_target ? nlohmann::json(*o.steps_to_target) : nlohmann::json("not reached")},
          {"final_accuracy", o.final_accuracy},
          {"curve", curve}};
}

}  // namespace clip::trainer
