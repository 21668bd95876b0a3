#include "clip/zeroshot/zeroshot.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "clip/nd/serialize.hpp"

namespace clip::zeroshot {

PromptTemplate::PromptTemplate(std::string pattern) : pattern_(std::move(pattern)) {
  slot_ = pattern_.find(kLabelPlaceholder);
  if (slot_ == std::string::npos) {
    throw std::invalid_argument("prompt template '" + pattern_ + "' has no {label} placeholder");
  }
  if (pattern_.find(kLabelPlaceholder, slot_ + 1) != std::string::npos) {
    throw std::invalid_argument("prompt template '" + pattern_ + "' has more than one {label} placeholder");
  }
}

std::string PromptTemplate::fill(std::string_view label) const {
  std::string out = pattern_;
  out.replace(slot_, kLabelPlaceholder.size(), label);
  return out;
}

std::vector<PromptTemplate> parse_templates(std::string_view text) {
  std::vector<PromptTemplate> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    out.emplace_back(line);
  }
  if (out.empty()) throw std::invalid_argument("template list is empty");
  return out;
}

std::vector<PromptTemplate> load_templates(const std::filesystem::path& path) {
  return parse_templates(nd::read_file(path));
}

std::vector<PromptTemplate> default_templates() { return {PromptTemplate(std::string(kDefaultTemplate))}; }

namespace {

double row_norm(std::span<const double> r) {
  double s = 0.0;
  for (double v : r) s += v * v;
  return std::sqrt(s);
}

}  // namespace

void ZeroShotClassifier::validate() const {
  if (class_names.empty()) throw std::invalid_argument("zero-shot classifier has no classes");
  if (weights.rank() != 2 || weights.rows() != class_names.size()) {
    throw nd::ShapeError("zero-shot weights " + nd::shape_str(weights.shape()) + " for " +
                         std::to_string(class_names.size()) + " classes");
  }
  for (std::size_t k = 0; k < weights.rows(); ++k) {
    if (std::abs(row_norm(weights.row(k)) - 1.0) > 1e-9) {
      throw std::invalid_argument("zero-shot weight row " + std::to_string(k) + " is not unit-norm");
    }
  }
}

ZeroShotClassifier build_classifier(const std::vector<std::string>& class_names,
                                    std::span<const PromptTemplate> templates, const TextEmbedder& embed,
                                    double log_scale) {
  if (class_names.empty()) throw std::invalid_argument("build_classifier: no classes");
  if (templates.empty()) throw std::invalid_argument("build_classifier: no templates");
  std::vector<std::string> prompts;
  for (const auto& name : class_names)
    for (const auto& t : templates) prompts.push_back(t.fill(name));
  const auto e = embed(prompts);
  if (e.rank() != 2 || e.rows() != prompts.size()) {
    throw nd::ShapeError("text embedder returned " + nd::shape_str(e.shape()) + " for " +
                         std::to_string(prompts.size()) + " prompts");
  }
  const std::size_t d = e.cols(), per_class = templates.size();
  ZeroShotClassifier out{class_names, nd::Tensor({class_names.size(), d}), log_scale};
  for (std::size_t k = 0; k < class_names.size(); ++k) {
    auto w = out.weights.row(k);
    for (std::size_t t = 0; t < per_class; ++t) {
      const auto row = e.row(k * per_class + t);
      const double n = row_norm(row);
      if (n == 0.0) throw std::domain_error("prompt '" + prompts[k * per_class + t] + "' embeds to zero");
      for (std::size_t j = 0; j < d; ++j) w[j] += row[j] / n;
    }
    const double n = row_norm(w);
    if (n == 0.0) throw std::domain_error("prompt embeddings of class '" + class_names[k] + "' cancel out");
    for (auto& v : w) v /= n;
  }
  return out;
}

nd::Tensor encode_texts(const contrastive::ClipModel& model, const textproc::MergeTable& tokenizer,
                        const std::vector<std::string>& texts, std::size_t chunk) {
  const auto ctx = model.config().text.context_length;
  const auto d = model.config().embed_dim;
  nd::Tensor out({texts.size(), d});
  for (std::size_t start = 0; start < texts.size(); start += chunk) {
    const auto end = std::min(texts.size(), start + chunk);
    std::vector<textproc::TokenSequence> seqs;
    for (std::size_t i = start; i < end; ++i) seqs.push_back(textproc::encode(texts[i], tokenizer, ctx));
    const auto e = model.encode_texts(seqs).value();
    std::copy(e.values().begin(), e.values().end(), out.data() + start * d);
  }
  return out;
}

nd::Tensor encode_images(const contrastive::ClipModel& model, std::span<const nd::Image> images,
                         std::size_t chunk) {
  const auto d = model.config().embed_dim;
  nd::Tensor out({images.size(), d});
  for (std::size_t start = 0; start < images.size(); start += chunk) {
    const auto n = std::min(images.size() - start, chunk);
    const auto e = model.encode_images(images.subspan(start, n)).value();
    std::copy(e.values().begin(), e.values().end(), out.data() + start * d);
  }
  return out;
}

ZeroShotClassifier build_classifier(const std::vector<std::string>& class_names,
                                    std::span<const PromptTemplate> templates, const contrastive::ClipModel& model,
                                    const textproc::MergeTable& tokenizer) {
  return build_classifier(
      class_names, templates,
      [&](const std::vector<std::string>& prompts) { return encode_texts(model, tokenizer, prompts); },
      model.logit_scale().log_value());
}

std::vector<double> predict(const ZeroShotClassifier& classifier, std::span<const double> x) {
  const auto& w = classifier.weights;
  if (x.size() != w.cols()) {
    throw nd::ShapeError("predict: embedding of width " + std::to_string(x.size()) + " for weights " +
                         nd::shape_str(w.shape()));
  }
  const double n = row_norm(x);
  if (std::abs(n - 1.0) > 1e-6) {
    throw std::invalid_argument("predict: image embedding has norm " + std::to_string(n) + ", expected 1");
  }
  const double s = std::exp(classifier.log_scale);
  std::vector<double> logits(w.rows());
  for (std::size_t k = 0; k < w.rows(); ++k) {
    double dot = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) dot += w(k, j) * x[j];
    logits[k] = s * dot;
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (auto& l : logits) z += (l = std::exp(l - m));
  for (auto& l : logits) l /= z;
  return logits;
}

nd::Tensor predict_batch(const ZeroShotClassifier& classifier, const nd::Tensor& x) {
  nd::require_matrix(x, "predict_batch embeddings");
  nd::Tensor out({x.rows(), classifier.num_classes()});
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto p = predict(classifier, x.row(i));
    std::copy(p.begin(), p.end(), out.row(i).begin());
  }
  return out;
}

std::size_t argmax(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("argmax of an empty vector");
  return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

std::vector<double> pool_subclasses(std::span<const double> probs, std::span<const SubclassGroup> groups) {
  std::vector<char> used(probs.size(), 0);
  std::vector<double> out;
  for (const auto& g : groups) {
    if (g.members.empty()) throw std::invalid_argument("superclass '" + g.name + "' has no subclasses");
    double best = -std::numeric_limits<double>::infinity();
    for (auto m : g.members) {
      if (m >= probs.size()) {
        throw std::out_of_range("superclass '" + g.name + "' names subclass " + std::to_string(m) + " of " +
                                std::to_string(probs.size()));
      }
      if (used[m]) throw std::invalid_argument("subclass " + std::to_string(m) + " belongs to two superclasses");
      used[m] = 1;
      best = std::max(best, probs[m]);
    }
    out.push_back(best);
  }
  return out;
}

Metrics score_predictions(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                          std::size_t num_classes) {
  if (labels.empty()) throw std::invalid_argument("evaluation set is empty");
  if (predictions.size() != labels.size()) throw std::invalid_argument("prediction and label counts differ");
  std::vector<std::size_t> hits(num_classes, 0), totals(num_classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) {
      throw std::out_of_range("label " + std::to_string(labels[i]) + " outside " + std::to_string(num_classes) +
                              " classes");
    }
    ++totals[labels[i]];
    if (predictions[i] == labels[i]) {
      ++hits[labels[i]];
      ++correct;
    }
  }
  Metrics m;
  m.count = labels.size();
  m.top1 = static_cast<double>(correct) / static_cast<double>(labels.size());
  std::size_t present = 0;
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (!totals[k]) continue;
    ++present;
    m.mean_per_class += static_cast<double>(hits[k]) / static_cast<double>(totals[k]);
  }
  m.mean_per_class /= static_cast<double>(present);
  return m;
}

Metrics evaluate(const ZeroShotClassifier& classifier, const nd::Tensor& image_embeddings,
                 std::span<const std::size_t> labels) {
  if (labels.empty()) throw std::invalid_argument("evaluation set is empty");
  if (image_embeddings.rank() != 2 || image_embeddings.rows() != labels.size()) {
    throw nd::ShapeError("evaluate: " + nd::shape_str(image_embeddings.shape()) + " embeddings for " +
                         std::to_string(labels.size()) + " labels");
  }
  const auto probs = predict_batch(classifier, image_embeddings);
  std::vector<std::size_t> pred(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) pred[i] = argmax(probs.row(i));
  return score_predictions(pred, labels, classifier.num_classes());
}

void save_classifier(const std::filesystem::path& path, const ZeroShotClassifier& classifier,
                     const std::string& fingerprint) {
  classifier.validate();
  nd::MatrixFile f;
  f.matrix = classifier.weights;
  f.header = {{"kind", "zeroshot_classifier"},
              {"class_names", classifier.class_names},
              {"log_scale", classifier.log_scale},
              {"fingerprint", fingerprint}};
  nd::save_matrix_file(path, f);
}

ZeroShotClassifier load_classifier(const std::filesystem::path& path) {
  auto f = nd::load_matrix_file(path);
  if (f.header.value("kind", "") != "zeroshot_classifier") {
    throw std::invalid_argument(path.string() + " is not a zero-shot classifier");
  }
  ZeroShotClassifier c{f.header.at("class_names").get<std::vector<std::string>>(), std::move(f.matrix),
                       f.header.at("log_scale").get<double>()};
  c.validate();
  return c;
}

}  // namespace clip::zeroshot
