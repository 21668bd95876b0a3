#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "clip/contrastive/contrastive.hpp"
#include "clip/nd/image.hpp"
#include "clip/nd/tensor.hpp"
#include "clip/textproc/bpe.hpp"

namespace clip::zeroshot {

inline constexpr std::string_view kLabelPlaceholder = "{label}";
inline constexpr std::string_view kDefaultTemplate = "a photo of a {label}.";

/// Caption pattern with exactly one {label} placeholder.
class PromptTemplate {
 public:
  explicit PromptTemplate(std::string pattern);
  std::string fill(std::string_view label) const;
  const std::string& pattern() const { return pattern_; }

 private:
  std::string pattern_;
  std::size_t slot_;
};

/// One pattern per non-empty line; lines starting with '#' are comments.
std::vector<PromptTemplate> parse_templates(std::string_view text);
std::vector<PromptTemplate> load_templates(const std::filesystem::path& path);
std::vector<PromptTemplate> default_templates();

struct ZeroShotClassifier {
  std::vector<std::string> class_names;
  nd::Tensor weights;  // K × d_e, unit rows
  double log_scale = 0.0;

  void validate() const;
  std::size_t num_classes() const { return class_names.size(); }
};

/// Maps a list of prompts to one embedding row each (any norm, never zero).
using TextEmbedder = std::function<nd::Tensor(const std::vector<std::string>&)>;

/// Each class weight is the re-normalized mean of its unit-normalized prompt
/// embeddings.
ZeroShotClassifier build_classifier(const std::vector<std::string>& class_names,
                                    std::span<const PromptTemplate> templates, const TextEmbedder& embed,
                                    double log_scale);
ZeroShotClassifier build_classifier(const std::vector<std::string>& class_names,
                                    std::span<const PromptTemplate> templates, const contrastive::ClipModel& model,
                                    const textproc::MergeTable& tokenizer);

/// Joint embeddings of texts/images without recording gradients, in chunks.
nd::Tensor encode_texts(const contrastive::ClipModel& model, const textproc::MergeTable& tokenizer,
                        const std::vector<std::string>& texts, std::size_t chunk = 64);
nd::Tensor encode_images(const contrastive::ClipModel& model, std::span<const nd::Image> images,
                         std::size_t chunk = 64);

/// softmax(exp(log_scale) · W · x). `x` must be unit-norm within 1e-6.
std::vector<double> predict(const ZeroShotClassifier& classifier, std::span<const double> image_embedding);
/// Row-wise predict over an N × d_e matrix.
nd::Tensor predict_batch(const ZeroShotClassifier& classifier, const nd::Tensor& image_embeddings);
std::size_t argmax(std::span<const double> scores);

struct SubclassGroup {
  std::string name;
  std::vector<std::size_t> members;
};

/// Superclass score = max over its members. Groups must be non-empty,
/// pairwise disjoint, and index into `probs`.
std::vector<double> pool_subclasses(std::span<const double> probs, std::span<const SubclassGroup> groups);

struct Metrics {
  double top1 = 0.0;
  /// Mean over classes present in the labels of per-class accuracy.
  double mean_per_class = 0.0;
  std::size_t count = 0;
};

Metrics score_predictions(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                          std::size_t num_classes);
Metrics evaluate(const ZeroShotClassifier& classifier, const nd::Tensor& image_embeddings,
                 std::span<const std::size_t> labels);

/// Matrix file: weights plus class names and the log scale in the header.
void save_classifier(const std::filesystem::path& path, const ZeroShotClassifier& classifier,
                     const std::string& fingerprint = "");
ZeroShotClassifier load_classifier(const std::filesystem::path& path);

}  // namespace clip::zeroshot
