#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clip/contrastive/contrastive.hpp"
#include "clip/datakit/datakit.hpp"
#include "clip/textproc/bpe.hpp"

namespace clip::trainer {

enum class Objective { contrastive, bow };
std::string objective_name(Objective o);
Objective parse_objective(const std::string& name);

struct TrainConfig {
  /// The text vocabulary size is taken from the trained tokenizer.
  contrastive::ModelConfig model;
  /// Target size of the BPE table learned from the captions.
  std::size_t tokenizer_vocab = 320;
  std::size_t batch_size = 64;
  std::size_t epochs = 1;
  /// Caps the run; unset means epochs · steps-per-epoch.
  std::optional<std::size_t> max_steps;
  double base_lr = 2e-3;
  std::int64_t warmup_steps = 100;
  double weight_decay = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-6;
  std::uint64_t seed = 0;
  Objective objective = Objective::contrastive;
  /// Zero-shot evaluation period in steps; 0 evaluates only after the last step.
  std::size_t eval_every = 0;
  /// Stop after the first evaluation at or above this accuracy (unset: never).
  std::optional<double> stop_at_accuracy;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
/// Missing keys keep their defaults.
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Labelled images scored during training. Labels index `class_names`.
struct EvalSet {
  std::vector<std::string> class_names;
  std::vector<nd::Image> images;
  std::vector<std::size_t> labels;

  bool empty() const { return images.empty(); }
  void validate() const;
};

/// Records carrying metadata["label"] become an eval set whose classes are
/// `class_names` (every distinct label, sorted, when empty).
EvalSet eval_set_from(const datakit::PairDataset& data, std::vector<std::string> class_names = {});

struct EvalPoint {
  std::size_t step = 0;
  double top1 = 0.0;
};

struct TrainReport {
  std::vector<double> losses;
  std::vector<double> learning_rates;
  /// exp(log_scale) after each step's clamp.
  std::vector<double> logit_scales;
  std::vector<EvalPoint> evals;
  std::size_t steps = 0;
  std::size_t steps_per_epoch = 0;
  std::string checkpoint_id;
  bool stopped_early = false;

  /// One {"type":"step",...} line per step, one {"type":"eval",...} per
  /// evaluation, then a {"type":"final",...} line.
  std::string jsonl() const;
};

/// Words of the bag-of-words objective: lower-cased alphanumeric runs.
std::vector<std::string> bow_words(std::string_view text);

/// Image-feature → word-presence head for the predictive baseline.
struct BowHead {
  std::vector<std::string> vocabulary;  // sorted
  encoders::Linear head;

  std::ptrdiff_t index_of(const std::string& word) const;
  nd::Tensor targets(const std::vector<std::string>& captions) const;
};

struct TrainResult {
  contrastive::ClipModel model;
  textproc::MergeTable tokenizer;
  std::optional<BowHead> bow;
  TrainReport report;

  /// Every trained tensor (the BoW head included) with the model config and
  /// tokenizer in the meta.
  nd::Checkpoint checkpoint() const;
};

/// Aborted run: a non-finite loss.
struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Throws TrainingDiverged naming the 1-based step, learning rate and logit
/// scale when `loss` is not finite.
void check_loss(double loss, std::size_t step, double lr, double logit_scale);

/// Zero-shot top-1 under the default prompt template. The contrastive model
/// uses cosine similarity; the BoW model scores a prompt by the mean
/// log-sigmoid of its in-vocabulary words.
double zero_shot_accuracy(const TrainResult& result, const EvalSet& eval);

/// Trains from scratch. Deterministic in the config (seed included); the
/// logit scale is clamped after every update. Non-finite pixels are rejected
/// before the first step.
TrainResult train(const datakit::PairDataset& data, const TrainConfig& config, const EvalSet& eval = {});

struct ObjectiveOutcome {
  Objective objective = Objective::contrastive;
  /// First evaluated step at or above the target; unset means not reached.
  std::optional<std::size_t> steps_to_target;
  double final_accuracy = 0.0;
  std::vector<EvalPoint> curve;
};

/// Runs every config on the same data. Configs must be identical apart from
/// the objective; target must lie in (0, 1].
std::vector<ObjectiveOutcome> compare_objectives(const datakit::PairDataset& data,
                                                 const std::vector<TrainConfig>& configs, const EvalSet& eval,
                                                 double target);
nlohmann::json to_json(const ObjectiveOutcome& o);

}  // namespace clip::trainer
