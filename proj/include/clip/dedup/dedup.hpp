#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clip/encoders/encoders.hpp"
#include "clip/nd/image.hpp"
#include "clip/nd/rng.hpp"
#include "clip/nd/serialize.hpp"

namespace clip::dedup {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  double sample(nd::Rng& rng) const { return lo == hi ? lo : rng.uniform(lo, hi); }
};

enum class Interp { nearest, bilinear };
std::string interp_name(Interp i);
Interp parse_interp(const std::string& name);

/// Resamples to h × w. Output pixel centres map linearly onto input pixel
/// centres' coordinate frame; reads past the border repeat the edge.
nd::Image resize(const nd::Image& image, std::size_t h, std::size_t w, Interp interp);

/// Stage parameters. A stage whose sampled value is the identity is skipped,
/// so zero-width ranges at identity values reproduce the input exactly.
struct AugmentConfig {
  /// Side of the crop as a fraction of the frame; the crop is zoomed back to full size.
  Range crop_scale{0.75, 1.0};
  /// Crop width / height.
  Range aspect{0.85, 1.15};
  Range rotation_degrees{-8.0, 8.0};
  /// Intermediate size as a fraction of the frame for the down-then-up resize.
  Range downscale{0.5, 1.0};
  /// One is drawn for every resampling.
  std::vector<Interp> interpolations{Interp::nearest, Interp::bilinear};
  /// Hue shift in turns, saturation and value multipliers.
  Range hue{-0.04, 0.04};
  Range saturation{0.75, 1.25};
  Range value{0.75, 1.25};
  std::uint64_t seed = 0;

  void validate() const;
  /// Every range pinned at its identity value.
  static AugmentConfig identity();
  /// Smaller distortions, used to plant near-duplicates.
  static AugmentConfig light();
};

nlohmann::json to_json(const AugmentConfig& c);
AugmentConfig augment_config_from_json(const nlohmann::json& j);

/// Crop/zoom with aspect distortion and rotation (one resampling), then
/// down- and up-scaling, then HSV jitter. Output has the input's size.
nd::Image augment(const nd::Image& image, const AugmentConfig& config, nd::Rng& rng);

inline constexpr double kDetectorTemperature = 0.07;

struct DetectorConfig {
  encoders::ImageEncoderConfig encoder;
  std::size_t embed_dim = 64;
  std::size_t batch_size = 64;
  std::size_t steps = 400;
  double base_lr = 2e-3;
  std::int64_t warmup_steps = 40;
  double weight_decay = 0.05;
  std::uint64_t seed = 0;
  AugmentConfig augment;

  void validate() const;
};

nlohmann::json to_json(const DetectorConfig& c);
DetectorConfig detector_config_from_json(const nlohmann::json& j);

/// Image tower plus a linear projection to unit-norm embeddings.
class Detector {
 public:
  Detector(const DetectorConfig& config, nd::Rng& rng);

  nd::Var embed_var(std::span<const nd::Image> images) const;
  /// Unit rows, computed in chunks without recording gradients for reuse.
  nd::Tensor embed(std::span<const nd::Image> images, std::size_t chunk = 128) const;

  const DetectorConfig& config() const { return config_; }
  nd::ParamList parameters() const;
  nd::Checkpoint checkpoint() const;
  static Detector from_checkpoint(const nd::Checkpoint& ckpt);

 private:
  DetectorConfig config_;
  encoders::ImageEncoder encoder_;
  nd::Var projection_;
};

/// The fixed multiplier ln(1/0.07) as a graph constant: it never trains.
nd::Var fixed_log_scale();

/// InfoNCE over (source, view) pairs at the fixed temperature. One pair has
/// no negatives and is an error.
nd::Var detector_loss(const Detector& detector, std::span<const nd::Image> sources,
                      std::span<const nd::Image> views);

/// Fraction of views whose most similar source (cosine) is their own.
double proxy_accuracy(const Detector& detector, std::span<const nd::Image> sources,
                      std::span<const nd::Image> views);

struct DetectorTraining {
  Detector detector;
  std::vector<double> losses;
  /// Proxy accuracy after training on a fresh batch of augmentations.
  double proxy_accuracy = 0.0;
};

/// Each step draws a batch of distinct images (epoch-wise shuffle) and an
/// augmentation of each.
DetectorTraining train_detector(std::span<const nd::Image> images, const DetectorConfig& config);

/// Reference embeddings searched exhaustively.
struct DetectorIndex {
  nd::Tensor embeddings;  // unit rows
  std::vector<std::string> ids;

  std::size_t size() const { return ids.size(); }
  void validate() const;
};

DetectorIndex build_index(const nd::Tensor& embeddings, std::vector<std::string> ids);

/// Highest cosine similarity of each row against the index. Bit-identical
/// rows score exactly 1; any other pair scores below 1.
std::vector<double> max_similarity(const nd::Tensor& queries, const DetectorIndex& index);

struct OverlapSplit {
  std::vector<std::size_t> overlap;
  std::vector<std::size_t> clean;
  std::vector<double> max_similarity;
  std::string warning;
};

/// Overlap iff the max similarity reaches the threshold, which must lie in
/// (−1, 1]. An empty index makes everything clean with a warning.
OverlapSplit split_overlap(const nd::Tensor& eval_embeddings, const DetectorIndex& index, double threshold);

/// Mean-centred, unit-norm pixel vectors: the raw-pixel baseline.
nd::Tensor pixel_embeddings(std::span<const nd::Image> images);

struct RecoveryResult {
  /// Recall at the lowest threshold that still admits no false positive.
  double recall_at_full_precision = 0.0;
  double threshold = 1.0;
  std::size_t planted = 0;
  std::size_t recovered = 0;
};

/// Scores from a split: `planted` flags which eval rows are true duplicates.
RecoveryResult recover(std::span<const double> max_sim, std::span<const bool> planted);

/// Precision and recall of the Overlap set at a threshold.
std::pair<double, double> precision_recall(std::span<const double> max_sim, std::span<const bool> planted,
                                           double threshold);

/// Detector index saved in the embedding-cache format.
void save_index(const std::filesystem::path& path, const DetectorIndex& index, const std::string& fingerprint);
DetectorIndex load_index(const std::filesystem::path& path);

}  // namespace clip::dedup
