#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "clip/nd/image.hpp"
#include "clip/nd/rng.hpp"
#include "clip/nd/tensor.hpp"

namespace clip::datakit {

inline constexpr std::size_t kDefaultPerQueryCap = 20000;

struct PairRecord {
  /// Where the image came from: a file path, "inline", or a generator tag.
  std::string image_ref;
  nd::Image image;
  std::string text;
  nlohmann::json metadata = nlohmann::json::object();
};

struct QueryTally {
  std::string query;
  std::size_t matched = 0;
  std::size_t admitted = 0;
  friend bool operator==(const QueryTally&, const QueryTally&) = default;
};

struct PairDataset {
  std::vector<PairRecord> records;
  /// One entry per query, in query-list order. Empty for generated data.
  std::vector<QueryTally> manifest;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
};

/// Admits records whose caption contains any query as a case-insensitive
/// substring. Every matching query's `matched` tally counts the record; the
/// first-listed matching query that is still under `per_query_cap` claims it
/// (its `admitted` tally grows and metadata["query"] names it). A record no
/// query has room for is dropped.
PairDataset build_pairs(std::span<const PairRecord> source, const std::vector<std::string>& queries,
                        std::size_t per_query_cap = kDefaultPerQueryCap);

// ---------------------------------------------------------------------------
// Synthetic captioned shapes.

struct RGB {
  double r = 0, g = 0, b = 0;
};

std::vector<std::string> known_shapes();
/// Named colors with their nominal RGB values.
std::vector<std::pair<std::string, RGB>> known_colors();

struct ShapeColor {
  std::string shape;
  std::string color;
  /// "{color} {shape}", the class name used for zero-shot prompts.
  std::string label() const { return color + " " + shape; }
  friend bool operator==(const ShapeColor&, const ShapeColor&) = default;
};

struct SyntheticSpec {
  std::vector<std::string> shapes{"circle", "square", "triangle"};
  std::vector<std::string> colors{"red", "green", "blue", "yellow"};
  /// Size names, each mapped to a radius band; sampled uniformly within a combo.
  std::vector<std::string> sizes{"small", "large"};
  std::size_t images_per_combo = 50;
  /// Placeholders: {shape}, {color}, {size}. One is drawn per image.
  std::vector<std::string> templates{"a photo of a {color} {shape}.", "a {size} {color} {shape}.",
                                     "a {color} {shape} on a dark background.",
                                     "a drawing of a {size} {color} {shape}."};
  std::vector<ShapeColor> held_out;
  std::size_t image_size = 32;
  std::uint64_t seed = 0;

  void validate() const;
  /// Every (shape, color) pair in shape-major order.
  std::vector<ShapeColor> all_combos() const;
  std::vector<ShapeColor> seen_combos() const;
};

struct SyntheticCorpus {
  /// images_per_combo records per seen combo, combo-major.
  PairDataset seen;
  /// The same count per held-out combo, for compositional evaluation only.
  PairDataset held_out;
};

/// Deterministic in the spec (seed included). Pixels are multiples of 1/255.
SyntheticCorpus gen_synthetic(const SyntheticSpec& spec);

/// One shape on a dark, lightly textured background. `radius` is in pixels.
nd::Image render_shape(const std::string& shape, RGB color, double cx, double cy, double radius,
                       double angle, std::size_t size, nd::Rng& rng);

/// Pixel mask of the shape geometry (1 inside) at the same parameters.
std::vector<unsigned char> shape_mask(const std::string& shape, double cx, double cy, double radius,
                                      double angle, std::size_t size);

/// Random multi-object scene (2 to 5 shapes over a two-colour gradient, random
/// palette, optional stripe texture). Used as a generic image corpus.
nd::Image render_scene(nd::Rng& rng, std::size_t size);

// ---------------------------------------------------------------------------
// Files.

/// Binary PPM (P6, maxval 255).
std::string encode_ppm(const nd::Image& image);
nd::Image decode_ppm(std::string_view bytes);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

/// JSONL, one {"image", "text", "meta"} object per line. With `inline_images`
/// the image field is a base64 PPM data URI; otherwise images go to
/// `<dir>/images/NNNNNN.ppm` and the field holds the relative path.
/// The manifest, when present, is written to `<dir>/manifest.json`.
void save_dataset(const std::filesystem::path& dir, const PairDataset& data, bool inline_images = false);
/// Reads `<dir>/pairs.jsonl` (or the given .jsonl file). Relative image paths
/// resolve against the file's directory. Empty captions and unreadable images throw.
PairDataset load_dataset(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Embedding cache.

struct EmbeddingCache {
  nd::Tensor embeddings;  // rows × d
  std::vector<std::string> ids;
  /// Fingerprint of the checkpoint that produced the rows.
  std::string fingerprint;
  nlohmann::json extra = nlohmann::json::object();

  void validate() const;
  /// Appends rows from a cache produced by the same checkpoint.
  void append(const EmbeddingCache& more);
};

void save_cache(const std::filesystem::path& path, const EmbeddingCache& cache);
EmbeddingCache load_cache(const std::filesystem::path& path);
/// Loads a cache that further rows will be appended to; a fingerprint other
/// than `expected_fingerprint` is an error.
EmbeddingCache load_cache_for_append(const std::filesystem::path& path, const std::string& expected_fingerprint);

}  // namespace clip::datakit
