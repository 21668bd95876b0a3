#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clip/contrastive/contrastive.hpp"
#include "clip/datakit/datakit.hpp"
#include "clip/textproc/bpe.hpp"

namespace clip::cli {

/// Bad input from the user: exit code 2.
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
};

/// JSON object, or key=value lines with dotted keys ("model.image.width = 32").
/// Values parse as JSON when they can and are strings otherwise. Empty path
/// yields an empty object.
nlohmann::json load_config(const std::string& path);

/// Pretty JSON plus a trailing newline, to --out or stdout.
void emit(const Globals& g, const nlohmann::json& report);

void require_file(const std::filesystem::path& path, const std::string& what);

/// 64-bit FNV-1a of a file's bytes.
std::string file_digest(const std::filesystem::path& path);

struct LoadedModel {
  contrastive::ClipModel model;
  textproc::MergeTable tokenizer;
  std::string fingerprint;
};

/// A checkpoint written by `train`: the model plus the tokenizer in its meta.
LoadedModel load_model(const std::filesystem::path& path);

datakit::PairDataset load_data(const std::filesystem::path& path);

/// Distinct metadata labels, sorted. Records without one are an error.
std::vector<std::string> dataset_labels(const datakit::PairDataset& data);

}  // namespace clip::cli
