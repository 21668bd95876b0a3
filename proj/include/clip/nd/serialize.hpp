#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "clip/nd/optim.hpp"
#include "clip/nd/tensor.hpp"

namespace clip::nd {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Parameter snapshot plus free-form metadata (model config and the like).
struct Checkpoint {
  std::vector<NamedTensor> tensors;
  nlohmann::json meta = nlohmann::json::object();

  const Tensor* find(std::string_view name) const;
};

/// Layout: "CLIPCKPT", u32 version, u64 header length, JSON header
/// {format_version, tensors:[{name, shape}], meta}, then every tensor's
/// float64 values little-endian in header order.
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint snapshot(const ParamList& params, nlohmann::json meta = nlohmann::json::object());
/// Copies matching tensors into `params`; a missing name or shape mismatch throws.
void restore(ParamList& params, const Checkpoint& ckpt);

/// 64-bit FNV-1a of the encoded checkpoint, as 16 hex digits.
std::string fingerprint(const Checkpoint& ckpt);
std::string fnv1a_hex(std::string_view bytes);

/// Dense matrix with a JSON header: "CLIPMAT1", u64 header length, JSON header
/// (always carrying rows and cols), float64 little-endian payload.
struct MatrixFile {
  Tensor matrix;
  nlohmann::json header = nlohmann::json::object();
};

std::string encode_matrix_file(const MatrixFile& file);
MatrixFile decode_matrix_file(std::string_view bytes);
void save_matrix_file(const std::filesystem::path& path, const MatrixFile& file);
MatrixFile load_matrix_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace clip::nd
