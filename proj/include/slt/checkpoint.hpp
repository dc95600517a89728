#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "slt/model.hpp"
#include "slt/optim.hpp"

namespace slt {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor<double> value;

  bool operator==(const NamedTensor&) const = default;
};

/// Parameters (and optionally Adam moments) of a model. Values are held in
/// double, which represents float parameters exactly; `dtype_bytes` records
/// the precision they are written with (4 or 8).
///
/// File layout (little-endian): "SLTCKPT\0", u32 version, u64 config digest,
/// str config JSON, u64 step, u8 dtype_bytes, u32 tensor count, then per
/// tensor str name, u32 rank, rank*u64 dims, raw values; moments follow the
/// parameters as tensors named "adam.m/<param>" and "adam.v/<param>", with
/// u64 adam step count before them. Trailing u64 FNV-1a checksum.
struct ModelCheckpoint {
  std::uint64_t config_digest = 0;
  std::string config_json;
  std::uint64_t step = 0;
  std::uint8_t dtype_bytes = 4;
  std::vector<NamedTensor> params;
  std::uint64_t optimizer_steps = 0;
  std::vector<NamedTensor> adam_m;
  std::vector<NamedTensor> adam_v;

  bool operator==(const ModelCheckpoint&) const = default;
};

template <typename T>
ModelCheckpoint capture_checkpoint(const Model<T>& model, const Adam<T>* optimizer, std::uint64_t step,
                                   std::uint64_t config_digest, std::string config_json);

/// Copies parameters (and moments, when both sides have them) into the model.
/// Throws std::invalid_argument on a missing name or shape mismatch.
template <typename T>
void restore_checkpoint(const ModelCheckpoint& ckpt, Model<T>& model, Adam<T>* optimizer = nullptr);

std::string encode_checkpoint(const ModelCheckpoint& ckpt);
ModelCheckpoint decode_checkpoint(std::string bytes, const std::string& label = "checkpoint");
void save_checkpoint(const ModelCheckpoint& ckpt, const std::string& path);
ModelCheckpoint load_checkpoint(const std::string& path);

/// Parameter-wise arithmetic mean. All inputs must share the config digest
/// and parameter names/shapes. Optimizer state is dropped; step is the
/// latest input step.
ModelCheckpoint average_checkpoints(std::span<const ModelCheckpoint> checkpoints);

}  // namespace slt
