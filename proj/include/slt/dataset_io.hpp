#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slt/corpus.hpp"

namespace slt {

inline constexpr std::uint32_t kDatasetVersion = 1;

/// One split on disk. Layout (little-endian):
///   "SLTDATA\0", u32 version, str rng name, u64 config digest, str config JSON,
///   u32 feature_dim, u32 count, then per sample
///   u32 M, u32 U, u32 N, M*feature_dim f32, U i32 glosses, N i32 words,
///   U+1 u32 boundaries; finally u64 FNV-1a of all preceding bytes.
/// Strings are u32 length + bytes.
struct DatasetFile {
  std::string rng_name;
  std::uint64_t config_digest = 0;
  std::string config_json;
  std::size_t feature_dim = 0;
  std::vector<Sample> samples;
};

std::string encode_dataset(const DatasetFile& file);
/// Throws FormatError naming the byte offset of the first problem.
DatasetFile decode_dataset(std::string bytes, const std::string& label = "dataset");

void save_dataset(const DatasetFile& file, const std::string& path);
DatasetFile load_dataset(const std::string& path);

}  // namespace slt
