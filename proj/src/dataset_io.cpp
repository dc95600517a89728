#include "slt/dataset_io.hpp"

#include "slt/binary_io.hpp"

namespace slt {
namespace {

constexpr std::string_view kMagic{"SLTDATA\0", 8};

std::uint32_t to_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffULL) throw std::invalid_argument(std::string("dataset: ") + what + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::string encode_dataset(const DatasetFile& file) {
  ByteWriter w;
  w.bytes(kMagic);
  w.u32(kDatasetVersion);
  w.str(file.rng_name);
  w.u64(file.config_digest);
  w.str(file.config_json);
  w.u32(to_u32(file.feature_dim, "feature_dim"));
  w.u32(to_u32(file.samples.size(), "sample count"));
  for (const Sample& s : file.samples) {
    if (s.features.cols() != file.feature_dim && s.features.numel() != 0) {
      throw std::invalid_argument("dataset: sample feature width " + std::to_string(s.features.cols()) +
                                  " differs from feature_dim " + std::to_string(file.feature_dim));
    }
    if (s.boundaries.size() != s.glosses.size() + 1) {
      throw std::invalid_argument("dataset: sample needs glosses + 1 boundaries");
    }
    w.u32(to_u32(s.features.rows(), "frame count"));
    w.u32(to_u32(s.glosses.size(), "gloss count"));
    w.u32(to_u32(s.words.size(), "word count"));
    for (float v : s.features.values()) w.f32(v);
    for (int g : s.glosses) w.i32(g);
    for (int x : s.words) w.i32(x);
    for (int b : s.boundaries) w.u32(static_cast<std::uint32_t>(b));
  }
  w.checksum();
  return w.buffer();
}

DatasetFile decode_dataset(std::string bytes, const std::string& label) {
  ByteReader r(std::move(bytes), label);
  if (r.bytes(kMagic.size()) != kMagic) r.fail_at(0, "bad magic");
  const std::size_t version_at = r.offset();
  if (const std::uint32_t v = r.u32(); v != kDatasetVersion) {
    throw FormatError(label + ": unsupported version " + std::to_string(v) + " at byte offset " +
                      std::to_string(version_at));
  }
  DatasetFile f;
  f.rng_name = r.str();
  f.config_digest = r.u64();
  f.config_json = r.str();
  f.feature_dim = r.u32();
  const std::uint32_t count = r.u32();
  for (std::uint32_t k = 0; k < count; ++k) {
    Sample s;
    const std::uint32_t m = r.u32(), u = r.u32(), n = r.u32();
    s.features = Tensor<float>(Shape{m, f.feature_dim});
    for (float& v : s.features.values()) v = r.f32();
    s.glosses.resize(u);
    for (int& g : s.glosses) g = r.i32();
    s.words.resize(n);
    for (int& x : s.words) x = r.i32();
    s.boundaries.resize(u + 1);
    for (int& b : s.boundaries) b = static_cast<int>(r.u32());
    f.samples.push_back(std::move(s));
  }
  r.verify_checksum();
  return f;
}

void save_dataset(const DatasetFile& file, const std::string& path) { write_file(path, encode_dataset(file)); }

DatasetFile load_dataset(const std::string& path) { return decode_dataset(read_file(path), path); }

}  // namespace slt
