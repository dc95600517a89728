#include "slt/checkpoint.hpp"

#include <algorithm>
#include <stdexcept>

#include "slt/binary_io.hpp"

namespace slt {
namespace {

constexpr std::string_view kMagic{"SLTCKPT\0", 8};

template <typename T>
std::vector<NamedTensor> named(const ParameterStore<T>& params, const std::vector<Tensor<T>>* values,
                               const std::string& prefix) {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor<T>& v = values ? (*values)[i] : params[i].value;
    out.push_back({prefix + params[i].name, v.template cast<double>()});
  }
  return out;
}

template <typename T>
void copy_into(const NamedTensor& src, Tensor<T>& dst, const std::string& what) {
  if (src.value.shape() != dst.shape()) {
    throw std::invalid_argument("checkpoint: " + what + " '" + src.name + "' has shape " + shape_str(src.value.shape()) +
                                ", model expects " + shape_str(dst.shape()));
  }
  dst = src.value.cast<T>();
}

void write_tensors(ByteWriter& w, const std::vector<NamedTensor>& ts, std::uint8_t dtype) {
  w.u32(static_cast<std::uint32_t>(ts.size()));
  for (const NamedTensor& t : ts) {
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.value.rank()));
    for (std::size_t d : t.value.shape()) w.u64(d);
    for (double v : t.value.values()) {
      if (dtype == 4) {
        w.f32(static_cast<float>(v));
      } else {
        w.f64(v);
      }
    }
  }
}

std::vector<NamedTensor> read_tensors(ByteReader& r, std::uint8_t dtype) {
  const std::uint32_t count = r.u32();
  std::vector<NamedTensor> out;
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedTensor t;
    t.name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 8) r.fail("implausible tensor rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    const std::size_t n = shape_numel(shape);
    if (n * dtype > r.remaining()) r.fail("truncated tensor '" + t.name + "'");
    std::vector<double> values(n);
    for (double& v : values) v = dtype == 4 ? static_cast<double>(r.f32()) : r.f64();
    t.value = Tensor<double>(std::move(shape), std::move(values));
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

template <typename T>
ModelCheckpoint capture_checkpoint(const Model<T>& model, const Adam<T>* optimizer, std::uint64_t step,
                                   std::uint64_t config_digest, std::string config_json) {
  ModelCheckpoint c;
  c.config_digest = config_digest;
  c.config_json = std::move(config_json);
  c.step = step;
  c.dtype_bytes = sizeof(T);
  c.params = named<T>(model.params(), nullptr, "");
  if (optimizer) {
    c.optimizer_steps = optimizer->steps();
    c.adam_m = named<T>(model.params(), &optimizer->first_moments(), "adam.m/");
    c.adam_v = named<T>(model.params(), &optimizer->second_moments(), "adam.v/");
  }
  return c;
}

template <typename T>
void restore_checkpoint(const ModelCheckpoint& ckpt, Model<T>& model, Adam<T>* optimizer) {
  ParameterStore<T>& params = model.params();
  if (ckpt.params.size() != params.size()) {
    throw std::invalid_argument("checkpoint: holds " + std::to_string(ckpt.params.size()) + " parameters, model has " +
                                std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (ckpt.params[i].name != params[i].name) {
      throw std::invalid_argument("checkpoint: parameter " + std::to_string(i) + " is '" + ckpt.params[i].name +
                                  "', model expects '" + params[i].name + "'");
    }
    copy_into(ckpt.params[i], params[i].value, "parameter");
  }
  if (optimizer && !ckpt.adam_m.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      copy_into(ckpt.adam_m.at(i), optimizer->first_moments()[i], "moment");
      copy_into(ckpt.adam_v.at(i), optimizer->second_moments()[i], "moment");
    }
    optimizer->set_steps(ckpt.optimizer_steps);
  }
}

std::string encode_checkpoint(const ModelCheckpoint& c) {
  if (c.dtype_bytes != 4 && c.dtype_bytes != 8) throw std::invalid_argument("checkpoint: dtype must be 4 or 8 bytes");
  ByteWriter w;
  w.bytes(kMagic);
  w.u32(kCheckpointVersion);
  w.u64(c.config_digest);
  w.str(c.config_json);
  w.u64(c.step);
  w.u8(c.dtype_bytes);
  write_tensors(w, c.params, c.dtype_bytes);
  w.u64(c.optimizer_steps);
  std::vector<NamedTensor> moments = c.adam_m;
  moments.insert(moments.end(), c.adam_v.begin(), c.adam_v.end());
  write_tensors(w, moments, c.dtype_bytes);
  w.checksum();
  return w.buffer();
}

ModelCheckpoint decode_checkpoint(std::string bytes, const std::string& label) {
  ByteReader r(std::move(bytes), label);
  if (r.bytes(kMagic.size()) != kMagic) r.fail_at(0, "bad magic");
  const std::size_t version_at = r.offset();
  if (const std::uint32_t v = r.u32(); v != kCheckpointVersion) {
    throw FormatError(label + ": unsupported version " + std::to_string(v) + " at byte offset " +
                      std::to_string(version_at));
  }
  ModelCheckpoint c;
  c.config_digest = r.u64();
  c.config_json = r.str();
  c.step = r.u64();
  c.dtype_bytes = r.u8();
  if (c.dtype_bytes != 4 && c.dtype_bytes != 8) r.fail("dtype must be 4 or 8 bytes");
  c.params = read_tensors(r, c.dtype_bytes);
  c.optimizer_steps = r.u64();
  std::vector<NamedTensor> moments = read_tensors(r, c.dtype_bytes);
  if (moments.size() % 2 != 0) r.fail("odd number of optimizer moment tensors");
  const auto half = static_cast<std::ptrdiff_t>(moments.size() / 2);
  c.adam_m.assign(moments.begin(), moments.begin() + half);
  c.adam_v.assign(moments.begin() + half, moments.end());
  r.verify_checksum();
  return c;
}

void save_checkpoint(const ModelCheckpoint& ckpt, const std::string& path) {
  write_file(path, encode_checkpoint(ckpt));
}

ModelCheckpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path), path); }

ModelCheckpoint average_checkpoints(std::span<const ModelCheckpoint> cks) {
  if (cks.empty()) throw std::invalid_argument("average: no checkpoints");
  const ModelCheckpoint& first = cks.front();
  ModelCheckpoint out;
  out.config_digest = first.config_digest;
  out.config_json = first.config_json;
  out.dtype_bytes = first.dtype_bytes;
  out.params = first.params;
  for (NamedTensor& t : out.params) t.value.fill(0.0);
  for (std::size_t k = 0; k < cks.size(); ++k) {
    const ModelCheckpoint& c = cks[k];
    if (c.config_digest != first.config_digest) {
      throw std::invalid_argument("average: checkpoint " + std::to_string(k) + " has config digest " +
                                  std::to_string(c.config_digest) + ", expected " + std::to_string(first.config_digest));
    }
    if (c.params.size() != out.params.size()) throw std::invalid_argument("average: parameter count mismatch");
    for (std::size_t i = 0; i < out.params.size(); ++i) {
      if (c.params[i].name != out.params[i].name || c.params[i].value.shape() != out.params[i].value.shape()) {
        throw std::invalid_argument("average: parameter '" + c.params[i].name + "' " +
                                    shape_str(c.params[i].value.shape()) + " does not match '" + out.params[i].name +
                                    "' " + shape_str(out.params[i].value.shape()));
      }
      auto dst = out.params[i].value.values();
      auto src = c.params[i].value.values();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
    out.step = std::max(out.step, c.step);
  }
  const double n = static_cast<double>(cks.size());
  for (NamedTensor& t : out.params)
    for (double& v : t.value.values()) v /= n;
  return out;
}

template ModelCheckpoint capture_checkpoint<float>(const Model<float>&, const Adam<float>*, std::uint64_t, std::uint64_t,
                                                   std::string);
template ModelCheckpoint capture_checkpoint<double>(const Model<double>&, const Adam<double>*, std::uint64_t,
                                                    std::uint64_t, std::string);
template void restore_checkpoint<float>(const ModelCheckpoint&, Model<float>&, Adam<float>*);
template void restore_checkpoint<double>(const ModelCheckpoint&, Model<double>&, Adam<double>*);

}  // namespace slt
