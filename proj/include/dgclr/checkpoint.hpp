#pragma once

// Binary checkpoint:
//
//   "DGCLRCK1"
//   u64 length, config text (key = value lines, model dimensions included)
//   u64 epoch, f64 best validation MSE
//   u64 tensor count, then per tensor in name order:
//     u32 name length, name bytes, u32 rank, u64 extents[rank],
//     f64 value[n], f64 adam_m[n], f64 adam_v[n], u64 adam step
//   u64 FNV-1a hash of every preceding byte
//
// All integers and floats are little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dgclr/config.hpp"
#include "dgclr/error.hpp"
#include "dgclr/io.hpp"
#include "dgclr/model.hpp"

namespace dgclr {

inline constexpr char kCheckpointMagic[] = "DGCLRCK1";

struct CheckpointInfo {
  TrainConfig config;
  ModelDims dims;
  std::uint64_t epoch = 0;
  double best_val_mse = 0;
};

namespace ckpt {

inline std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ull;
  }
  return h;
}

template <typename T>
void put(std::string& out, T v) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
}

inline void putF64(std::string& out, double v) { put(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  Reader(const std::string& buf, std::size_t end) : buf_(buf), end_(end) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  double getF64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    if (n > end_ - pos_) throw FormatError("checkpoint is truncated");
  }
  const std::string& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

inline std::string dimsText(const ModelDims& dims) {
  std::string rv;
  for (std::size_t i = 0; i < dims.rating_values.size(); ++i) rv += (i ? "," : "") + formatDouble(dims.rating_values[i]);
  return "num_users = " + std::to_string(dims.num_users) + "\nnum_items = " + std::to_string(dims.num_items) +
         "\nnum_ratings = " + std::to_string(dims.num_ratings) + "\nreview_dim = " + std::to_string(dims.review_dim) +
         "\nrating_values = " + rv + "\n";
}

inline void parseHeaderText(const std::string& text, TrainConfig& cfg, ModelDims& dims) {
  std::istringstream is(text);
  std::string line, cfg_text;
  auto toSize = [](const std::string& v) {
    try {
      std::size_t pos = 0;
      auto x = std::stoull(v, &pos);
      if (pos != v.size()) throw FormatError("bad integer");
      return static_cast<std::size_t>(x);
    } catch (const std::exception&) {
      throw FormatError("checkpoint header: '" + v + "' is not an integer");
    }
  };
  bool seen[5] = {};
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const auto key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key == "num_users") dims.num_users = toSize(value), seen[0] = true;
    else if (key == "num_items") dims.num_items = toSize(value), seen[1] = true;
    else if (key == "num_ratings") dims.num_ratings = toSize(value), seen[2] = true;
    else if (key == "review_dim") dims.review_dim = toSize(value), seen[3] = true;
    else if (key == "rating_values") {
      seen[4] = true;
      std::istringstream vs(value);
      std::string tok;
      while (std::getline(vs, tok, ',')) {
        try {
          dims.rating_values.push_back(std::stod(tok));
        } catch (const std::exception&) {
          throw FormatError("checkpoint header: bad rating value '" + tok + "'");
        }
      }
    } else cfg_text += line + "\n";
  }
  for (bool s : seen)
    if (!s) throw FormatError("checkpoint header is missing model dimensions");
  try {
    cfg = parseConfig(cfg_text);
  } catch (const Error& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  dims.d = cfg.d;
  dims.K = cfg.K;
  dims.L = cfg.L;
}

struct TensorRecord {
  std::string name;
  Shape shape;
  std::vector<double> value, m, v;
  std::uint64_t step = 0;
};

}  // namespace ckpt

template <typename Real>
std::string encodeCheckpoint(const Model<Real>& model, std::uint64_t epoch, double best_val_mse) {
  std::string out(kCheckpointMagic, 8);
  const std::string header = model.config().toText() + ckpt::dimsText(model.dims());
  ckpt::put<std::uint64_t>(out, header.size());
  out += header;
  ckpt::put<std::uint64_t>(out, epoch);
  ckpt::putF64(out, best_val_mse);
  ckpt::put<std::uint64_t>(out, model.params().size());
  model.params().forEach([&](const std::string& name, const Parameter<Real>& p) {
    ckpt::put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    ckpt::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.shape().size()));
    for (auto e : p.shape()) ckpt::put<std::uint64_t>(out, e);
    for (auto x : p.value.values()) ckpt::putF64(out, static_cast<double>(x));
    for (auto x : p.adam_m.values()) ckpt::putF64(out, static_cast<double>(x));
    for (auto x : p.adam_v.values()) ckpt::putF64(out, static_cast<double>(x));
    ckpt::put<std::uint64_t>(out, p.step_count);
  });
  ckpt::put<std::uint64_t>(out, ckpt::fnv1a(out.data(), out.size()));
  return out;
}

template <typename Real>
void saveCheckpoint(const std::string& path, const Model<Real>& model, std::uint64_t epoch = 0,
                    double best_val_mse = std::numeric_limits<double>::quiet_NaN()) {
  atomicWrite(path, encodeCheckpoint(model, epoch, best_val_mse));
}

// Throws when a requested configuration cannot reuse a stored model.
inline void checkCompatible(const TrainConfig& stored, const TrainConfig& requested) {
  auto mismatch = [](const std::string& key, const std::string& a, const std::string& b) {
    throw Error("checkpoint was trained with " + key + " = " + a + " but " + key + " = " + b + " was requested");
  };
  if (stored.d != requested.d) mismatch("d", std::to_string(stored.d), std::to_string(requested.d));
  if (stored.K != requested.K) mismatch("K", std::to_string(stored.K), std::to_string(requested.K));
  if (stored.L != requested.L) mismatch("L", std::to_string(stored.L), std::to_string(requested.L));
  if (stored.variant != requested.variant)
    mismatch("variant", variantName(stored.variant), variantName(requested.variant));
}

// Decodes a checkpoint into a fresh model. Either the whole file is accepted
// or an error is thrown; nothing is modified on failure.
template <typename Real>
Model<Real> decodeCheckpoint(const std::string& buf, CheckpointInfo* info = nullptr,
                             const TrainConfig* requested = nullptr) {
  if (buf.size() < 8 || std::memcmp(buf.data(), kCheckpointMagic, 6) != 0)
    throw FormatError("not a checkpoint file (bad magic)");
  if (std::memcmp(buf.data(), kCheckpointMagic, 8) != 0)
    throw FormatError("unsupported checkpoint version '" + buf.substr(0, 8) + "' (expected DGCLRCK1)");
  if (buf.size() < 16) throw FormatError("checkpoint is truncated");
  const std::size_t body = buf.size() - 8;
  {
    const std::string stored = buf.substr(body);
    ckpt::Reader tail(stored, 8);
    if (tail.get<std::uint64_t>() != ckpt::fnv1a(buf.data(), body))
      throw FormatError("checkpoint checksum mismatch (file is corrupt or truncated)");
  }
  ckpt::Reader r(buf, body);
  r.bytes(8);
  CheckpointInfo meta;
  const auto hlen = r.get<std::uint64_t>();
  ckpt::parseHeaderText(r.bytes(hlen), meta.config, meta.dims);
  meta.epoch = r.get<std::uint64_t>();
  meta.best_val_mse = r.getF64();
  const auto count = r.get<std::uint64_t>();
  std::vector<ckpt::TensorRecord> records;
  for (std::uint64_t t = 0; t < count; ++t) {
    ckpt::TensorRecord rec;
    rec.name = r.bytes(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    if (rank == 0 || rank > 2) throw FormatError("checkpoint tensor '" + rec.name + "' has invalid rank");
    for (std::uint32_t i = 0; i < rank; ++i) rec.shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
    const std::size_t n = shapeSize(rec.shape);
    for (auto* vec : {&rec.value, &rec.m, &rec.v}) {
      vec->resize(n);
      for (auto& x : *vec) x = r.getF64();
    }
    rec.step = r.get<std::uint64_t>();
    records.push_back(std::move(rec));
  }
  if (!r.done()) throw FormatError("checkpoint has trailing bytes");
  if (requested) checkCompatible(meta.config, *requested);

  Model<Real> model(meta.config, meta.dims);
  if (records.size() != model.params().size())
    throw FormatError("checkpoint holds " + std::to_string(records.size()) + " tensors, model expects " +
                      std::to_string(model.params().size()));
  for (const auto& rec : records) {
    if (!model.params().contains(rec.name)) throw FormatError("checkpoint tensor '" + rec.name + "' is unknown");
    if (model.params().at(rec.name).shape() != rec.shape)
      throw FormatError("checkpoint tensor '" + rec.name + "' has shape " + shapeString(rec.shape) + ", expected " +
                        shapeString(model.params().at(rec.name).shape()));
  }
  for (const auto& rec : records) {
    auto& p = model.params().at(rec.name);
    for (std::size_t i = 0; i < rec.value.size(); ++i) {
      p.value[i] = static_cast<Real>(rec.value[i]);
      p.adam_m[i] = static_cast<Real>(rec.m[i]);
      p.adam_v[i] = static_cast<Real>(rec.v[i]);
    }
    p.step_count = rec.step;
  }
  if (info) *info = meta;
  return model;
}

template <typename Real>
Model<Real> loadCheckpoint(const std::string& path, CheckpointInfo* info = nullptr,
                           const TrainConfig* requested = nullptr) {
  return decodeCheckpoint<Real>(readFile(path), info, requested);
}

}  // namespace dgclr
