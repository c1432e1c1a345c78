#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "vibhead/error.hpp"
#include "vibhead/model.hpp"

namespace vibhead {

// Binary classifier archive, all integers and floats little-endian:
//
//   "VIBHEAD1"
//   f64 clip_ms; u64 primitive rows, cols; u64 mfcc rows, cols
//   u64 x3 block channels; u64 x12 pool (kh, kw), primitive then mfcc
//   u64 training-config fingerprint
//   u64 label count; i64 labels...
//   u64 tensor count; per tensor: u64 length, f64 values...
//   u64 FNV-1a checksum of every preceding byte
//
// Tensor order: per encoder (primitive, mfcc), per block: kernel, bias,
// gamma, beta, running mean, running variance, [momentum, eps]; then dense
// weight and bias.

inline constexpr std::string_view kArchiveMagic = "VIBHEAD1";

inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {

class ByteWriter {
 public:
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  void tensor(std::span<const double> t) {
    u64(t.size());
    for (double v : t) f64(v);
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string raw(std::size_t n) {
    need(n);
    std::string s(bytes_.begin() + pos_, bytes_.begin() + pos_ + n);
    pos_ += n;
    return s;
  }
  void tensor_into(std::span<double> dst, const char* what) {
    const std::uint64_t n = u64();
    if (n != dst.size())
      fail(ErrorCode::ShapeMismatch, std::string("archive tensor ") + what + " has " + std::to_string(n) +
                                         " values, architecture expects " + std::to_string(dst.size()));
    for (double& v : dst) v = f64();
  }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) fail(ErrorCode::ParseError, "archive truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline void write_encoder(ByteWriter& w, const Encoder& e) {
  for (const auto& b : e.blocks()) {
    w.tensor(b.conv.kernel);
    w.tensor(b.conv.bias);
    w.tensor(b.bn.gamma);
    w.tensor(b.bn.beta);
    w.tensor(b.bn.running_mean);
    w.tensor(b.bn.running_var);
    const double scalars[] = {b.bn.momentum, b.bn.eps};
    w.tensor(scalars);
  }
}

inline void read_encoder(ByteReader& r, Encoder& e) {
  for (auto& b : e.blocks()) {
    r.tensor_into(b.conv.kernel, "conv kernel");
    r.tensor_into(b.conv.bias, "conv bias");
    r.tensor_into(b.bn.gamma, "batchnorm gamma");
    r.tensor_into(b.bn.beta, "batchnorm beta");
    r.tensor_into(b.bn.running_mean, "batchnorm running mean");
    r.tensor_into(b.bn.running_var, "batchnorm running variance");
    double scalars[2] = {};
    r.tensor_into(scalars, "batchnorm scalars");
    b.bn.momentum = scalars[0];
    b.bn.eps = scalars[1];
    for (double v : b.bn.running_var)
      if (!(v > 0.0)) fail(ErrorCode::ParseError, "archive batchnorm running variance must be positive");
  }
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize_model(const ClassifierModel& m) {
  detail::ByteWriter w;
  w.raw(kArchiveMagic);
  const auto& in = m.input();
  w.f64(in.clip_ms);
  w.u64(in.primitive_rows);
  w.u64(in.primitive_cols);
  w.u64(in.mfcc_rows);
  w.u64(in.mfcc_cols);
  const auto& arch = m.architecture();
  for (std::size_t c : arch.channels) w.u64(c);
  for (const auto& p : arch.primitive_pools) {
    w.u64(p.kh);
    w.u64(p.kw);
  }
  for (const auto& p : arch.mfcc_pools) {
    w.u64(p.kh);
    w.u64(p.kw);
  }
  w.u64(m.config_fingerprint());
  w.u64(m.labels().size());
  for (UserId id : m.labels()) w.i64(id);
  w.u64(2 * 3 * 7 + 2);
  detail::write_encoder(w, m.primitive_encoder());
  detail::write_encoder(w, m.mfcc_encoder());
  w.tensor(m.head().weight);
  w.tensor(m.head().bias);
  const std::uint64_t sum = fnv1a64(w.bytes());
  w.u64(sum);
  return std::move(w.bytes());
}

inline ClassifierModel deserialize_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kArchiveMagic.size() + 8) fail(ErrorCode::ParseError, "archive too short");
  const auto body = bytes.first(bytes.size() - 8);
  detail::ByteReader tail(bytes.last(8));
  if (tail.u64() != fnv1a64(body)) fail(ErrorCode::ChecksumMismatch, "archive checksum does not match");
  detail::ByteReader r(body);
  if (r.raw(kArchiveMagic.size()) != kArchiveMagic) fail(ErrorCode::ParseError, "bad archive magic");
  InputDescriptor in;
  in.clip_ms = r.f64();
  in.primitive_rows = r.u64();
  in.primitive_cols = r.u64();
  in.mfcc_rows = r.u64();
  in.mfcc_cols = r.u64();
  Architecture arch;
  for (auto& c : arch.channels) c = r.u64();
  for (auto& p : arch.primitive_pools) {
    p.kh = r.u64();
    p.kw = r.u64();
  }
  for (auto& p : arch.mfcc_pools) {
    p.kh = r.u64();
    p.kw = r.u64();
  }
  const std::uint64_t fingerprint = r.u64();
  const std::uint64_t n_labels = r.u64();
  if (n_labels > 1'000'000) fail(ErrorCode::ParseError, "implausible label count");
  std::vector<UserId> labels;
  for (std::uint64_t i = 0; i < n_labels; ++i) labels.push_back(static_cast<UserId>(r.i64()));
  ClassifierModel m(labels, in, arch);
  m.set_config_fingerprint(fingerprint);
  if (r.u64() != 2 * 3 * 7 + 2) fail(ErrorCode::ShapeMismatch, "archive tensor count does not match architecture");
  detail::read_encoder(r, m.primitive_encoder());
  detail::read_encoder(r, m.mfcc_encoder());
  r.tensor_into(m.head().weight, "dense weight");
  r.tensor_into(m.head().bias, "dense bias");
  if (r.position() != body.size()) fail(ErrorCode::ParseError, "trailing bytes in archive");
  return m;
}

/// Writes to a sibling temporary and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorCode::IoError, "cannot write " + tmp);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) fail(ErrorCode::IoError, "write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::IoError, "rename " + tmp + " -> " + path.string() + ": " + ec.message());
}

inline void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline void save_model(const std::filesystem::path& path, const ClassifierModel& m) {
  write_file_atomic(path, serialize_model(m));
}

inline ClassifierModel load_model(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return deserialize_model(bytes);
  } catch (const Error& e) {
    fail(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace vibhead
