#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "delivr/bias.hpp"
#include "delivr/common.hpp"
#include "delivr/tensor.hpp"

namespace delivr::io {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
/// Wrong magic bytes — the file is not the expected format at all.
struct BadMagic : IoError {
  using IoError::IoError;
};
/// Right format, unsupported version.
struct BadVersion : IoError {
  using IoError::IoError;
};
/// Truncated or internally inconsistent payload.
struct CorruptFile : IoError {
  using IoError::IoError;
};

namespace detail {

inline void put_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}
inline void get_bytes(std::istream& is, void* p, std::size_t n, const char* ctx) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n)
    throw CorruptFile(std::string("truncated file while reading ") + ctx);
}

template <class T>
void put(std::ostream& os, T v) {
  put_bytes(os, &v, sizeof(T));
}
template <class T>
T get(std::istream& is, const char* ctx) {
  T v;
  get_bytes(is, &v, sizeof(T), ctx);
  return v;
}

inline void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  put_bytes(os, s.data(), s.size());
}
inline std::string get_string(std::istream& is, const char* ctx) {
  auto n = get<std::uint32_t>(is, ctx);
  std::string s(n, '\0');
  get_bytes(is, s.data(), n, ctx);
  return s;
}

inline void check_magic(std::istream& is, const char expect[4], const char* format) {
  char m[4];
  get_bytes(is, m, 4, "magic");
  if (std::memcmp(m, expect, 4) != 0)
    throw BadMagic(std::string("bad magic for ") + format + " file (got '" +
                   std::string(m, 4) + "', want '" + std::string(expect, 4) + "')");
}

inline std::uint32_t check_version(std::istream& is, std::uint32_t supported,
                                   const char* format) {
  auto v = get<std::uint32_t>(is, "version");
  if (v != supported)
    throw BadVersion(std::string("unsupported ") + format + " version " + std::to_string(v) +
                     " (supported: " + std::to_string(supported) + ")");
  return v;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  return os;
}
inline std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path);
  return is;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// DLVB: bias stack dump. magic, version u32, T u32, N u32, then row-major f64
// payloads in the order space/time/decay/mask/total.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kBiasDumpVersion = 1;

inline void write_bias_dump(const std::string& path, const BiasStack& st) {
  auto os = detail::open_out(path);
  detail::put_bytes(os, "DLVB", 4);
  detail::put<std::uint32_t>(os, kBiasDumpVersion);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(st.frames));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(st.n));
  auto put_mat = [&os](const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) detail::put<double>(os, m(r, c));
  };
  put_mat(st.b_space);
  put_mat(st.b_time);
  put_mat(st.decay);
  put_mat(st.mask);
  put_mat(st.b_total);
  if (!os) throw IoError("write failed: " + path);
}

inline BiasStack read_bias_dump(const std::string& path) {
  auto is = detail::open_in(path);
  detail::check_magic(is, "DLVB", "bias dump");
  detail::check_version(is, kBiasDumpVersion, "bias dump");
  BiasStack st;
  st.frames = detail::get<std::uint32_t>(is, "T");
  st.n = detail::get<std::uint32_t>(is, "N");
  auto get_mat = [&is](std::size_t rows, std::size_t cols, const char* ctx) {
    Eigen::MatrixXd m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
            detail::get<double>(is, ctx);
    return m;
  };
  const std::size_t tn = st.frames * st.n;
  st.b_space = get_mat(tn, tn, "b_space");
  st.b_time = get_mat(st.frames, st.frames, "b_time");
  st.decay = get_mat(st.frames, st.frames, "decay");
  st.mask = get_mat(st.frames, st.frames, "mask");
  st.b_total = get_mat(tn, tn, "b_total");
  return st;
}

// ---------------------------------------------------------------------------
// DLVC: checkpoint. magic, version u32, count u32, then per parameter:
// name (u32 length + bytes), rank u32, dims u64..., f32 payload.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensorF32 {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

inline void write_checkpoint(const std::string& path, const std::vector<NamedTensorF32>& params) {
  auto os = detail::open_out(path);
  detail::put_bytes(os, "DLVC", 4);
  detail::put<std::uint32_t>(os, kCheckpointVersion);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    detail::put_string(os, p.name);
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(p.shape.size()));
    for (std::size_t d : p.shape) detail::put<std::uint64_t>(os, d);
    if (shape_numel(p.shape) != p.data.size())
      throw IoError("checkpoint: shape/data mismatch for " + p.name);
    detail::put_bytes(os, p.data.data(), p.data.size() * sizeof(float));
  }
  if (!os) throw IoError("write failed: " + path);
}

inline std::vector<NamedTensorF32> read_checkpoint(const std::string& path) {
  auto is = detail::open_in(path);
  detail::check_magic(is, "DLVC", "checkpoint");
  detail::check_version(is, kCheckpointVersion, "checkpoint");
  auto count = detail::get<std::uint32_t>(is, "param count");
  std::vector<NamedTensorF32> out(count);
  for (auto& p : out) {
    p.name = detail::get_string(is, "param name");
    auto rank = detail::get<std::uint32_t>(is, "param rank");
    p.shape.resize(rank);
    for (auto& d : p.shape) d = detail::get<std::uint64_t>(is, "param dim");
    p.data.resize(shape_numel(p.shape));
    detail::get_bytes(is, p.data.data(), p.data.size() * sizeof(float), "param payload");
  }
  return out;
}

// ---------------------------------------------------------------------------
// DLVD: one synthetic clip per file. magic, version u32, config echo (JSON
// string), dims u32 x4 (T,H,W,C), f32 payloads: rainy frames, clean center,
// true angles, streak angle, then seed u64.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kDatasetVersion = 1;

struct ClipRecord {
  std::string config_echo;  // JSON text of the generator config
  std::uint32_t t = 0, h = 0, w = 0, c = 0;
  std::vector<float> rainy;         // T*H*W*C
  std::vector<float> clean_center;  // H*W*C
  std::vector<float> true_angles;   // T
  float streak_angle = 0.f;
  std::uint64_t seed = 0;
};

inline void write_clip(const std::string& path, const ClipRecord& r) {
  auto os = detail::open_out(path);
  detail::put_bytes(os, "DLVD", 4);
  detail::put<std::uint32_t>(os, kDatasetVersion);
  detail::put_string(os, r.config_echo);
  detail::put<std::uint32_t>(os, r.t);
  detail::put<std::uint32_t>(os, r.h);
  detail::put<std::uint32_t>(os, r.w);
  detail::put<std::uint32_t>(os, r.c);
  detail::put_bytes(os, r.rainy.data(), r.rainy.size() * sizeof(float));
  detail::put_bytes(os, r.clean_center.data(), r.clean_center.size() * sizeof(float));
  detail::put_bytes(os, r.true_angles.data(), r.true_angles.size() * sizeof(float));
  detail::put<float>(os, r.streak_angle);
  detail::put<std::uint64_t>(os, r.seed);
  if (!os) throw IoError("write failed: " + path);
}

inline ClipRecord read_clip(const std::string& path) {
  auto is = detail::open_in(path);
  detail::check_magic(is, "DLVD", "dataset");
  detail::check_version(is, kDatasetVersion, "dataset");
  ClipRecord r;
  r.config_echo = detail::get_string(is, "config echo");
  r.t = detail::get<std::uint32_t>(is, "T");
  r.h = detail::get<std::uint32_t>(is, "H");
  r.w = detail::get<std::uint32_t>(is, "W");
  r.c = detail::get<std::uint32_t>(is, "C");
  const std::size_t frame = static_cast<std::size_t>(r.h) * r.w * r.c;
  r.rainy.resize(static_cast<std::size_t>(r.t) * frame);
  r.clean_center.resize(frame);
  r.true_angles.resize(r.t);
  detail::get_bytes(is, r.rainy.data(), r.rainy.size() * sizeof(float), "rainy frames");
  detail::get_bytes(is, r.clean_center.data(), r.clean_center.size() * sizeof(float),
                    "clean center");
  detail::get_bytes(is, r.true_angles.data(), r.true_angles.size() * sizeof(float),
                    "true angles");
  r.streak_angle = detail::get<float>(is, "streak angle");
  r.seed = detail::get<std::uint64_t>(is, "seed");
  return r;
}

}  // namespace delivr::io
