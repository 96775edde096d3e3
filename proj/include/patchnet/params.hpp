#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "patchnet/error.hpp"
#include "patchnet/tensor.hpp"

namespace patchnet::nn {

// Named trainable tensors with deterministic (name-sorted) iteration order.
//
// Naming convention used throughout the model: weight matrices subject to L2
// regularization end in "/W", biases in "/b", embedding tables in
// "/embedding".
class ParamStore {
public:
  Tensor& add(const std::string& name, std::vector<std::size_t> shape) {
    if (params_.count(name)) fail("duplicate parameter name: " + name);
    auto [it, ok] = params_.emplace(name, Tensor(std::move(shape), true));
    (void)ok;
    return it->second;
  }

  Tensor& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) fail("unknown parameter: " + name);
    return it->second;
  }
  const Tensor& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) fail("unknown parameter: " + name);
    return it->second;
  }
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grads() {
    for (auto& [name, t] : params_) t.zero_grad();
  }

private:
  std::map<std::string, Tensor> params_;
};

inline bool is_weight_matrix(const std::string& name) {
  return name.size() >= 2 && name.compare(name.size() - 2, 2, "/W") == 0;
}

// lambda * sum of squared entries over weight matrices only
inline double l2_penalty(const ParamStore& params, double lambda) {
  if (lambda == 0.0) return 0.0;
  double acc = 0.0;
  for (const auto& [name, t] : params) {
    if (!is_weight_matrix(name)) continue;
    for (double v : t.values) acc += v * v;
  }
  return lambda * acc;
}

inline void add_l2_gradients(ParamStore& params, double lambda) {
  if (lambda == 0.0) return;
  for (auto& [name, t] : params) {
    if (!is_weight_matrix(name)) continue;
    for (std::size_t i = 0; i < t.size(); ++i) t.grad[i] += 2.0 * lambda * t.values[i];
  }
}

namespace io {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f64(std::ostream& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline std::uint32_t get_u32(std::istream& in, const std::string& where) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) fail("truncated file: " + where);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline std::uint64_t get_u64(std::istream& in, const std::string& where) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) fail("truncated file: " + where);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline double get_f64(std::istream& in, const std::string& where) {
  return std::bit_cast<double>(get_u64(in, where));
}

}  // namespace io

inline constexpr char kParamsMagic[] = "patchnet-params";
inline constexpr std::uint32_t kParamsVersion = 1;

// Record layout per tensor: name (u32 length + bytes), rank (u32),
// dims (u64 each), then row-major little-endian f64 values.
inline void save_params(const ParamStore& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write " + path);
  out.write(kParamsMagic, sizeof(kParamsMagic) - 1);
  io::put_u32(out, kParamsVersion);
  io::put_u64(out, params.size());
  for (const auto& [name, t] : params) {
    io::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    io::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape) io::put_u64(out, d);
    for (double v : t.values) io::put_f64(out, v);
  }
  if (!out) fail("short write: " + path);
}

inline ParamStore load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open " + path);
  char magic[sizeof(kParamsMagic) - 1];
  if (!in.read(magic, sizeof(magic)) ||
      std::memcmp(magic, kParamsMagic, sizeof(magic)) != 0)
    fail("bad magic in " + path);
  if (io::get_u32(in, path) != kParamsVersion) fail("unsupported version in " + path);
  const std::uint64_t count = io::get_u64(in, path);
  ParamStore store;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = io::get_u32(in, path);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) fail("truncated file: " + path);
    const std::uint32_t rank = io::get_u32(in, path);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(io::get_u64(in, path));
    Tensor& t = store.add(name, shape);
    for (auto& v : t.values) v = io::get_f64(in, path);
  }
  return store;
}

}  // namespace patchnet::nn
