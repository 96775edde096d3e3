#pragma once

#include <algorithm>
#include <cstddef>
#include <utility>
#include <vector>

#include "patchnet/error.hpp"

namespace patchnet::nn {

inline std::size_t shape_size(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

// Dense row-major tensor of 64-bit floats. `grad` mirrors `values` for
// trainable tensors and is empty otherwise.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;
  std::vector<double> grad;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, bool trainable = false)
      : shape(std::move(s)), values(shape_size(shape), 0.0) {
    if (trainable) grad.assign(values.size(), 0.0);
  }

  std::size_t size() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape[i]; }
  bool trainable() const { return !grad.empty(); }

  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
};

inline Tensor vector_tensor(std::size_t n) { return Tensor({n}); }

}  // namespace patchnet::nn
