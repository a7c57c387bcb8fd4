#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include "dfcn/error.hpp"

namespace dfcn {

// Dense row-major array of doubles. Shape checking is strict: no
// broadcasting anywhere in this codebase.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<std::size_t>(numel_of(shape)), 0.0);
  }
  Tensor(std::initializer_list<std::int64_t> s)
      : Tensor(std::vector<std::int64_t>(s)) {}

  static std::int64_t numel_of(const std::vector<std::int64_t>& s) {
    std::int64_t n = 1;
    for (auto d : s) n *= d;
    return n;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  std::int64_t dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  double* ptr() { return data.data(); }
  const double* ptr() const { return data.data(); }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

inline Tensor tensor_from(std::vector<std::int64_t> shape, std::vector<double> values) {
  if (Tensor::numel_of(shape) != static_cast<std::int64_t>(values.size()))
    throw Error("tensor_from: shape does not match value count");
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::move(values);
  return t;
}

}  // namespace dfcn
