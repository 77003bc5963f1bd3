#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "osplit/rng.hpp"

namespace osplit {

// Dense row-major tensor of binary32 values.  Invariant: data.size() equals
// the product of shape (empty shape = scalar with one element is not used;
// an empty tensor has empty shape and empty data).
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s);

  static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<std::size_t> s, float v);
  // Entries are independent standard-normal draws (optionally scaled).
  static Tensor randn(std::vector<std::size_t> s, RngStream& rng, float scale = 1.0f);

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape[i]; }

  // 2-D accessors (row, col).
  float& operator()(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  float operator()(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

  // 4-D accessor (n, c, h, w).
  float& at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  float at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;

  // Returns a tensor with the same data and a new shape of equal element
  // count; throws std::invalid_argument otherwise.
  Tensor reshaped(std::vector<std::size_t> s) const;

  void fill(float v);
  void add_scaled(const Tensor& o, float s);  // *this += s * o, shapes must match
};

std::size_t shape_numel(const std::vector<std::size_t>& s);

// Copies the selected leading-axis rows into a new tensor (minibatch
// assembly, shard slicing).
Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& idx);

// FNV-1a 64-bit over an arbitrary byte range; used for dataset, config and
// trace content hashes.
std::uint64_t fnv1a64(const void* bytes, std::size_t n, std::uint64_t h = 14695981039346656037ull);
std::uint64_t fnv1a64(const Tensor& t);

}  // namespace osplit
