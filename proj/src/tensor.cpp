#include "osplit/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace osplit {

std::size_t shape_numel(const std::vector<std::size_t>& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return s.empty() ? 0 : n;
}

Tensor::Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
  data.assign(shape_numel(shape), 0.0f);
}

Tensor Tensor::full(std::vector<std::size_t> s, float v) {
  Tensor t(std::move(s));
  t.fill(v);
  return t;
}

Tensor Tensor::randn(std::vector<std::size_t> s, RngStream& rng, float scale) {
  Tensor t(std::move(s));
  for (float& x : t.data) x = scale * static_cast<float>(rng.normal());
  return t;
}

bool Tensor::all_finite() const {
  for (float x : data)
    if (!std::isfinite(x)) return false;
  return true;
}

Tensor Tensor::reshaped(std::vector<std::size_t> s) const {
  if (shape_numel(s) != numel())
    throw std::invalid_argument("reshape: element count mismatch");
  Tensor t;
  t.shape = std::move(s);
  t.data = data;
  return t;
}

void Tensor::fill(float v) {
  for (float& x : data) x = v;
}

void Tensor::add_scaled(const Tensor& o, float s) {
  if (!same_shape(o)) throw std::invalid_argument("add_scaled: shape mismatch");
  for (std::size_t i = 0; i < data.size(); ++i) data[i] += s * o.data[i];
}

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& idx) {
  if (x.rank() == 0 || x.shape[0] == 0)
    throw std::invalid_argument("gather_rows: empty source");
  std::vector<std::size_t> shape = x.shape;
  shape[0] = idx.size();
  Tensor out(shape);
  const std::size_t row = x.numel() / x.shape[0];
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy(x.data.begin() + static_cast<std::ptrdiff_t>(idx[i] * row),
              x.data.begin() + static_cast<std::ptrdiff_t>((idx[i] + 1) * row),
              out.data.begin() + static_cast<std::ptrdiff_t>(i * row));
  return out;
}

std::uint64_t fnv1a64(const void* bytes, std::size_t n, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t fnv1a64(const Tensor& t) {
  return fnv1a64(t.data.data(), t.data.size() * sizeof(float));
}

}  // namespace osplit
