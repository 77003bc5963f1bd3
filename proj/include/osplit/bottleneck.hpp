#pragma once

#include <cstdint>

#include "osplit/linalg.hpp"
#include "osplit/nn.hpp"
#include "osplit/tensor.hpp"

namespace osplit {

enum class BasisInit { Gaussian, Uniform01 };

// Frozen cut-layer basis: the orthonormal Q factor of a seeded random d x k
// matrix.  Immutable once built; both peers derive bit-identical copies from
// (d, k, seed) or receive the matrix verbatim during setup.
class ProjectionBasis {
 public:
  ProjectionBasis(std::size_t d, std::size_t k, std::uint64_t seed,
                  BasisInit init = BasisInit::Gaussian);
  static ProjectionBasis from_matrix(Tensor r, std::uint64_t seed);

  const Tensor& r() const { return r_; }
  std::size_t d() const { return d_; }
  std::size_t k() const { return k_; }
  std::uint64_t seed() const { return seed_; }
  double compression_ratio() const { return static_cast<double>(d_) / static_cast<double>(k_); }

 private:
  ProjectionBasis() = default;
  Tensor r_;  // d x k, orthonormal columns
  std::size_t d_ = 0, k_ = 0;
  std::uint64_t seed_ = 0;
};

// Row-vector convention: activations are [batch, d], so projecting right-
// multiplies by the basis.
Tensor project(const ProjectionBasis& basis, const Tensor& z);      // [b,d] -> [b,k]
Tensor lift_fixed(const ProjectionBasis& basis, const Tensor& zt);  // [b,k] -> [b,d]

// Gradient of the projection w.r.t. its input is the same linear map as the
// fixed lift-back, so this is literally that code path.
Tensor backprop_projection(const ProjectionBasis& basis, const Tensor& grad_zt);

// Learned lift-back adapter: dense k->m (no bias), batch-norm, relu, dense
// m->d (no bias, zero-initialized so an untrained adapter emits zeros).
// Trainable parameter count: m*k + 2m + d*m.
struct LiftbackMlp {
  Network net;
  std::size_t k = 0, m = 0, d = 0;
};
LiftbackMlp make_liftback(std::size_t k, std::size_t m, std::size_t d, RngStream& rng);

// Trainable 1x1-convolution codec baseline.  Channel count after encoding is
// max(1, round-half-even(c / cr)); the encoder trains with the client, the
// decoder with the server.
std::size_t codec_channels(std::size_t c, double cr);
struct Channel1x1Codec {
  Network encoder;  // conv 1x1, c -> kch
  Network decoder;  // conv 1x1, kch -> c
  std::size_t c = 0, kch = 0;
  double effective_cr() const { return static_cast<double>(c) / static_cast<double>(kch); }
};
Channel1x1Codec make_codec(std::size_t c, double cr, RngStream& rng);

}  // namespace osplit
