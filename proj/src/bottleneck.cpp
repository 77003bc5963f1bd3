#include "osplit/bottleneck.hpp"

#include <cmath>
#include <stdexcept>

namespace osplit {

ProjectionBasis::ProjectionBasis(std::size_t d, std::size_t k, std::uint64_t seed,
                                 BasisInit init)
    : d_(d), k_(k), seed_(seed) {
  if (k < 1 || k > d) throw std::invalid_argument("projection: need 1 <= k <= d");
  RngStream rng(seed);
  Tensor a = (init == BasisInit::Gaussian) ? gaussian_matrix(d, k, rng)
                                           : uniform01_matrix(d, k, rng);
  r_ = thin_qr(a).q;  // triangular factor discarded
}

ProjectionBasis ProjectionBasis::from_matrix(Tensor r, std::uint64_t seed) {
  if (r.rank() != 2 || r.shape[1] > r.shape[0])
    throw std::invalid_argument("projection: basis must be d x k with k <= d");
  ProjectionBasis b;
  b.d_ = r.shape[0];
  b.k_ = r.shape[1];
  b.seed_ = seed;
  b.r_ = std::move(r);
  return b;
}

Tensor project(const ProjectionBasis& basis, const Tensor& z) {
  if (z.rank() != 2 || z.shape[1] != basis.d())
    throw std::invalid_argument("project: input must be [batch, d]");
  return matmul(z, basis.r());  // [b,d] x [d,k]
}

Tensor lift_fixed(const ProjectionBasis& basis, const Tensor& zt) {
  if (zt.rank() != 2 || zt.shape[1] != basis.k())
    throw std::invalid_argument("lift_fixed: input must be [batch, k]");
  return matmul(zt, basis.r(), false, true);  // [b,k] x [k,d]
}

Tensor backprop_projection(const ProjectionBasis& basis, const Tensor& grad_zt) {
  return lift_fixed(basis, grad_zt);
}

LiftbackMlp make_liftback(std::size_t k, std::size_t m, std::size_t d, RngStream& rng) {
  LiftbackMlp lb;
  lb.k = k;
  lb.m = m;
  lb.d = d;
  lb.net.layers.push_back(dense(k, m, rng, /*bias=*/false));
  lb.net.layers.push_back(batchnorm(m));
  lb.net.layers.push_back(relu());
  lb.net.layers.push_back(dense_zero(m, d, /*bias=*/false));
  return lb;
}

std::size_t codec_channels(std::size_t c, double cr) {
  if (cr <= 0.0) throw std::invalid_argument("codec: compression ratio must be positive");
  double kch = std::nearbyint(static_cast<double>(c) / cr);  // ties to even
  if (kch < 1.0) kch = 1.0;
  return static_cast<std::size_t>(kch);
}

Channel1x1Codec make_codec(std::size_t c, double cr, RngStream& rng) {
  Channel1x1Codec cd;
  cd.c = c;
  cd.kch = codec_channels(c, cr);
  cd.encoder.layers.push_back(conv2d(c, cd.kch, 1, 1, 0, rng));
  cd.decoder.layers.push_back(conv2d(cd.kch, c, 1, 1, 0, rng));
  return cd;
}

}  // namespace osplit
