#include <doctest.h>
#include <stdexcept>

#include <cmath>

#include "osplit/bottleneck.hpp"
#include "osplit/errors.hpp"
#include "osplit/kernels.hpp"
#include "osplit/rng.hpp"

using namespace osplit;

namespace {

double gram_identity_err(const Tensor& r) {
  Tensor g = serial::matmul(r, r, true, false);
  double worst = 0;
  for (std::size_t i = 0; i < g.shape[0]; ++i)
    for (std::size_t j = 0; j < g.shape[1]; ++j)
      worst = std::max(worst,
                       std::abs(static_cast<double>(g(i, j)) - (i == j ? 1.0 : 0.0)));
  return worst;
}

double sq_norm(const Tensor& t) {
  double s = 0;
  for (float v : t.data) s += static_cast<double>(v) * v;
  return s;
}

}  // namespace

TEST_CASE("basis columns are orthonormal across sizes and seeds") {
  for (auto [d, k] : {std::pair<std::size_t, std::size_t>{16, 2}, {64, 16}, {128, 128}})
    for (std::uint64_t seed : {1ull, 77ull}) {
      ProjectionBasis b(d, k, seed);
      CHECK(b.d() == d);
      CHECK(b.k() == k);
      CHECK(b.compression_ratio() == doctest::Approx(double(d) / double(k)));
      CHECK(gram_identity_err(b.r()) < 1e-5);
    }
  ProjectionBasis u(48, 8, 3, BasisInit::Uniform01);
  CHECK(gram_identity_err(u.r()) < 1e-5);
}

TEST_CASE("the two init families give different bases, same seed gives the same") {
  ProjectionBasis g1(32, 4, 9), g2(32, 4, 9), u(32, 4, 9, BasisInit::Uniform01);
  CHECK(g1.r().data == g2.r().data);
  CHECK(g1.r().data != u.r().data);
  ProjectionBasis g3(32, 4, 10);
  CHECK(g1.r().data != g3.r().data);
}

TEST_CASE("a basis rebuilt from its matrix is verbatim") {
  ProjectionBasis a(24, 6, 5);
  ProjectionBasis b = ProjectionBasis::from_matrix(a.r(), a.seed());
  CHECK(b.d() == 24);
  CHECK(b.k() == 6);
  CHECK(b.seed() == 5);
  CHECK(b.r().data == a.r().data);
}

TEST_CASE("projection geometry: idempotent projector, orthogonal residual") {
  RngStream rng(600);
  ProjectionBasis basis(96, 24, 11);
  Tensor z = Tensor::randn({5, 96}, rng);
  Tensor zt = project(basis, z);
  CHECK(zt.shape == std::vector<std::size_t>{5, 24});
  Tensor zh = lift_fixed(basis, zt);
  CHECK(zh.shape == z.shape);

  // Projecting the lifted vector again changes nothing beyond rounding.
  Tensor zt2 = project(basis, zh);
  for (std::size_t i = 0; i < zt.numel(); ++i)
    CHECK(zt2.data[i] == doctest::Approx(zt.data[i]).epsilon(1e-5).scale(1.0));

  // Residual (z - lift(project(z))) is orthogonal to the retained component.
  double zn = sq_norm(z);
  for (std::size_t row = 0; row < 5; ++row) {
    double dot = 0;
    for (std::size_t j = 0; j < 96; ++j) {
      double res = static_cast<double>(z(row, j)) - zh(row, j);
      dot += res * static_cast<double>(zh(row, j));
    }
    CHECK(std::abs(dot) < 1e-4 * zn);
  }

  // Norm splits: |z|^2 = |retained|^2 + |residual|^2 (Pythagoras).
  double rn = sq_norm(zh), resn = 0;
  for (std::size_t i = 0; i < z.numel(); ++i) {
    double d = static_cast<double>(z.data[i]) - zh.data[i];
    resn += d * d;
  }
  CHECK(rn + resn == doctest::Approx(zn).epsilon(1e-4));
}

TEST_CASE("projection is exact on vectors inside the span") {
  RngStream rng(601);
  ProjectionBasis basis(64, 8, 12);
  // Build z = coeffs * R^T, a row vector within the span of the basis.
  Tensor coeffs = Tensor::randn({3, 8}, rng);
  Tensor z = serial::matmul(coeffs, basis.r(), false, true);
  Tensor back = lift_fixed(basis, project(basis, z));
  for (std::size_t i = 0; i < z.numel(); ++i)
    CHECK(back.data[i] == doctest::Approx(z.data[i]).epsilon(1e-4).scale(1e-3));
}

TEST_CASE("gradient through the projection is the fixed lift path") {
  RngStream rng(602);
  ProjectionBasis basis(40, 10, 13);
  Tensor g = Tensor::randn({7, 10}, rng);
  Tensor a = backprop_projection(basis, g);
  Tensor b = lift_fixed(basis, g);
  CHECK(a.shape == b.shape);
  CHECK(a.data == b.data);  // same code path, bitwise
}

TEST_CASE("basis construction rejects impossible shapes") {
  CHECK_THROWS_AS(ProjectionBasis(4, 8, 1), std::invalid_argument);
  CHECK_THROWS_AS(ProjectionBasis(0, 0, 1), std::invalid_argument);
  RngStream rng(603);
  Tensor z = Tensor::randn({2, 10}, rng);
  ProjectionBasis basis(8, 2, 1);
  CHECK_THROWS_AS((void)project(basis, z), std::invalid_argument);
  Tensor zt = Tensor::randn({2, 3}, rng);
  CHECK_THROWS_AS((void)lift_fixed(basis, zt), std::invalid_argument);
}

TEST_CASE("learned lift-back: structure, parameter count, inert start") {
  RngStream rng(604);
  LiftbackMlp lb = make_liftback(16, 32, 64, rng);
  CHECK(lb.k == 16);
  CHECK(lb.m == 32);
  CHECK(lb.d == 64);
  CHECK(lb.net.param_count() == 32 * 16 + 2 * 32 + 64 * 32);

  // Zero-initialized output layer: an untrained adapter emits zeros.
  Tensor zt = Tensor::randn({4, 16}, rng);
  Tensor out = forward(lb.net, zt);
  CHECK(out.shape == std::vector<std::size_t>{4, 64});
  for (float v : out.data) CHECK(v == 0.0f);
}

TEST_CASE("codec channel arithmetic rounds half to even with a floor of one") {
  CHECK(codec_channels(4, 8.0) == 1);    // 0.5 -> 0, floored to 1
  CHECK(codec_channels(12, 8.0) == 2);   // 1.5 -> 2 (ties to even)
  CHECK(codec_channels(20, 8.0) == 2);   // 2.5 -> 2 (ties to even)
  CHECK(codec_channels(6, 4.0) == 2);    // 1.5 -> 2
  CHECK(codec_channels(8, 4.0) == 2);    // exact
  CHECK(codec_channels(64, 2.0) == 32);
  CHECK(codec_channels(3, 100.0) == 1);  // floor of one
  CHECK_THROWS_AS((void)codec_channels(8, 0.0), std::invalid_argument);
  CHECK_THROWS_AS((void)codec_channels(8, -2.0), std::invalid_argument);
}

TEST_CASE("codec pair maps channel counts and round-trips shapes") {
  RngStream rng(605);
  Channel1x1Codec codec = make_codec(8, 4.0, rng);
  CHECK(codec.c == 8);
  CHECK(codec.kch == 2);
  CHECK(codec.effective_cr() == doctest::Approx(4.0));
  Tensor x = Tensor::randn({2, 8, 5, 5}, rng);
  Tensor enc = forward(codec.encoder, x);
  CHECK(enc.shape == std::vector<std::size_t>{2, 2, 5, 5});
  Tensor dec = forward(codec.decoder, enc);
  CHECK(dec.shape == x.shape);
}
