#include <doctest.h>
#include <stdexcept>

#include <cmath>

#include "osplit/errors.hpp"
#include "osplit/kernels.hpp"
#include "osplit/linalg.hpp"

using namespace osplit;

namespace {

double max_offdiag_identity_err(const Tensor& q) {
  // max |Q^T Q - I|
  Tensor gram = serial::matmul(q, q, true, false);
  double worst = 0.0;
  for (std::size_t i = 0; i < gram.shape[0]; ++i)
    for (std::size_t j = 0; j < gram.shape[1]; ++j) {
      double want = (i == j) ? 1.0 : 0.0;
      worst = std::max(worst, std::abs(static_cast<double>(gram(i, j)) - want));
    }
  return worst;
}

}  // namespace

TEST_CASE("thin qr reconstructs the input") {
  RngStream rng(200);
  Tensor a = gaussian_matrix(8, 3, rng);
  QrResult qr = thin_qr(a);
  CHECK(qr.q.shape == std::vector<std::size_t>{8, 3});
  CHECK(qr.t.shape == std::vector<std::size_t>{3, 3});
  Tensor back = serial::matmul(qr.q, qr.t);
  for (std::size_t i = 0; i < a.numel(); ++i)
    CHECK(back.data[i] == doctest::Approx(a.data[i]).epsilon(1e-4).scale(1.0));
}

TEST_CASE("qr factor is orthonormal and triangular with nonnegative diagonal") {
  RngStream rng(201);
  for (auto [d, k] : {std::pair<std::size_t, std::size_t>{16, 4}, {64, 64}, {100, 1}}) {
    Tensor a = gaussian_matrix(d, k, rng);
    QrResult qr = thin_qr(a);
    CHECK(max_offdiag_identity_err(qr.q) < 1e-5);
    for (std::size_t i = 0; i < k; ++i) {
      CHECK(qr.t(i, i) >= 0.0f);
      for (std::size_t j = 0; j < i; ++j) CHECK(qr.t(i, j) == 0.0f);
    }
  }
}

TEST_CASE("qr sign convention makes the factorization deterministic") {
  // Negate a column of the input: the Q column flips sign but stays valid.
  RngStream rng(202);
  Tensor a = gaussian_matrix(10, 2, rng);
  QrResult base = thin_qr(a);
  Tensor a2 = a;
  for (std::size_t i = 0; i < 10; ++i) a2(i, 0) = -a2(i, 0);
  QrResult neg = thin_qr(a2);
  for (std::size_t i = 0; i < 10; ++i)
    CHECK(neg.q(i, 0) == doctest::Approx(-base.q(i, 0)).epsilon(1e-5).scale(1.0));
  CHECK(neg.t(0, 0) == doctest::Approx(base.t(0, 0)).epsilon(1e-5));
}

TEST_CASE("qr rejects bad shapes and rank-deficient input") {
  Tensor wide({3, 5});
  CHECK_THROWS_AS((void)thin_qr(wide), std::invalid_argument);
  Tensor vec({4});
  CHECK_THROWS_AS((void)thin_qr(vec), std::invalid_argument);

  Tensor dup({6, 2});
  RngStream rng(203);
  for (std::size_t i = 0; i < 6; ++i) {
    dup(i, 0) = static_cast<float>(rng.normal());
    dup(i, 1) = 2.0f * dup(i, 0);  // linearly dependent columns
  }
  CHECK_THROWS_AS((void)thin_qr(dup), DegenerateInput);

  Tensor zero({5, 1});
  CHECK_THROWS_AS((void)thin_qr(zero), DegenerateInput);
}

TEST_CASE("matrix sampling is deterministic and matches the stream") {
  RngStream a(204), b(204);
  Tensor g1 = gaussian_matrix(4, 3, a);
  Tensor g2({4, 3});
  for (std::size_t i = 0; i < g2.numel(); ++i) g2.data[i] = static_cast<float>(b.normal());
  CHECK(g1.data == g2.data);

  RngStream c(205), d(205);
  Tensor u1 = uniform01_matrix(4, 3, c);
  bool in_range = true;
  for (float v : u1.data) in_range = in_range && v > 0.0f && v <= 1.0f;
  CHECK(in_range);
  Tensor u2({4, 3});
  for (std::size_t i = 0; i < u2.numel(); ++i) u2.data[i] = static_cast<float>(d.uniform01());
  CHECK(u1.data == u2.data);
}

TEST_CASE("norm helpers") {
  Tensor t({2, 2});
  t.data = {3, -4, 0, 0};
  CHECK(frobenius_norm(t) == doctest::Approx(5.0));
  CHECK(max_abs(t) == doctest::Approx(4.0));
}
