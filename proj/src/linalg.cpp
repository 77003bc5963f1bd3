#include "osplit/linalg.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "osplit/errors.hpp"

namespace osplit {

Tensor gaussian_matrix(std::size_t d, std::size_t k, RngStream& rng) {
  return Tensor::randn({d, k}, rng);
}

Tensor uniform01_matrix(std::size_t d, std::size_t k, RngStream& rng) {
  Tensor t({d, k});
  for (float& x : t.data) x = static_cast<float>(rng.uniform(0.0, 1.0));
  return t;
}

double frobenius_norm(const Tensor& t) {
  double s = 0.0;
  for (float x : t.data) s += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(s);
}

double max_abs(const Tensor& t) {
  double m = 0.0;
  for (float x : t.data) m = std::max(m, std::fabs(static_cast<double>(x)));
  return m;
}

QrResult thin_qr(const Tensor& a) {
  if (a.rank() != 2) throw std::invalid_argument("thin_qr: rank-2 input required");
  const std::size_t d = a.shape[0], k = a.shape[1];
  if (k < 1 || d < k) throw std::invalid_argument("thin_qr: need d >= k >= 1");

  const double pivot_tol = 1e-10 * max_abs(a);

  // binary64 working copy, column-major vectors of Householder v's.
  std::vector<double> m(d * k);
  for (std::size_t i = 0; i < d * k; ++i) m[i] = static_cast<double>(a.data[i]);
  auto M = [&](std::size_t i, std::size_t j) -> double& { return m[i * k + j]; };

  std::vector<std::vector<double>> vs(k);  // reflector j lives on rows j..d-1

  for (std::size_t j = 0; j < k; ++j) {
    // Reflect column j below the diagonal onto +-norm * e1.
    double normx = 0.0;
    for (std::size_t i = j; i < d; ++i) normx += M(i, j) * M(i, j);
    normx = std::sqrt(normx);
    if (normx < pivot_tol || normx == 0.0)
      throw DegenerateInput("thin_qr: numerically rank-deficient input");

    double x0 = M(j, j);
    double s = (x0 >= 0.0) ? 1.0 : -1.0;
    std::vector<double> v(d - j);
    for (std::size_t i = j; i < d; ++i) v[i - j] = M(i, j);
    v[0] += s * normx;
    double vtv = 0.0;
    for (double x : v) vtv += x * x;
    double beta = 2.0 / vtv;

    // Apply H = I - beta v v^T to the trailing block M[j: , j:].
    const long cols = static_cast<long>(k - j);
#pragma omp parallel for schedule(static)
    for (long cc = 0; cc < cols; ++cc) {
      std::size_t c = j + static_cast<std::size_t>(cc);
      double dot = 0.0;
      for (std::size_t i = j; i < d; ++i) dot += v[i - j] * M(i, c);
      dot *= beta;
      for (std::size_t i = j; i < d; ++i) M(i, c) -= dot * v[i - j];
    }
    vs[j] = std::move(v);
  }

  // Q = H_0 ... H_{k-1} applied to the first k columns of the identity.
  std::vector<double> q(d * k, 0.0);
  auto Q = [&](std::size_t i, std::size_t j) -> double& { return q[i * k + j]; };
  for (std::size_t j = 0; j < k; ++j) Q(j, j) = 1.0;
  for (std::size_t jj = k; jj-- > 0;) {
    const std::vector<double>& v = vs[jj];
    double vtv = 0.0;
    for (double x : v) vtv += x * x;
    double beta = 2.0 / vtv;
    const long cols = static_cast<long>(k);
#pragma omp parallel for schedule(static)
    for (long cc = 0; cc < cols; ++cc) {
      std::size_t c = static_cast<std::size_t>(cc);
      double dot = 0.0;
      for (std::size_t i = jj; i < d; ++i) dot += v[i - jj] * Q(i, c);
      dot *= beta;
      for (std::size_t i = jj; i < d; ++i) Q(i, c) -= dot * v[i - jj];
    }
  }

  // Make diag(T) nonnegative: negate row j of T and column j of Q together.
  for (std::size_t j = 0; j < k; ++j) {
    if (M(j, j) < 0.0) {
      for (std::size_t c = j; c < k; ++c) M(j, c) = -M(j, c);
      for (std::size_t i = 0; i < d; ++i) Q(i, j) = -Q(i, j);
    }
  }

  QrResult r;
  r.q = Tensor({d, k});
  r.t = Tensor({k, k});
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < k; ++j) r.q(i, j) = static_cast<float>(Q(i, j));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i; j < k; ++j) r.t(i, j) = static_cast<float>(M(i, j));
  return r;
}

}  // namespace osplit
