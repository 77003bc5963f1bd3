#include <doctest.h>
#include <stdexcept>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "osplit/rng.hpp"
#include "osplit/wcc.hpp"

using namespace osplit;

namespace {

// Independent recomputation of the compactness term from its definition:
// sum over classes of mean squared distance to the class centroid.
double naive_loss(const Tensor& zt, const std::vector<int>& labels) {
  std::size_t n = zt.shape[0], k = zt.shape[1];
  std::vector<int> classes;
  for (int y : labels)
    if (std::find(classes.begin(), classes.end(), y) == classes.end()) classes.push_back(y);
  double total = 0;
  for (int c : classes) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < n; ++i)
      if (labels[i] == c) rows.push_back(i);
    std::vector<double> mu(k, 0.0);
    for (std::size_t r : rows)
      for (std::size_t j = 0; j < k; ++j) mu[j] += zt(r, j);
    for (double& v : mu) v /= static_cast<double>(rows.size());
    double acc = 0;
    for (std::size_t r : rows)
      for (std::size_t j = 0; j < k; ++j) {
        double d = static_cast<double>(zt(r, j)) - mu[j];
        acc += d * d;
      }
    total += acc / static_cast<double>(rows.size());
  }
  return total;
}

}  // namespace

TEST_CASE("hand-worked two-point example") {
  // One class with rows (0,0) and (2,0): centroid (1,0), squared distances
  // 1 and 1, mean 1 -> loss 1.  Gradient (2/2)(z - mu) = (-1,0) and (1,0).
  Tensor zt({2, 2});
  zt.data = {0, 0, 2, 0};
  std::vector<int> labels = {3, 3};
  CHECK(wcc_loss(zt, labels) == doctest::Approx(1.0).epsilon(1e-12));
  Tensor g = wcc_grad(zt, labels);
  CHECK(g.data[0] == doctest::Approx(-1.0));
  CHECK(g.data[1] == doctest::Approx(0.0));
  CHECK(g.data[2] == doctest::Approx(1.0));
  CHECK(g.data[3] == doctest::Approx(0.0));
}

TEST_CASE("centroids are per-class means in ascending class order") {
  Tensor zt({4, 2});
  zt.data = {1, 1,
             5, 3,
             3, 1,
             9, 9};
  std::vector<int> labels = {2, 0, 2, 0};
  ClassCentroids cc = class_centroids(zt, labels);
  REQUIRE(cc.classes == std::vector<int>{0, 2});
  REQUIRE(cc.counts == std::vector<std::size_t>{2, 2});
  CHECK(cc.mu(0, 0) == doctest::Approx(7.0));  // class 0: rows 1 and 3
  CHECK(cc.mu(0, 1) == doctest::Approx(6.0));
  CHECK(cc.mu(1, 0) == doctest::Approx(2.0));  // class 2: rows 0 and 2
  CHECK(cc.mu(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("loss matches the naive recomputation on random batches") {
  RngStream rng(700);
  for (int trial = 0; trial < 10; ++trial) {
    std::size_t n = 3 + rng.below(20);
    std::size_t k = 1 + rng.below(8);
    Tensor zt = Tensor::randn({n, k}, rng, 2.0f);
    std::vector<int> labels(n);
    for (auto& y : labels) y = static_cast<int>(rng.below(4));
    CHECK(wcc_loss(zt, labels) == doctest::Approx(naive_loss(zt, labels)).epsilon(1e-9));
  }
}

TEST_CASE("analytic gradient equals finite differences including the mean term") {
  // The centroid depends on every row, yet that dependence cancels exactly;
  // central differences on the full loss confirm it to rounding error.
  RngStream rng(701);
  Tensor zt = Tensor::randn({6, 3}, rng);
  std::vector<int> labels = {0, 1, 0, 2, 1, 0};
  Tensor g = wcc_grad(zt, labels);
  const double eps = 1e-3;
  for (std::size_t i = 0; i < zt.numel(); ++i) {
    float keep = zt.data[i];
    zt.data[i] = static_cast<float>(keep + eps);
    double up = naive_loss(zt, labels);
    zt.data[i] = static_cast<float>(keep - eps);
    double dn = naive_loss(zt, labels);
    zt.data[i] = keep;
    double fd = (up - dn) / (2 * eps);
    CHECK(g.data[i] == doctest::Approx(fd).epsilon(5e-3).scale(1.0));
  }
}

TEST_CASE("singleton classes contribute nothing") {
  Tensor zt({3, 2});
  zt.data = {4, 5, -1, 0, 2, 2};
  std::vector<int> labels = {0, 1, 2};  // all singletons: loss 0, grad 0
  CHECK(wcc_loss(zt, labels) == 0.0);
  Tensor g = wcc_grad(zt, labels);
  for (float v : g.data) CHECK(v == 0.0f);
}

TEST_CASE("identical rows in one class collapse the term to zero") {
  Tensor zt({4, 2});
  zt.data = {1, 2, 1, 2, 1, 2, 1, 2};
  std::vector<int> labels = {0, 0, 0, 0};
  CHECK(wcc_loss(zt, labels) == 0.0);
}

TEST_CASE("translating a whole class leaves the loss unchanged") {
  RngStream rng(702);
  Tensor zt = Tensor::randn({8, 4}, rng);
  std::vector<int> labels = {0, 0, 1, 1, 0, 1, 0, 1};
  double base = wcc_loss(zt, labels);
  Tensor shifted = zt;
  for (std::size_t i = 0; i < 8; ++i)
    if (labels[i] == 0)
      for (std::size_t j = 0; j < 4; ++j) shifted(i, j) += 10.0f;
  CHECK(wcc_loss(shifted, labels) == doctest::Approx(base).epsilon(1e-6));
}

TEST_CASE("disabled weighting returns the task loss bitwise") {
  RngStream rng(703);
  Tensor zt = Tensor::randn({5, 3}, rng);
  std::vector<int> labels = {0, 1, 0, 1, 0};
  double ce = 0.6931471805599453;
  double with_zero = total_loss(ce, 0.0, zt, labels);
  CHECK(std::memcmp(&with_zero, &ce, sizeof ce) == 0);
  double with_term = total_loss(ce, 0.1, zt, labels);
  CHECK(with_term == doctest::Approx(ce + 0.1 * wcc_loss(zt, labels)).epsilon(1e-12));
  CHECK(with_term > ce);
}

TEST_CASE("shape and label validation") {
  Tensor zt({2, 2});
  CHECK_THROWS_AS((void)wcc_loss(zt, {0}), std::invalid_argument);
  Tensor bad({4});
  CHECK_THROWS_AS((void)wcc_loss(bad, {0, 1, 0, 1}), std::invalid_argument);
}
