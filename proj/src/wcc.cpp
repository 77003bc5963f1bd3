#include "osplit/wcc.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace osplit {

namespace {
void check(const Tensor& zt, const std::vector<int>& labels) {
  if (zt.rank() != 2) throw std::invalid_argument("wcc: rank-2 input required");
  if (labels.size() != zt.shape[0])
    throw std::invalid_argument("wcc: label count mismatch");
}
}  // namespace

ClassCentroids class_centroids(const Tensor& zt, const std::vector<int>& labels) {
  check(zt, labels);
  const std::size_t k = zt.shape[1];
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);

  ClassCentroids cc;
  cc.mu = Tensor({groups.size(), k});
  std::size_t row = 0;
  for (const auto& [cls, rows] : groups) {
    cc.classes.push_back(cls);
    cc.counts.push_back(rows.size());
    for (std::size_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (std::size_t i : rows) s += static_cast<double>(zt(i, j));
      cc.mu(row, j) = static_cast<float>(s / static_cast<double>(rows.size()));
    }
    ++row;
  }
  return cc;
}

double wcc_loss(const Tensor& zt, const std::vector<int>& labels) {
  ClassCentroids cc = class_centroids(zt, labels);
  const std::size_t k = zt.shape[1];
  double total = 0.0;
  for (std::size_t ci = 0; ci < cc.classes.size(); ++ci) {
    double cls_sum = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != cc.classes[ci]) continue;
      for (std::size_t j = 0; j < k; ++j) {
        double d = static_cast<double>(zt(i, j)) - static_cast<double>(cc.mu(ci, j));
        cls_sum += d * d;
      }
    }
    total += cls_sum / static_cast<double>(cc.counts[ci]);
  }
  return total;
}

Tensor wcc_grad(const Tensor& zt, const std::vector<int>& labels) {
  ClassCentroids cc = class_centroids(zt, labels);
  const std::size_t k = zt.shape[1];
  Tensor g(zt.shape);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::size_t ci = static_cast<std::size_t>(
        std::lower_bound(cc.classes.begin(), cc.classes.end(), labels[i]) -
        cc.classes.begin());
    double scale = 2.0 / static_cast<double>(cc.counts[ci]);
    for (std::size_t j = 0; j < k; ++j)
      g(i, j) = static_cast<float>(
          scale * (static_cast<double>(zt(i, j)) - static_cast<double>(cc.mu(ci, j))));
  }
  return g;
}

double total_loss(double ce, double lambda, const Tensor& zt,
                  const std::vector<int>& labels) {
  if (lambda == 0.0) return ce;
  return ce + lambda * wcc_loss(zt, labels);
}

}  // namespace osplit
