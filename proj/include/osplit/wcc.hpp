#pragma once

#include <vector>

#include "osplit/tensor.hpp"

namespace osplit {

// Within-batch class-compactness term on the transmitted representation:
// for each class present in the batch, the mean squared distance of its rows
// to the class centroid, summed over classes.  Pure functions of (values,
// labels); binary64 accumulation throughout.

struct ClassCentroids {
  std::vector<int> classes;        // ascending, classes present in the batch
  std::vector<std::size_t> counts; // |S_c| aligned with classes
  Tensor mu;                       // [classes.size(), k]
};

ClassCentroids class_centroids(const Tensor& zt, const std::vector<int>& labels);

double wcc_loss(const Tensor& zt, const std::vector<int>& labels);

// Closed-form gradient: row i receives (2 / |S_{y_i}|) * (zt_i - mu_{y_i}).
// The mean's own dependence on zt_i cancels because deviations from a mean
// sum to zero, so this equals the full derivative.
Tensor wcc_grad(const Tensor& zt, const std::vector<int>& labels);

// ce + lambda * wcc.  lambda == 0 returns ce unchanged (bitwise), so a run
// with the term disabled is numerically indistinguishable from one that
// never computed it.
double total_loss(double ce, double lambda, const Tensor& zt,
                  const std::vector<int>& labels);

}  // namespace osplit
