#pragma once

#include "osplit/rng.hpp"
#include "osplit/tensor.hpp"

namespace osplit {

// d x k matrix of independent standard-normal entries drawn from the stream.
Tensor gaussian_matrix(std::size_t d, std::size_t k, RngStream& rng);

// d x k matrix of independent uniform(0,1) entries (alternative basis-sampling
// scheme, selectable by config).
Tensor uniform01_matrix(std::size_t d, std::size_t k, RngStream& rng);

struct QrResult {
  Tensor q;  // d x k, orthonormal columns
  Tensor t;  // k x k, upper triangular, nonnegative diagonal
};

// Thin Householder QR of a d x k matrix (d >= k >= 1).  The factorization
// runs in binary64 and is rounded to binary32 on output.  Signs are fixed so
// diag(t) >= 0, which makes the factor pair unique for full-rank input.
// Throws std::invalid_argument for bad shapes and DegenerateInput when a
// pivot falls below 1e-10 * max|a|.
QrResult thin_qr(const Tensor& a);

double frobenius_norm(const Tensor& t);
double max_abs(const Tensor& t);

}  // namespace osplit
