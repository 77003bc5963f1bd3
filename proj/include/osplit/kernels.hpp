#pragma once

#include "osplit/tensor.hpp"

namespace osplit {

// Dense kernels.  Every output element is accumulated in binary64 over a
// fixed index order and rounded to binary32 on store, so the OpenMP versions
// (parallel over independent output elements) are bitwise identical to the
// serial references at any thread count.  The serial namespace is kept for
// testing and for the kernel benchmark.

namespace serial {

// C = op_a(A) * op_b(B) with op = transpose when the flag is set.
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);

Tensor conv2d_forward(const Tensor& in, const Tensor& w, const Tensor& b,
                      int stride, int pad);
Tensor conv2d_backward_input(const Tensor& dout, const Tensor& w,
                             std::size_t h, std::size_t wdt, int stride, int pad);
void conv2d_backward_params(const Tensor& dout, const Tensor& in,
                            int stride, int pad, Tensor& dw, Tensor& db);

}  // namespace serial

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);

Tensor conv2d_forward(const Tensor& in, const Tensor& w, const Tensor& b,
                      int stride, int pad);
Tensor conv2d_backward_input(const Tensor& dout, const Tensor& w,
                             std::size_t h, std::size_t wdt, int stride, int pad);
void conv2d_backward_params(const Tensor& dout, const Tensor& in,
                            int stride, int pad, Tensor& dw, Tensor& db);

}  // namespace osplit
