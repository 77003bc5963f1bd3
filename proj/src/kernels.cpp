#include "osplit/kernels.hpp"

#include <stdexcept>

namespace osplit {

namespace {

struct MatView {
  const float* p;
  std::size_t rows, cols;   // logical (post-transpose) extents
  std::size_t rs, cs;       // strides into the underlying buffer
};

MatView view(const Tensor& t, bool trans) {
  if (t.rank() != 2) throw std::invalid_argument("matmul: operands must be rank 2");
  if (!trans) return {t.data.data(), t.shape[0], t.shape[1], t.shape[1], 1};
  return {t.data.data(), t.shape[1], t.shape[0], 1, t.shape[1]};
}

inline float dot_rc(const MatView& a, const MatView& b, std::size_t i, std::size_t j) {
  const float* pa = a.p + i * a.rs;
  const float* pb = b.p + j * b.cs;
  double acc = 0.0;
  for (std::size_t t = 0; t < a.cols; ++t)
    acc += static_cast<double>(pa[t * a.cs]) * static_cast<double>(pb[t * b.rs]);
  return static_cast<float>(acc);
}

struct ConvDims {
  std::size_t n, cin, h, w, cout, kh, kw, oh, ow;
  int stride, pad;
};

ConvDims conv_dims(const Tensor& in, const Tensor& w, int stride, int pad) {
  if (in.rank() != 4 || w.rank() != 4)
    throw std::invalid_argument("conv2d: input and weight must be rank 4");
  if (in.shape[1] != w.shape[1])
    throw std::invalid_argument("conv2d: channel mismatch");
  if (stride < 1 || pad < 0) throw std::invalid_argument("conv2d: bad stride/pad");
  ConvDims d{in.shape[0], in.shape[1], in.shape[2], in.shape[3],
             w.shape[0],  w.shape[2],  w.shape[3],  0, 0, stride, pad};
  std::size_t hp = d.h + 2 * static_cast<std::size_t>(pad);
  std::size_t wp = d.w + 2 * static_cast<std::size_t>(pad);
  if (hp < d.kh || wp < d.kw) throw std::invalid_argument("conv2d: kernel larger than input");
  d.oh = (hp - d.kh) / static_cast<std::size_t>(stride) + 1;
  d.ow = (wp - d.kw) / static_cast<std::size_t>(stride) + 1;
  return d;
}

inline float conv_out_elem(const Tensor& in, const Tensor& w, const Tensor& b,
                           const ConvDims& d, std::size_t n, std::size_t oc,
                           std::size_t oh, std::size_t ow) {
  double acc = b.numel() ? static_cast<double>(b.data[oc]) : 0.0;
  const long ih0 = static_cast<long>(oh) * d.stride - d.pad;
  const long iw0 = static_cast<long>(ow) * d.stride - d.pad;
  for (std::size_t ic = 0; ic < d.cin; ++ic)
    for (std::size_t kh = 0; kh < d.kh; ++kh) {
      long ih = ih0 + static_cast<long>(kh);
      if (ih < 0 || ih >= static_cast<long>(d.h)) continue;
      for (std::size_t kw = 0; kw < d.kw; ++kw) {
        long iw = iw0 + static_cast<long>(kw);
        if (iw < 0 || iw >= static_cast<long>(d.w)) continue;
        acc += static_cast<double>(in.at4(n, ic, ih, iw)) *
               static_cast<double>(w.at4(oc, ic, kh, kw));
      }
    }
  return static_cast<float>(acc);
}

inline float conv_din_elem(const Tensor& dout, const Tensor& w, const ConvDims& d,
                           std::size_t n, std::size_t ic, std::size_t h, std::size_t wx) {
  double acc = 0.0;
  for (std::size_t oc = 0; oc < d.cout; ++oc)
    for (std::size_t kh = 0; kh < d.kh; ++kh) {
      long num_h = static_cast<long>(h) + d.pad - static_cast<long>(kh);
      if (num_h < 0 || num_h % d.stride) continue;
      long oh = num_h / d.stride;
      if (oh >= static_cast<long>(d.oh)) continue;
      for (std::size_t kw = 0; kw < d.kw; ++kw) {
        long num_w = static_cast<long>(wx) + d.pad - static_cast<long>(kw);
        if (num_w < 0 || num_w % d.stride) continue;
        long ow = num_w / d.stride;
        if (ow >= static_cast<long>(d.ow)) continue;
        acc += static_cast<double>(dout.at4(n, oc, oh, ow)) *
               static_cast<double>(w.at4(oc, ic, kh, kw));
      }
    }
  return static_cast<float>(acc);
}

inline float conv_dw_elem(const Tensor& dout, const Tensor& in, const ConvDims& d,
                          std::size_t oc, std::size_t ic, std::size_t kh, std::size_t kw) {
  double acc = 0.0;
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t oh = 0; oh < d.oh; ++oh) {
      long ih = static_cast<long>(oh) * d.stride - d.pad + static_cast<long>(kh);
      if (ih < 0 || ih >= static_cast<long>(d.h)) continue;
      for (std::size_t ow = 0; ow < d.ow; ++ow) {
        long iw = static_cast<long>(ow) * d.stride - d.pad + static_cast<long>(kw);
        if (iw < 0 || iw >= static_cast<long>(d.w)) continue;
        acc += static_cast<double>(dout.at4(n, oc, oh, ow)) *
               static_cast<double>(in.at4(n, ic, ih, iw));
      }
    }
  return static_cast<float>(acc);
}

void check_matmul(const MatView& a, const MatView& b) {
  if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dimension mismatch");
}

ConvDims bwd_dims(const Tensor& dout, const Tensor& w, std::size_t h, std::size_t wdt,
                  int stride, int pad) {
  if (dout.rank() != 4 || w.rank() != 4)
    throw std::invalid_argument("conv2d backward: rank 4 required");
  ConvDims d{dout.shape[0], w.shape[1], h, wdt, w.shape[0], w.shape[2], w.shape[3],
             dout.shape[2], dout.shape[3], stride, pad};
  return d;
}

}  // namespace

namespace serial {

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  MatView va = view(a, trans_a), vb = view(b, trans_b);
  check_matmul(va, vb);
  Tensor c({va.rows, vb.cols});
  for (std::size_t i = 0; i < va.rows; ++i)
    for (std::size_t j = 0; j < vb.cols; ++j)
      c(i, j) = dot_rc(va, vb, i, j);
  return c;
}

Tensor conv2d_forward(const Tensor& in, const Tensor& w, const Tensor& b,
                      int stride, int pad) {
  ConvDims d = conv_dims(in, w, stride, pad);
  Tensor out({d.n, d.cout, d.oh, d.ow});
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t oc = 0; oc < d.cout; ++oc)
      for (std::size_t oh = 0; oh < d.oh; ++oh)
        for (std::size_t ow = 0; ow < d.ow; ++ow)
          out.at4(n, oc, oh, ow) = conv_out_elem(in, w, b, d, n, oc, oh, ow);
  return out;
}

Tensor conv2d_backward_input(const Tensor& dout, const Tensor& w,
                             std::size_t h, std::size_t wdt, int stride, int pad) {
  ConvDims d = bwd_dims(dout, w, h, wdt, stride, pad);
  Tensor din({d.n, d.cin, d.h, d.w});
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t ic = 0; ic < d.cin; ++ic)
      for (std::size_t hh = 0; hh < d.h; ++hh)
        for (std::size_t ww = 0; ww < d.w; ++ww)
          din.at4(n, ic, hh, ww) = conv_din_elem(dout, w, d, n, ic, hh, ww);
  return din;
}

void conv2d_backward_params(const Tensor& dout, const Tensor& in,
                            int stride, int pad, Tensor& dw, Tensor& db) {
  ConvDims d = conv_dims(in, dw, stride, pad);
  for (std::size_t oc = 0; oc < d.cout; ++oc) {
    for (std::size_t ic = 0; ic < d.cin; ++ic)
      for (std::size_t kh = 0; kh < d.kh; ++kh)
        for (std::size_t kw = 0; kw < d.kw; ++kw)
          dw.at4(oc, ic, kh, kw) += conv_dw_elem(dout, in, d, oc, ic, kh, kw);
    if (db.numel()) {
      double acc = 0.0;
      for (std::size_t n = 0; n < d.n; ++n)
        for (std::size_t oh = 0; oh < d.oh; ++oh)
          for (std::size_t ow = 0; ow < d.ow; ++ow)
            acc += static_cast<double>(dout.at4(n, oc, oh, ow));
      db.data[oc] += static_cast<float>(acc);
    }
  }
}

}  // namespace serial

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  MatView va = view(a, trans_a), vb = view(b, trans_b);
  check_matmul(va, vb);
  Tensor c({va.rows, vb.cols});
  const long rows = static_cast<long>(va.rows), cols = static_cast<long>(vb.cols);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < rows; ++i)
    for (long j = 0; j < cols; ++j)
      c(i, j) = dot_rc(va, vb, i, j);
  return c;
}

Tensor conv2d_forward(const Tensor& in, const Tensor& w, const Tensor& b,
                      int stride, int pad) {
  ConvDims d = conv_dims(in, w, stride, pad);
  Tensor out({d.n, d.cout, d.oh, d.ow});
  const long nn = static_cast<long>(d.n), cc = static_cast<long>(d.cout);
#pragma omp parallel for collapse(2) schedule(static)
  for (long n = 0; n < nn; ++n)
    for (long oc = 0; oc < cc; ++oc)
      for (std::size_t oh = 0; oh < d.oh; ++oh)
        for (std::size_t ow = 0; ow < d.ow; ++ow)
          out.at4(n, oc, oh, ow) = conv_out_elem(in, w, b, d, n, oc, oh, ow);
  return out;
}

Tensor conv2d_backward_input(const Tensor& dout, const Tensor& w,
                             std::size_t h, std::size_t wdt, int stride, int pad) {
  ConvDims d = bwd_dims(dout, w, h, wdt, stride, pad);
  Tensor din({d.n, d.cin, d.h, d.w});
  const long nn = static_cast<long>(d.n), cc = static_cast<long>(d.cin);
#pragma omp parallel for collapse(2) schedule(static)
  for (long n = 0; n < nn; ++n)
    for (long ic = 0; ic < cc; ++ic)
      for (std::size_t hh = 0; hh < d.h; ++hh)
        for (std::size_t ww = 0; ww < d.w; ++ww)
          din.at4(n, ic, hh, ww) = conv_din_elem(dout, w, d, n, ic, hh, ww);
  return din;
}

void conv2d_backward_params(const Tensor& dout, const Tensor& in,
                            int stride, int pad, Tensor& dw, Tensor& db) {
  ConvDims d = conv_dims(in, dw, stride, pad);
  const long cc = static_cast<long>(d.cout);
#pragma omp parallel for schedule(static)
  for (long oc = 0; oc < cc; ++oc) {
    for (std::size_t ic = 0; ic < d.cin; ++ic)
      for (std::size_t kh = 0; kh < d.kh; ++kh)
        for (std::size_t kw = 0; kw < d.kw; ++kw)
          dw.at4(oc, ic, kh, kw) += conv_dw_elem(dout, in, d, oc, ic, kh, kw);
    if (db.numel()) {
      double acc = 0.0;
      for (std::size_t n = 0; n < d.n; ++n)
        for (std::size_t oh = 0; oh < d.oh; ++oh)
          for (std::size_t ow = 0; ow < d.ow; ++ow)
            acc += static_cast<double>(dout.at4(n, oc, oh, ow));
      db.data[oc] += static_cast<float>(acc);
    }
  }
}

}  // namespace osplit
