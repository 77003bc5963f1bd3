#include "osplit/nn.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace osplit {

namespace {

std::size_t bn_channels(const Tensor& x) {
  if (x.rank() == 2 || x.rank() == 4) return x.shape[1];
  throw std::invalid_argument("batchnorm: rank-2 or rank-4 input required");
}

// Iterate the elements of channel c in a [N,C] or [N,C,H,W] tensor.
template <typename F>
void for_channel(const Tensor& x, std::size_t c, F&& fn) {
  const std::size_t n = x.shape[0];
  if (x.rank() == 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i * x.shape[1] + c);
  } else {
    const std::size_t hw = x.shape[2] * x.shape[3];
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t base = (i * x.shape[1] + c) * hw;
      for (std::size_t s = 0; s < hw; ++s) fn(base + s);
    }
  }
}

}  // namespace

Layer dense(std::size_t in, std::size_t out, RngStream& rng, bool bias) {
  Layer l;
  l.kind = LayerKind::Dense;
  float std_dev = std::sqrt(2.0f / static_cast<float>(in));
  l.w = Tensor::randn({out, in}, rng, std_dev);
  if (bias) l.b = Tensor::zeros({out});
  return l;
}

Layer dense_zero(std::size_t in, std::size_t out, bool bias) {
  Layer l;
  l.kind = LayerKind::Dense;
  l.w = Tensor::zeros({out, in});
  if (bias) l.b = Tensor::zeros({out});
  return l;
}

Layer conv2d(std::size_t cin, std::size_t cout, int ksize, int stride, int pad,
             RngStream& rng, bool bias) {
  Layer l;
  l.kind = LayerKind::Conv2d;
  std::size_t ks = static_cast<std::size_t>(ksize);
  float fan_in = static_cast<float>(cin * ks * ks);
  l.w = Tensor::randn({cout, cin, ks, ks}, rng, std::sqrt(2.0f / fan_in));
  if (bias) l.b = Tensor::zeros({cout});
  l.stride = stride;
  l.pad = pad;
  return l;
}

Layer relu() {
  Layer l;
  l.kind = LayerKind::Relu;
  return l;
}

Layer maxpool(int window, int stride) {
  Layer l;
  l.kind = LayerKind::MaxPool;
  l.window = window;
  l.pool_stride = stride;
  return l;
}

Layer batchnorm(std::size_t c) {
  Layer l;
  l.kind = LayerKind::BatchNorm;
  l.gamma = Tensor::full({c}, 1.0f);
  l.beta = Tensor::zeros({c});
  l.run_mean = Tensor::zeros({c});
  l.run_var = Tensor::full({c}, 1.0f);
  return l;
}

Layer flatten() {
  Layer l;
  l.kind = LayerKind::Flatten;
  return l;
}

Layer unflatten(std::size_t c, std::size_t h, std::size_t w) {
  Layer l;
  l.kind = LayerKind::Unflatten;
  l.un_c = c;
  l.un_h = h;
  l.un_w = w;
  return l;
}

std::size_t Network::param_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers)
    n += l.w.numel() + l.b.numel() + l.gamma.numel() + l.beta.numel();
  return n;
}

namespace {

Tensor dense_fwd(const Layer& l, const Tensor& x) {
  if (x.rank() != 2) throw std::invalid_argument("dense: rank-2 input required");
  if (x.shape[1] != l.w.shape[1]) throw std::invalid_argument("dense: width mismatch");
  Tensor y = matmul(x, l.w, false, true);
  if (l.b.numel())
    for (std::size_t i = 0; i < y.shape[0]; ++i)
      for (std::size_t j = 0; j < y.shape[1]; ++j) y(i, j) += l.b.data[j];
  return y;
}

Tensor relu_fwd(const Tensor& x) {
  Tensor y = x;
  for (float& v : y.data) v = v > 0.0f ? v : 0.0f;
  return y;
}

Tensor maxpool_fwd(const Layer& l, const Tensor& x, std::vector<std::size_t>* argmax) {
  if (x.rank() != 4) throw std::invalid_argument("maxpool: rank-4 input required");
  const std::size_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
  const std::size_t win = static_cast<std::size_t>(l.window);
  const std::size_t st = static_cast<std::size_t>(l.pool_stride);
  if (h < win || w < win) throw std::invalid_argument("maxpool: window larger than input");
  const std::size_t oh = (h - win) / st + 1, ow = (w - win) / st + 1;
  Tensor y({n, c, oh, ow});
  if (argmax) argmax->assign(y.numel(), 0);
  std::size_t oi = 0;
  for (std::size_t ni = 0; ni < n; ++ni)
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t yh = 0; yh < oh; ++yh)
        for (std::size_t yw = 0; yw < ow; ++yw, ++oi) {
          float best = -std::numeric_limits<float>::infinity();
          std::size_t best_idx = 0;
          for (std::size_t kh = 0; kh < win; ++kh)
            for (std::size_t kw = 0; kw < win; ++kw) {
              std::size_t ih = yh * st + kh, iw = yw * st + kw;
              std::size_t idx = ((ni * c + ci) * h + ih) * w + iw;
              if (x.data[idx] > best) {  // first maximum wins on ties
                best = x.data[idx];
                best_idx = idx;
              }
            }
          y.data[oi] = best;
          if (argmax) (*argmax)[oi] = best_idx;
        }
  return y;
}

Tensor bn_fwd(Layer& l, const Tensor& x, Mode mode, LayerTape* lt) {
  const std::size_t c = bn_channels(x);
  if (c != l.gamma.numel()) throw std::invalid_argument("batchnorm: channel mismatch");
  const std::size_t per = x.numel() / c;
  Tensor y(x.shape);
  Tensor xhat(x.shape);
  std::vector<double> mean(c, 0.0), var(c, 0.0);
  if (mode == Mode::Train) {
    for (std::size_t ci = 0; ci < c; ++ci) {
      double s = 0.0;
      for_channel(x, ci, [&](std::size_t i) { s += static_cast<double>(x.data[i]); });
      double mu = s / static_cast<double>(per);
      double s2 = 0.0;
      for_channel(x, ci, [&](std::size_t i) {
        double dlt = static_cast<double>(x.data[i]) - mu;
        s2 += dlt * dlt;
      });
      double v = s2 / static_cast<double>(per);  // biased
      mean[ci] = mu;
      var[ci] = v;
      double inv = 1.0 / std::sqrt(v + static_cast<double>(l.eps));
      double g = static_cast<double>(l.gamma.data[ci]);
      double bt = static_cast<double>(l.beta.data[ci]);
      for_channel(x, ci, [&](std::size_t i) {
        double xh = (static_cast<double>(x.data[i]) - mu) * inv;
        xhat.data[i] = static_cast<float>(xh);
        y.data[i] = static_cast<float>(g * xh + bt);
      });
      float m = l.momentum;
      l.run_mean.data[ci] = (1.0f - m) * l.run_mean.data[ci] + m * static_cast<float>(mu);
      l.run_var.data[ci] = (1.0f - m) * l.run_var.data[ci] + m * static_cast<float>(v);
    }
  } else {
    for (std::size_t ci = 0; ci < c; ++ci) {
      double mu = static_cast<double>(l.run_mean.data[ci]);
      double v = static_cast<double>(l.run_var.data[ci]);
      double inv = 1.0 / std::sqrt(v + static_cast<double>(l.eps));
      double g = static_cast<double>(l.gamma.data[ci]);
      double bt = static_cast<double>(l.beta.data[ci]);
      for_channel(x, ci, [&](std::size_t i) {
        double xh = (static_cast<double>(x.data[i]) - mu) * inv;
        xhat.data[i] = static_cast<float>(xh);
        y.data[i] = static_cast<float>(g * xh + bt);
      });
    }
  }
  if (lt) {
    lt->mean = std::move(mean);
    lt->var = std::move(var);
    lt->xhat = std::move(xhat);
  }
  return y;
}

Tensor flatten_fwd(const Tensor& x) {
  if (x.rank() < 2) throw std::invalid_argument("flatten: rank >= 2 required");
  return x.reshaped({x.shape[0], x.numel() / x.shape[0]});
}

}  // namespace

Tensor forward(Network& net, const Tensor& input, Tape* tape) {
  if (tape) {
    tape->layers.assign(net.layers.size(), LayerTape{});
    tape->net = &net;
    tape->net_version = net.version;
    tape->mode = net.mode;
  }
  Tensor x = input;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    Layer& l = net.layers[li];
    LayerTape* lt = tape ? &tape->layers[li] : nullptr;
    if (lt) lt->in = x;
    switch (l.kind) {
      case LayerKind::Dense:
        x = dense_fwd(l, x);
        break;
      case LayerKind::Conv2d:
        x = conv2d_forward(x, l.w, l.b, l.stride, l.pad);
        break;
      case LayerKind::Relu:
        x = relu_fwd(x);
        break;
      case LayerKind::MaxPool:
        x = maxpool_fwd(l, x, lt ? &lt->argmax : nullptr);
        break;
      case LayerKind::BatchNorm:
        x = bn_fwd(l, x, net.mode, lt);
        break;
      case LayerKind::Flatten:
        x = flatten_fwd(x);
        break;
      case LayerKind::Unflatten:
        if (x.rank() != 2) throw std::invalid_argument("unflatten: rank-2 input required");
        x = x.reshaped({x.shape[0], l.un_c, l.un_h, l.un_w});
        break;
    }
  }
  if (tape) tape->output = x;
  return x;
}

void Gradients::zero() {
  for (LayerGrads& lg : layers) {
    lg.w.fill(0.0f);
    lg.b.fill(0.0f);
    lg.gamma.fill(0.0f);
    lg.beta.fill(0.0f);
  }
}

Gradients make_gradients(const Network& net) {
  Gradients g;
  g.layers.resize(net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const Layer& l = net.layers[i];
    if (l.w.numel()) g.layers[i].w = Tensor::zeros(l.w.shape);
    if (l.b.numel()) g.layers[i].b = Tensor::zeros(l.b.shape);
    if (l.gamma.numel()) g.layers[i].gamma = Tensor::zeros(l.gamma.shape);
    if (l.beta.numel()) g.layers[i].beta = Tensor::zeros(l.beta.shape);
  }
  return g;
}

Tensor backward_from_seed(const Network& net, const Tape& tape, const Tensor& seed,
                          Gradients& g) {
  if (tape.net != &net || tape.net_version != net.version)
    throw std::logic_error("backward_from_seed: stale tape (parameters changed)");
  if (!seed.same_shape(tape.output))
    throw std::invalid_argument("backward_from_seed: seed shape must match output");
  if (g.layers.size() != net.layers.size())
    throw std::invalid_argument("backward_from_seed: gradient buffer mismatch");

  Tensor dy = seed;
  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const Layer& l = net.layers[li];
    const LayerTape& lt = tape.layers[li];
    LayerGrads& lg = g.layers[li];
    switch (l.kind) {
      case LayerKind::Dense: {
        // y = x W^T + b:  dx = dy W, dW += dy^T x, db += column sums of dy.
        lg.w.add_scaled(matmul(dy, lt.in, true, false), 1.0f);
        if (l.b.numel()) {
          for (std::size_t j = 0; j < dy.shape[1]; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < dy.shape[0]; ++i)
              s += static_cast<double>(dy(i, j));
            lg.b.data[j] += static_cast<float>(s);
          }
        }
        dy = matmul(dy, l.w, false, false);
        break;
      }
      case LayerKind::Conv2d: {
        Tensor dw_local = Tensor::zeros(l.w.shape);
        Tensor db_local = l.b.numel() ? Tensor::zeros(l.b.shape) : Tensor{};
        conv2d_backward_params(dy, lt.in, l.stride, l.pad, dw_local, db_local);
        lg.w.add_scaled(dw_local, 1.0f);
        if (l.b.numel()) lg.b.add_scaled(db_local, 1.0f);
        dy = conv2d_backward_input(dy, l.w, lt.in.shape[2], lt.in.shape[3], l.stride, l.pad);
        break;
      }
      case LayerKind::Relu: {
        Tensor dx(lt.in.shape);
        for (std::size_t i = 0; i < dx.numel(); ++i)
          dx.data[i] = lt.in.data[i] > 0.0f ? dy.data[i] : 0.0f;
        dy = std::move(dx);
        break;
      }
      case LayerKind::MaxPool: {
        Tensor dx = Tensor::zeros(lt.in.shape);
        for (std::size_t oi = 0; oi < dy.numel(); ++oi)
          dx.data[lt.argmax[oi]] += dy.data[oi];
        dy = std::move(dx);
        break;
      }
      case LayerKind::BatchNorm: {
        const std::size_t c = bn_channels(lt.in);
        const std::size_t per = lt.in.numel() / c;
        Tensor dx(lt.in.shape);
        for (std::size_t ci = 0; ci < c; ++ci) {
          double gamma = static_cast<double>(l.gamma.data[ci]);
          double dgamma = 0.0, dbeta = 0.0;
          for_channel(lt.in, ci, [&](std::size_t i) {
            dgamma += static_cast<double>(dy.data[i]) * static_cast<double>(lt.xhat.data[i]);
            dbeta += static_cast<double>(dy.data[i]);
          });
          lg.gamma.data[ci] += static_cast<float>(dgamma);
          lg.beta.data[ci] += static_cast<float>(dbeta);
          if (tape.mode == Mode::Train) {
            // Batch statistics depend on x: use the compact centered form.
            double inv = 1.0 / std::sqrt(lt.var[ci] + static_cast<double>(l.eps));
            double sum1 = 0.0, sum2 = 0.0;
            for_channel(lt.in, ci, [&](std::size_t i) {
              double dxh = static_cast<double>(dy.data[i]) * gamma;
              sum1 += dxh;
              sum2 += dxh * static_cast<double>(lt.xhat.data[i]);
            });
            double n = static_cast<double>(per);
            for_channel(lt.in, ci, [&](std::size_t i) {
              double dxh = static_cast<double>(dy.data[i]) * gamma;
              double xh = static_cast<double>(lt.xhat.data[i]);
              dx.data[i] = static_cast<float>(inv / n * (n * dxh - sum1 - xh * sum2));
            });
          } else {
            double inv = 1.0 / std::sqrt(static_cast<double>(l.run_var.data[ci]) +
                                         static_cast<double>(l.eps));
            for_channel(lt.in, ci, [&](std::size_t i) {
              dx.data[i] = static_cast<float>(static_cast<double>(dy.data[i]) * gamma * inv);
            });
          }
        }
        dy = std::move(dx);
        break;
      }
      case LayerKind::Flatten:
      case LayerKind::Unflatten: {
        dy = dy.reshaped(lt.in.shape);
        break;
      }
    }
  }
  return dy;
}

CeResult cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) throw std::invalid_argument("cross_entropy: rank-2 logits");
  const std::size_t n = logits.shape[0], c = logits.shape[1];
  if (labels.size() != n) throw std::invalid_argument("cross_entropy: label count mismatch");
  CeResult r;
  r.grad_logits = Tensor({n, c});
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c)
      throw std::invalid_argument("cross_entropy: label out of range");
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) m = std::max(m, static_cast<double>(logits(i, j)));
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(static_cast<double>(logits(i, j)) - m);
    double lse = m + std::log(sum);
    total += lse - static_cast<double>(logits(i, y));
    for (std::size_t j = 0; j < c; ++j) {
      double p = std::exp(static_cast<double>(logits(i, j)) - lse);
      double oh = (static_cast<std::size_t>(y) == j) ? 1.0 : 0.0;
      r.grad_logits(i, j) = static_cast<float>((p - oh) / static_cast<double>(n));
    }
  }
  r.loss = total / static_cast<double>(n);
  return r;
}

double mse_loss(const Tensor& pred, const Tensor& target, Tensor* grad) {
  if (!pred.same_shape(target)) throw std::invalid_argument("mse_loss: shape mismatch");
  const double n = static_cast<double>(pred.numel());
  double total = 0.0;
  if (grad) *grad = Tensor(pred.shape);
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    double d = static_cast<double>(pred.data[i]) - static_cast<double>(target.data[i]);
    total += d * d;
    if (grad) grad->data[i] = static_cast<float>(2.0 * d / n);
  }
  return total / n;
}

}  // namespace osplit
