#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "osplit/kernels.hpp"
#include "osplit/tensor.hpp"

namespace osplit {

// Minimal layer-sequential network with reverse-mode differentiation.
// Supported layers: dense, conv2d, relu, max-pool, batch-norm, flatten.
// Forward records a tape; backward_from_seed replays it in reverse from an
// externally supplied output gradient, which is how the two halves of a split
// model exchange gradients at the cut.

enum class LayerKind { Dense, Conv2d, Relu, MaxPool, BatchNorm, Flatten, Unflatten };
enum class Mode { Train, Eval };

struct Layer {
  LayerKind kind;
  Tensor w, b;                        // dense [out,in]/[out]; conv [oc,ic,kh,kw]/[oc]
  Tensor gamma, beta;                 // batch-norm scale/shift [c]
  Tensor run_mean, run_var;           // batch-norm running stats [c]
  int stride = 1, pad = 0;            // conv
  int window = 2, pool_stride = 2;    // max-pool
  float eps = 1e-5f;                  // batch-norm
  float momentum = 0.1f;              // running-stat update weight
  std::size_t un_c = 0, un_h = 0, un_w = 0;  // unflatten target [c,h,w]
};

// He-normal weight init (std = sqrt(2 / fan_in)), bias zero.
Layer dense(std::size_t in, std::size_t out, RngStream& rng, bool bias = true);
// All-zero weights; used for adapter output layers that must start inert.
Layer dense_zero(std::size_t in, std::size_t out, bool bias = true);
Layer conv2d(std::size_t cin, std::size_t cout, int ksize, int stride, int pad,
             RngStream& rng, bool bias = true);
Layer relu();
Layer maxpool(int window, int stride);
Layer batchnorm(std::size_t c);
Layer flatten();
// [n, c*h*w] -> [n, c, h, w]
Layer unflatten(std::size_t c, std::size_t h, std::size_t w);

struct Network {
  std::vector<Layer> layers;
  Mode mode = Mode::Train;
  std::uint64_t version = 0;  // bumped on every parameter mutation

  std::size_t param_count() const;
};

struct LayerTape {
  Tensor in;                        // layer input
  std::vector<std::size_t> argmax;  // max-pool winner index per output element
  std::vector<double> mean, var;    // batch-norm batch stats
  Tensor xhat;                      // batch-norm normalized input
};

struct Tape {
  std::vector<LayerTape> layers;
  Tensor output;
  const Network* net = nullptr;
  std::uint64_t net_version = 0;
  Mode mode = Mode::Train;
};

// Runs the network on a batch.  In train mode batch-norm consumes batch
// statistics and updates running averages; pass a tape to enable backward.
Tensor forward(Network& net, const Tensor& input, Tape* tape = nullptr);

// Parameter-gradient buffers shaped like the network's parameters.
struct LayerGrads {
  Tensor w, b, gamma, beta;
};
struct Gradients {
  std::vector<LayerGrads> layers;
  void zero();
};
Gradients make_gradients(const Network& net);

// Reverse pass of seed^T * output.  Parameter gradients are ADDED into g, so
// two calls on the same tape sum their contributions (required when a second
// loss term joins at an intermediate activation).  Returns the gradient with
// respect to the forward input.  Throws std::logic_error if the network's
// parameters changed since the tape was recorded (stale tape).
Tensor backward_from_seed(const Network& net, const Tape& tape, const Tensor& seed,
                          Gradients& g);

// Mean cross-entropy over the batch from raw logits, with the analytic
// logits gradient (softmax - onehot) / batch.
struct CeResult {
  double loss;
  Tensor grad_logits;
};
CeResult cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// Mean squared error over all elements; optionally emits d(loss)/d(pred).
double mse_loss(const Tensor& pred, const Tensor& target, Tensor* grad = nullptr);

// Aligned (parameter, gradient) traversal used by the optimizer and tests.
template <typename F>
void for_each_param(Network& net, Gradients& g, F&& fn) {
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    Layer& l = net.layers[li];
    LayerGrads& lg = g.layers[li];
    if (l.w.numel()) fn(l.w, lg.w);
    if (l.b.numel()) fn(l.b, lg.b);
    if (l.gamma.numel()) fn(l.gamma, lg.gamma);
    if (l.beta.numel()) fn(l.beta, lg.beta);
  }
}

}  // namespace osplit
