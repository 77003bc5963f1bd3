#pragma once

#include <cstdint>
#include <vector>

#include "osplit/nn.hpp"

namespace osplit {

enum class OptKind { Sgd, Adam };

// Per-network optimizer.  Adam keeps its moment estimates in binary64 (the
// parameters themselves stay binary32) and supports the max-second-moment
// variant.  One apply() is one step: the step counter advances once no matter
// how many tensors the network has.
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptKind kind, double lr) : kind_(kind), lr_(lr) {}

  static Optimizer sgd(double lr) { return Optimizer(OptKind::Sgd, lr); }
  static Optimizer adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                        double eps = 1e-8, bool amsgrad = true) {
    Optimizer o(OptKind::Adam, lr);
    o.beta1_ = beta1;
    o.beta2_ = beta2;
    o.eps_ = eps;
    o.amsgrad_ = amsgrad;
    return o;
  }

  // One optimizer step over every parameter of the given networks (a side of
  // the split model may span several nets, e.g. adapter + backbone).
  void apply(const std::vector<Network*>& nets, const std::vector<Gradients*>& grads);
  void apply(Network& net, Gradients& g) { apply(std::vector<Network*>{&net}, {&g}); }

  OptKind kind() const { return kind_; }
  double lr() const { return lr_; }
  long step_count() const { return step_count_; }

 private:
  OptKind kind_ = OptKind::Sgd;
  double lr_ = 0.01;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  bool amsgrad_ = true;
  long step_count_ = 0;
  std::vector<std::vector<double>> m_, v_, vmax_;  // one slot per parameter tensor
};

}  // namespace osplit
