#include "osplit/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace osplit {

void Optimizer::apply(const std::vector<Network*>& nets, const std::vector<Gradients*>& grads) {
  if (nets.size() != grads.size())
    throw std::invalid_argument("optimizer: nets/grads count mismatch");
  ++step_count_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
  std::size_t slot = 0;
  for (std::size_t ni = 0; ni < nets.size(); ++ni) {
    for_each_param(*nets[ni], *grads[ni], [&](Tensor& p, Tensor& gr) {
      if (kind_ == OptKind::Sgd) {
        for (std::size_t i = 0; i < p.numel(); ++i)
          p.data[i] = static_cast<float>(static_cast<double>(p.data[i]) -
                                         lr_ * static_cast<double>(gr.data[i]));
      } else {
        if (slot >= m_.size()) {
          m_.emplace_back(p.numel(), 0.0);
          v_.emplace_back(p.numel(), 0.0);
          vmax_.emplace_back(p.numel(), 0.0);
        }
        std::vector<double>& m = m_[slot];
        std::vector<double>& v = v_[slot];
        std::vector<double>& vm = vmax_[slot];
        if (m.size() != p.numel())
          throw std::logic_error("optimizer: parameter layout changed between steps");
        for (std::size_t i = 0; i < p.numel(); ++i) {
          double grad = static_cast<double>(gr.data[i]);
          m[i] = beta1_ * m[i] + (1.0 - beta1_) * grad;
          v[i] = beta2_ * v[i] + (1.0 - beta2_) * grad * grad;
          double denom;
          if (amsgrad_) {
            vm[i] = std::max(vm[i], v[i]);
            denom = std::sqrt(vm[i]) / std::sqrt(bc2) + eps_;
          } else {
            denom = std::sqrt(v[i]) / std::sqrt(bc2) + eps_;
          }
          p.data[i] = static_cast<float>(static_cast<double>(p.data[i]) -
                                         (lr_ / bc1) * m[i] / denom);
        }
      }
      ++slot;
    });
    ++nets[ni]->version;
  }
}

}  // namespace osplit
