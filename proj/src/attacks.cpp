#include "osplit/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <utility>

#include "osplit/optimizer.hpp"
#include "osplit/rng.hpp"

namespace osplit {

ReconReport score_reconstructions(Tensor recon, const Tensor& reference) {
  if (recon.rank() != 3 || !recon.same_shape(reference))
    throw std::invalid_argument("score_reconstructions: two equal [n,h,w] tensors required");
  const std::size_t n = recon.shape[0], h = recon.shape[1], w = recon.shape[2];
  ReconReport rep;
  rep.recon = std::move(recon);
  double s_mse = 0, s_psnr = 0, s_ssim = 0;
  double m_mse = 0, m_psnr = 0, m_ssim = 0;
  std::size_t m_count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor a({h, w}), b({h, w});
    std::copy_n(rep.recon.data.begin() + static_cast<std::ptrdiff_t>(i * h * w), h * w,
                a.data.begin());
    std::copy_n(reference.data.begin() + static_cast<std::ptrdiff_t>(i * h * w), h * w,
                b.data.begin());
    const double mse = image_mse(a, b);
    rep.mse.push_back(mse);
    rep.psnr.push_back(psnr_from_mse(mse));
    rep.ssim.push_back(image_ssim(a, b));
    s_mse += mse;
    s_psnr += rep.psnr.back();
    s_ssim += rep.ssim.back();
    MaskedMetrics mm = masked_metrics(a, b);
    rep.masked.push_back(mm);
    if (mm.defined) {
      m_mse += mm.mse;
      m_psnr += mm.psnr;
      m_ssim += mm.ssim;
      ++m_count;
    }
  }
  const double dn = static_cast<double>(n);
  rep.mean_mse = s_mse / dn;
  rep.mean_psnr = s_psnr / dn;
  rep.mean_ssim = s_ssim / dn;
  if (m_count > 0) {
    rep.masked_defined = true;
    rep.mean_masked_mse = m_mse / static_cast<double>(m_count);
    rep.mean_masked_psnr = m_psnr / static_cast<double>(m_count);
    rep.mean_masked_ssim = m_ssim / static_cast<double>(m_count);
  }
  return rep;
}

namespace {
Tensor maybe_lift(const Tensor& z, const ProjectionBasis* basis) {
  return basis ? lift_fixed(*basis, z) : z;
}

Tensor rows(const Tensor& m, const std::vector<std::size_t>& idx, std::size_t lo,
            std::size_t hi) {
  const std::size_t cols = m.shape[1];
  Tensor out({hi - lo, cols});
  for (std::size_t r = lo; r < hi; ++r)
    std::copy_n(m.data.begin() + static_cast<std::ptrdiff_t>(idx[r] * cols), cols,
                out.data.begin() + static_cast<std::ptrdiff_t>((r - lo) * cols));
  return out;
}
}  // namespace

ReconReport decoder_inversion(const Tensor& z_aux, const Tensor& imgs_aux,
                              const Tensor& z_victim, const Tensor& imgs_victim,
                              const ProjectionBasis* basis,
                              const DecoderAttackConfig& cfg) {
  if (z_aux.rank() != 2 || z_victim.rank() != 2 || imgs_aux.rank() != 3 ||
      imgs_victim.rank() != 3)
    throw std::invalid_argument("decoder_inversion: payloads must be [n,dim], images [n,h,w]");
  if (z_aux.shape[0] == 0) throw std::invalid_argument("decoder_inversion: empty auxiliary set");
  if (z_aux.shape[0] != imgs_aux.shape[0] || z_victim.shape[0] != imgs_victim.shape[0])
    throw std::invalid_argument("decoder_inversion: payload/image row counts differ");
  if (z_aux.shape[1] != z_victim.shape[1])
    throw std::invalid_argument("decoder_inversion: payload widths differ");

  const Tensor feats_aux = maybe_lift(z_aux, basis);
  const Tensor feats_victim = maybe_lift(z_victim, basis);
  const std::size_t n_aux = feats_aux.shape[0];
  const std::size_t feat_dim = feats_aux.shape[1];
  const std::size_t h = imgs_aux.shape[1], w = imgs_aux.shape[2];
  const std::size_t hw = h * w;

  Tensor targets_aux = imgs_aux.reshaped({n_aux, hw});

  RngStream rng(cfg.seed);
  Network dec;
  dec.mode = Mode::Train;
  if (cfg.linear) {
    dec.layers.push_back(dense(feat_dim, hw, rng));
  } else {
    dec.layers.push_back(dense(feat_dim, cfg.hidden, rng));
    dec.layers.push_back(relu());
    dec.layers.push_back(dense(cfg.hidden, hw, rng));
  }

  Optimizer opt = Optimizer::adam(cfg.lr);
  std::vector<std::size_t> order(n_aux);
  std::iota(order.begin(), order.end(), std::size_t{0});

  double last_epoch_mse = 0.0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = n_aux; i > 1; --i)
      std::swap(order[i - 1], order[rng.below(i)]);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t lo = 0; lo < n_aux; lo += cfg.batch) {
      const std::size_t hi = std::min(lo + cfg.batch, n_aux);
      Tensor xb = rows(feats_aux, order, lo, hi);
      Tensor yb = rows(targets_aux, order, lo, hi);
      Tape tape;
      Tensor pred = forward(dec, xb, &tape);
      Tensor grad;
      loss_sum += mse_loss(pred, yb, &grad);
      ++batches;
      Gradients g = make_gradients(dec);
      backward_from_seed(dec, tape, grad, g);
      opt.apply(dec, g);
    }
    last_epoch_mse = loss_sum / static_cast<double>(std::max<std::size_t>(batches, 1));
  }

  dec.mode = Mode::Eval;
  Tensor pred = forward(dec, feats_victim);
  ReconReport rep = score_reconstructions(pred.reshaped({imgs_victim.shape[0], h, w}),
                                          imgs_victim);
  rep.train_mse = last_epoch_mse;
  return rep;
}

GradMatchResult gradient_match_inversion(Network& clone_head, const ProjectionBasis* basis,
                                         const Tensor& target_zt,
                                         const std::vector<std::size_t>& input_shape,
                                         const GradMatchConfig& cfg) {
  if (target_zt.rank() != 2 || target_zt.shape[0] != 1)
    throw std::invalid_argument("gradient_match_inversion: target must be [1, wire_dim]");
  if (input_shape.empty() || input_shape[0] != 1)
    throw std::invalid_argument("gradient_match_inversion: input shape must start with batch 1");

  clone_head.mode = Mode::Eval;
  GradMatchResult res;
  res.recon = Tensor::zeros(input_shape);

  std::vector<double> m(res.recon.numel(), 0.0), v(res.recon.numel(), 0.0);
  Optimizer head_opt = Optimizer::adam(cfg.head_lr);
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  auto fit_once = [&](Gradients* head_grads, Tensor* input_grad) -> double {
    Tape tape;
    Tensor z = forward(clone_head, res.recon, &tape);
    Tensor zt = basis ? project(*basis, z) : z;
    Tensor grad;
    const double loss = mse_loss(zt, target_zt, &grad);
    Tensor seed = basis ? backprop_projection(*basis, grad) : std::move(grad);
    Gradients scratch = head_grads ? std::move(*head_grads) : make_gradients(clone_head);
    Tensor gin = backward_from_seed(clone_head, tape, seed, scratch);
    if (head_grads) *head_grads = std::move(scratch);
    if (input_grad) *input_grad = std::move(gin);
    return loss;
  };

  res.fit_mse = fit_once(nullptr, nullptr);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    Tensor gin;
    fit_once(nullptr, &gin);
    if (cfg.adam) {
      const double t = static_cast<double>(it + 1);
      const double bc1 = 1.0 - std::pow(beta1, t);
      const double bc2 = 1.0 - std::pow(beta2, t);
      for (std::size_t i = 0; i < gin.numel(); ++i) {
        const double g = gin.data[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        res.recon.data[i] = static_cast<float>(
            res.recon.data[i] - cfg.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps));
      }
    } else {
      for (std::size_t i = 0; i < gin.numel(); ++i)
        res.recon.data[i] = static_cast<float>(res.recon.data[i] - cfg.lr * gin.data[i]);
    }

    if (cfg.optimize_head) {
      Gradients hg = make_gradients(clone_head);
      fit_once(&hg, nullptr);
      head_opt.apply(clone_head, hg);
    }
    res.fit_mse = fit_once(nullptr, nullptr);
  }
  return res;
}

}  // namespace osplit
