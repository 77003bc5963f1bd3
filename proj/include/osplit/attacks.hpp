#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "osplit/bottleneck.hpp"
#include "osplit/metrics.hpp"
#include "osplit/nn.hpp"
#include "osplit/tensor.hpp"

namespace osplit {

// Reconstruction quality of an inversion attack over a victim set: per-image
// and mean MSE / PSNR / SSIM, plus the foreground-masked variants computed
// where the reference image is bright.
struct ReconReport {
  Tensor recon;  // [n, h, w] reconstructed images, clamped nowhere (raw output)
  std::vector<double> mse, psnr, ssim;
  double mean_mse = 0.0, mean_psnr = 0.0, mean_ssim = 0.0;
  std::vector<MaskedMetrics> masked;
  double mean_masked_mse = 0.0, mean_masked_psnr = 0.0, mean_masked_ssim = 0.0;
  bool masked_defined = false;  // true when at least one image had a non-empty mask
  double train_mse = 0.0;       // mean training loss of the attack's final epoch
};

// Scores `recon` ([n,h,w]) against `reference` ([n,h,w]) image by image and
// fills every metric field of a ReconReport.
ReconReport score_reconstructions(Tensor recon, const Tensor& reference);

struct DecoderAttackConfig {
  std::size_t hidden = 128;  // width of the single hidden layer
  bool linear = false;       // skip the hidden layer entirely
  std::size_t epochs = 30;
  std::size_t batch = 64;
  double lr = 1e-3;
  std::uint64_t seed = 1;
};

// Trains a small dense decoder on auxiliary (cut payload, image) pairs and
// applies it to the victim payloads.  When `basis` is given the payloads are
// first lifted back to the cut width with the fixed transpose map, so the
// decoder always consumes full-width features; with `basis == nullptr` the
// payloads are used as observed.
//
// `z_aux`/`z_victim` are [n, wire_dim] payload matrices; `imgs_*` are the
// matching [n, h, w] ground-truth images.  Training is Adam on mean squared
// error, deterministic per seed.  Throws std::invalid_argument on an empty
// auxiliary set or mismatched row counts.
ReconReport decoder_inversion(const Tensor& z_aux, const Tensor& imgs_aux,
                              const Tensor& z_victim, const Tensor& imgs_victim,
                              const ProjectionBasis* basis,
                              const DecoderAttackConfig& cfg = {});

struct GradMatchConfig {
  std::size_t iterations = 2000;
  double lr = 0.1;             // step size on the candidate input
  bool adam = false;           // Adam on the input instead of plain gradient descent
  bool optimize_head = false;  // alternate clone-head parameter updates each iteration
  double head_lr = 1e-3;       // Adam step size for the clone head when enabled
};

struct GradMatchResult {
  Tensor recon;         // candidate input after optimization (initialization shape)
  double fit_mse = 0.0; // final mean squared payload mismatch
};

// Optimizes a candidate input, starting from zeros, so that pushing it
// through the clone head (and the projection, when given) reproduces the
// observed payload `target_zt` ([1, wire_dim]).  With plain gradient descent
// and a linear head the zero start keeps the iterate inside the row space of
// the effective map, so the converged answer is the minimum-norm solution and
// the residual equals the target's null-space component.
//
// With `optimize_head` the clone head's parameters are refined in alternation
// with the input, matching the known-architecture threat model where the
// attacker does not know the victim's weights.  The head runs in inference
// mode throughout.  Zero iterations returns the all-zero initialization.
GradMatchResult gradient_match_inversion(Network& clone_head, const ProjectionBasis* basis,
                                         const Tensor& target_zt,
                                         const std::vector<std::size_t>& input_shape,
                                         const GradMatchConfig& cfg = {});

}  // namespace osplit
