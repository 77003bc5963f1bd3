#pragma once

#include <string>

#include "osplit/tensor.hpp"

namespace osplit {

// Image similarity metrics on [h, w] tensors with values in [0, 1].

double image_mse(const Tensor& a, const Tensor& b);

// -10 * log10(max(mse, 1e-10)); an exact-zero error therefore caps at 100 dB.
double psnr_from_mse(double mse);

// Mean structural similarity over all fully-interior window positions,
// uniform 7x7 window (shrunk to fit tiny images), K1=0.01, K2=0.03, L=1.
double image_ssim(const Tensor& a, const Tensor& b, int window = 7);

// Metrics restricted to the foreground of the reference image: MSE/PSNR over
// pixels where the reference exceeds `thresh`, SSIM over the tight bounding
// box of that mask.  `defined` is false when the mask is empty (values NaN).
struct MaskedMetrics {
  double mse = 0, psnr = 0, ssim = 0;
  bool defined = false;
};
MaskedMetrics masked_metrics(const Tensor& recon, const Tensor& reference,
                             float thresh = 0.1f);

// 8-bit binary image writers ([0,1] clamped).  PGM for [h,w], PPM for [3,h,w].
void write_pgm(const std::string& path, const Tensor& img);
void write_ppm(const std::string& path, const Tensor& img);

}  // namespace osplit
