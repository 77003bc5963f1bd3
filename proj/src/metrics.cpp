#include "osplit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "osplit/errors.hpp"

namespace osplit {

namespace {
void check_pair(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || !a.same_shape(b))
    throw std::invalid_argument("image metrics: two [h,w] tensors of equal shape required");
}
}  // namespace

double image_mse(const Tensor& a, const Tensor& b) {
  check_pair(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    s += d * d;
  }
  return s / static_cast<double>(a.numel());
}

double psnr_from_mse(double mse) {
  return -10.0 * std::log10(std::max(mse, 1e-10));
}

double image_ssim(const Tensor& a, const Tensor& b, int window) {
  check_pair(a, b);
  const std::size_t h = a.shape[0], w = a.shape[1];
  const std::size_t win = std::min<std::size_t>(static_cast<std::size_t>(window),
                                                std::min(h, w));
  if (win < 1) throw std::invalid_argument("ssim: empty image");
  constexpr double k1 = 0.01, k2 = 0.03, L = 1.0;
  const double c1 = (k1 * L) * (k1 * L);
  const double c2 = (k2 * L) * (k2 * L);
  const double npix = static_cast<double>(win * win);

  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i + win <= h; ++i)
    for (std::size_t j = 0; j + win <= w; ++j) {
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      for (std::size_t y = 0; y < win; ++y)
        for (std::size_t x = 0; x < win; ++x) {
          double va = a(i + y, j + x);
          double vb = b(i + y, j + x);
          sa += va;
          sb += vb;
          saa += va * va;
          sbb += vb * vb;
          sab += va * vb;
        }
      double mu_a = sa / npix, mu_b = sb / npix;
      double var_a = saa / npix - mu_a * mu_a;
      double var_b = sbb / npix - mu_b * mu_b;
      double cov = sab / npix - mu_a * mu_b;
      double num = (2 * mu_a * mu_b + c1) * (2 * cov + c2);
      double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
      total += num / den;
      ++count;
    }
  return total / static_cast<double>(count);
}

MaskedMetrics masked_metrics(const Tensor& recon, const Tensor& reference, float thresh) {
  check_pair(recon, reference);
  const std::size_t h = recon.shape[0], w = recon.shape[1];
  MaskedMetrics mm;
  double s = 0.0;
  std::size_t n = 0;
  std::size_t top = h, bottom = 0, left = w, right = 0;
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      if (reference(i, j) <= thresh) continue;
      double d = static_cast<double>(recon(i, j)) - static_cast<double>(reference(i, j));
      s += d * d;
      ++n;
      top = std::min(top, i);
      bottom = std::max(bottom, i);
      left = std::min(left, j);
      right = std::max(right, j);
    }
  if (n == 0) {
    mm.mse = mm.psnr = mm.ssim = std::numeric_limits<double>::quiet_NaN();
    return mm;
  }
  mm.defined = true;
  mm.mse = s / static_cast<double>(n);
  mm.psnr = psnr_from_mse(mm.mse);

  const std::size_t ch = bottom - top + 1, cw = right - left + 1;
  Tensor ca({ch, cw}), cb({ch, cw});
  for (std::size_t i = 0; i < ch; ++i)
    for (std::size_t j = 0; j < cw; ++j) {
      ca(i, j) = recon(top + i, left + j);
      cb(i, j) = reference(top + i, left + j);
    }
  mm.ssim = image_ssim(ca, cb);
  return mm;
}

namespace {
std::uint8_t to_byte(float v) {
  double x = std::clamp(static_cast<double>(v), 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(x * 255.0));
}
}  // namespace

void write_pgm(const std::string& path, const Tensor& img) {
  if (img.rank() != 2) throw std::invalid_argument("pgm: [h,w] tensor required");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("pgm: cannot open " + path);
  f << "P5\n" << img.shape[1] << " " << img.shape[0] << "\n255\n";
  for (float v : img.data) f.put(static_cast<char>(to_byte(v)));
}

void write_ppm(const std::string& path, const Tensor& img) {
  if (img.rank() != 3 || img.shape[0] != 3)
    throw std::invalid_argument("ppm: [3,h,w] tensor required");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("ppm: cannot open " + path);
  const std::size_t h = img.shape[1], w = img.shape[2];
  f << "P6\n" << w << " " << h << "\n255\n";
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t c = 0; c < 3; ++c)
        f.put(static_cast<char>(to_byte(img.data[(c * h + i) * w + j])));
}

}  // namespace osplit
