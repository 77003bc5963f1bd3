#include <doctest.h>
#include <stdexcept>

#include <cmath>
#include <vector>

#include "osplit/attacks.hpp"
#include "osplit/data.hpp"
#include "osplit/rng.hpp"

using namespace osplit;

namespace {

// [n, 1, h, w] dataset -> ([n, h*w] payload rows, [n, h, w] images).
std::pair<Tensor, Tensor> flat_pairs(const Dataset& d) {
  std::size_t n = d.x.shape[0], h = d.x.shape[2], w = d.x.shape[3];
  Tensor z = d.x.reshaped({n, h * w});
  Tensor imgs = d.x.reshaped({n, h, w});
  return {z, imgs};
}

Tensor project_rows(const ProjectionBasis& basis, const Tensor& z) {
  return project(basis, z);
}

double tensor_mse(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    double d = static_cast<double>(a.data[i]) - b.data[i];
    s += d * d;
  }
  return s / static_cast<double>(a.numel());
}

}  // namespace

TEST_CASE("scoring a perfect reconstruction") {
  Dataset d = synth_blobs(2, 4, 4, 4, 0.1, 1400);
  auto [z, imgs] = flat_pairs(d);
  (void)z;
  ReconReport rep = score_reconstructions(imgs, imgs);
  REQUIRE(rep.mse.size() == 8);
  for (std::size_t i = 0; i < rep.mse.size(); ++i) {
    CHECK(rep.mse[i] == 0.0);
    CHECK(rep.psnr[i] == doctest::Approx(100.0));
    CHECK(rep.ssim[i] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(rep.psnr[i] == doctest::Approx(psnr_from_mse(rep.mse[i])));
  }
  CHECK(rep.mean_mse == 0.0);
  CHECK(rep.mean_psnr == doctest::Approx(100.0));
  CHECK(rep.masked_defined);  // bright class blocks give non-empty masks
  CHECK(rep.mean_masked_mse == doctest::Approx(0.0));

  // Mean fields really are the means.
  double acc = 0;
  for (double v : rep.ssim) acc += v;
  CHECK(rep.mean_ssim == doctest::Approx(acc / 8.0));
}

TEST_CASE("scoring penalizes a wrong reconstruction") {
  Dataset d = synth_blobs(2, 4, 4, 4, 0.1, 1401);
  auto [z, imgs] = flat_pairs(d);
  (void)z;
  Tensor junk(imgs.shape);
  junk.fill(0.5f);
  ReconReport rep = score_reconstructions(junk, imgs);
  CHECK(rep.mean_mse > 0.01);
  CHECK(rep.mean_psnr < 30.0);
  ReconReport self = score_reconstructions(imgs, imgs);
  CHECK(rep.mean_ssim < self.mean_ssim);
}

TEST_CASE("a linear decoder on full-width payloads recovers the images") {
  // Payloads are the flattened images themselves, so the ideal decoder is the
  // identity map and training should drive the victim error near zero.
  Dataset aux = synth_blobs(2, 48, 4, 4, 0.08, 1402);
  Dataset vic = synth_blobs(2, 8, 4, 4, 0.08, 1403);
  auto [z_aux, imgs_aux] = flat_pairs(aux);
  auto [z_vic, imgs_vic] = flat_pairs(vic);

  DecoderAttackConfig cfg;
  cfg.linear = true;
  cfg.epochs = 200;
  cfg.batch = 32;
  cfg.lr = 1e-2;
  cfg.seed = 5;
  ReconReport rep = decoder_inversion(z_aux, imgs_aux, z_vic, imgs_vic, nullptr, cfg);
  CHECK(rep.recon.shape == imgs_vic.shape);
  CHECK(rep.train_mse < 0.01);
  CHECK(rep.mean_mse < 0.02);
  CHECK(rep.mean_psnr > 20.0);
}

TEST_CASE("projected payloads reconstruct worse than raw ones") {
  Dataset aux = synth_blobs(2, 48, 4, 4, 0.08, 1404);
  Dataset vic = synth_blobs(2, 8, 4, 4, 0.08, 1405);
  auto [z_aux, imgs_aux] = flat_pairs(aux);
  auto [z_vic, imgs_vic] = flat_pairs(vic);

  ProjectionBasis basis(16, 2, 99);  // keep 2 of 16 directions
  Tensor p_aux = project_rows(basis, z_aux);
  Tensor p_vic = project_rows(basis, z_vic);

  DecoderAttackConfig cfg;
  cfg.linear = true;
  cfg.epochs = 200;
  cfg.batch = 32;
  cfg.lr = 1e-2;
  cfg.seed = 6;
  ReconReport raw = decoder_inversion(z_aux, imgs_aux, z_vic, imgs_vic, nullptr, cfg);
  ReconReport prj = decoder_inversion(p_aux, imgs_aux, p_vic, imgs_vic, &basis, cfg);
  CHECK(prj.mean_mse > 2.0 * raw.mean_mse);
  CHECK(prj.mean_psnr < raw.mean_psnr);
}

TEST_CASE("decoder training is deterministic per seed") {
  Dataset aux = synth_blobs(2, 16, 4, 4, 0.1, 1406);
  Dataset vic = synth_blobs(2, 4, 4, 4, 0.1, 1407);
  auto [z_aux, imgs_aux] = flat_pairs(aux);
  auto [z_vic, imgs_vic] = flat_pairs(vic);
  DecoderAttackConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 7;
  ReconReport a = decoder_inversion(z_aux, imgs_aux, z_vic, imgs_vic, nullptr, cfg);
  ReconReport b = decoder_inversion(z_aux, imgs_aux, z_vic, imgs_vic, nullptr, cfg);
  CHECK(a.recon.data == b.recon.data);
  CHECK(a.train_mse == b.train_mse);
  cfg.seed = 8;
  ReconReport c = decoder_inversion(z_aux, imgs_aux, z_vic, imgs_vic, nullptr, cfg);
  CHECK(a.recon.data != c.recon.data);
}

TEST_CASE("decoder input validation") {
  Dataset d = synth_blobs(2, 4, 4, 4, 0.1, 1408);
  auto [z, imgs] = flat_pairs(d);
  Tensor empty_z({0, 16});
  Tensor empty_i({0, 4, 4});
  CHECK_THROWS_AS(
      (void)decoder_inversion(empty_z, empty_i, z, imgs, nullptr, DecoderAttackConfig{}),
      std::invalid_argument);
  Tensor short_imgs({3, 4, 4});
  CHECK_THROWS_AS(
      (void)decoder_inversion(z, short_imgs, z, imgs, nullptr, DecoderAttackConfig{}),
      std::invalid_argument);
}

TEST_CASE("zero iterations of input matching returns the zero image") {
  RngStream rng(1409);
  Network head;
  head.layers.push_back(flatten());
  Tensor x = Tensor::randn({1, 1, 4, 4}, rng);
  Tensor target = x.reshaped({1, 16});
  GradMatchConfig cfg;
  cfg.iterations = 0;
  GradMatchResult r = gradient_match_inversion(head, nullptr, target, {1, 1, 4, 4}, cfg);
  CHECK(r.recon.shape == std::vector<std::size_t>{1, 1, 4, 4});
  for (float v : r.recon.data) CHECK(v == 0.0f);
  CHECK(r.fit_mse == doctest::Approx(tensor_mse(Tensor({1, 16}), target)));
}

TEST_CASE("plain descent solves the well-posed identity case exactly") {
  RngStream rng(1410);
  Network head;
  head.layers.push_back(flatten());
  Tensor x = Tensor::randn({1, 1, 4, 4}, rng, 0.5f);
  Tensor target = x.reshaped({1, 16});

  GradMatchConfig cfg;
  cfg.iterations = 60;
  cfg.lr = 16.0 / 4.0;  // contraction 1/2 per iteration for a 16-wide payload
  GradMatchResult r = gradient_match_inversion(head, nullptr, target, {1, 1, 4, 4}, cfg);
  CHECK(r.fit_mse < 1e-10);
  CHECK(tensor_mse(r.recon, x) < 1e-6);
}

TEST_CASE("descent from zero lands on the minimum-norm solution under projection") {
  // With an identity head and an orthonormal basis, the row-space iterate
  // converges to the lifted payload; the leftover error is exactly the
  // energy outside the retained subspace.
  RngStream rng(1411);
  Network head;
  head.layers.push_back(flatten());
  ProjectionBasis basis(16, 4, 17);
  Tensor x = Tensor::randn({1, 1, 4, 4}, rng, 0.5f);
  Tensor flat = x.reshaped({1, 16});
  Tensor zt = project(basis, flat);

  GradMatchConfig cfg;
  cfg.iterations = 60;
  cfg.lr = 4.0 / 4.0;  // payload width 4 -> contraction 1/2
  GradMatchResult r = gradient_match_inversion(head, &basis, zt, {1, 1, 4, 4}, cfg);
  CHECK(r.fit_mse < 1e-10);

  Tensor lifted = lift_fixed(basis, zt);
  CHECK(tensor_mse(r.recon, lifted.reshaped({1, 1, 4, 4})) < 1e-8);

  double total_energy = 0, kept_energy = 0;
  for (float v : flat.data) total_energy += static_cast<double>(v) * v;
  for (float v : zt.data) kept_energy += static_cast<double>(v) * v;
  double null_mse = (total_energy - kept_energy) / 16.0;
  CHECK(tensor_mse(r.recon, x) == doctest::Approx(null_mse).epsilon(0.01));
}

TEST_CASE("the adaptive variant with head refinement runs deterministically") {
  RngStream rng(1412);
  Network head;
  head.layers.push_back(conv2d(1, 2, 3, 1, 1, rng));
  head.layers.push_back(relu());
  head.layers.push_back(flatten());
  // Positive biases keep units active at the zero initial guess; an all-zero
  // head would leave the optimizer parked on the dead-relu saddle point.
  head.layers[0].b.data = {0.07f, 0.04f};
  Tensor x = Tensor::randn({1, 1, 4, 4}, rng, 0.5f);
  head.mode = Mode::Eval;
  Tensor target = forward(head, x);

  GradMatchConfig cfg;
  cfg.iterations = 150;
  cfg.lr = 0.05;
  cfg.adam = true;
  cfg.optimize_head = true;
  cfg.head_lr = 1e-3;

  Network clone1 = head, clone2 = head;
  GradMatchResult a = gradient_match_inversion(clone1, nullptr, target, {1, 1, 4, 4}, cfg);
  GradMatchResult b = gradient_match_inversion(clone2, nullptr, target, {1, 1, 4, 4}, cfg);
  CHECK(a.recon.data == b.recon.data);
  CHECK(a.fit_mse == b.fit_mse);

  // It actually fits: far below the trivial all-zero candidate's error.
  Network fresh = head;
  Tensor zero_in({1, 1, 4, 4});
  Tensor base = forward(fresh, zero_in);
  CHECK(a.fit_mse < 0.5 * tensor_mse(base, target) + 1e-12);
}
