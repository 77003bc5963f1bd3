#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "osplit/tensor.hpp"

namespace osplit {

struct Dataset {
  Tensor x;            // [n, c, h, w], values in [0, 1]
  std::vector<int> y;
  std::size_t classes = 0;

  std::size_t size() const { return y.size(); }
  std::uint64_t content_hash() const;  // fnv1a64 over pixel bytes then labels
};

// Gaussian class clusters rendered as images: each class owns a fixed bright
// block (position derived from the class index on a 4x4 grid) and samples are
// the block plus per-pixel normal noise, clipped to [0, 1].  spread = 0 makes
// all samples of a class identical; small spreads keep classes linearly
// separable.
Dataset synth_blobs(std::size_t classes, std::size_t per_class, std::size_t h,
                    std::size_t w, double spread, std::uint64_t seed);

// Classic big-endian u8 image/label file pair (magics 0x00000803/0x00000801).
// Pixels are scaled to [0, 1].  Throws FormatError on malformed files and
// InconsistentPair when the two counts disagree.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Label-skewed client split: for every class, client quotas follow a
// symmetric Dirichlet(alpha) draw (largest-remainder rounding), with samples
// assigned in seeded shuffled order.  Redraws (bounded) when a client would
// end up empty; throws PartitionFailure past the retry budget.
std::vector<std::vector<std::size_t>> dirichlet_partition(const std::vector<int>& labels,
                                                          std::size_t n_clients,
                                                          double alpha,
                                                          std::uint64_t seed,
                                                          int max_retries = 100);

// Backdoor injection: floor(p * n) seeded-sampled rows get a patch x patch
// top-left trigger (all channels set to trigger_value) and the target label.
// Returns the poisoned row indices, ascending.
std::vector<std::size_t> apply_poison(Tensor& x, std::vector<int>& y, double p,
                                      int target, std::uint64_t seed,
                                      float trigger_value = 1.0f, int patch = 3);

}  // namespace osplit
