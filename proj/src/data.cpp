#include "osplit/data.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>

#include "osplit/errors.hpp"

namespace osplit {

std::uint64_t Dataset::content_hash() const {
  std::uint64_t h = fnv1a64(x.data.data(), x.data.size() * sizeof(float));
  for (int label : y) {
    std::uint32_t v = static_cast<std::uint32_t>(label);
    std::uint8_t b[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                         static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 24)};
    h = fnv1a64(b, 4, h);
  }
  return h;
}

Dataset synth_blobs(std::size_t classes, std::size_t per_class, std::size_t h,
                    std::size_t w, double spread, std::uint64_t seed) {
  if (classes < 2) throw std::invalid_argument("synth_blobs: need at least 2 classes");
  if (classes > 16) throw std::invalid_argument("synth_blobs: at most 16 classes");
  if (h < 4 || w < 4) throw std::invalid_argument("synth_blobs: image too small");
  if (spread < 0) throw std::invalid_argument("synth_blobs: negative spread");

  const std::size_t n = classes * per_class;
  Dataset ds;
  ds.classes = classes;
  ds.x = Tensor({n, 1, h, w});
  ds.y.resize(n);

  // Class template: one bright block on a 4x4 position grid.
  const std::size_t bh = std::max<std::size_t>(1, h / 4);
  const std::size_t bw = std::max<std::size_t>(1, w / 4);
  auto block_origin = [&](std::size_t cls, std::size_t& top, std::size_t& left) {
    top = (cls % 4) * bh;
    left = ((cls / 4) % 4) * bw;
  };

  RngStream rng(seed);
  std::size_t row = 0;
  for (std::size_t cls = 0; cls < classes; ++cls) {
    std::size_t top, left;
    block_origin(cls, top, left);
    for (std::size_t s = 0; s < per_class; ++s, ++row) {
      ds.y[row] = static_cast<int>(cls);
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          double base = (i >= top && i < top + bh && j >= left && j < left + bw) ? 0.9 : 0.0;
          double v = base + spread * rng.normal();
          ds.x.at4(row, 0, i, j) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
  }
  return ds;
}

namespace {

std::uint32_t be32(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

std::vector<std::uint8_t> read_all(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("idx: cannot open " + path);
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::vector<std::uint8_t> img = read_all(images_path);
  std::vector<std::uint8_t> lab = read_all(labels_path);
  if (img.size() < 16 || be32(img.data()) != 0x00000803u)
    throw FormatError("idx: bad image-file magic in " + images_path);
  if (lab.size() < 8 || be32(lab.data()) != 0x00000801u)
    throw FormatError("idx: bad label-file magic in " + labels_path);
  std::uint32_t n = be32(img.data() + 4);
  std::uint32_t rows = be32(img.data() + 8);
  std::uint32_t cols = be32(img.data() + 12);
  std::uint32_t nl = be32(lab.data() + 4);
  if (n != nl)
    throw InconsistentPair("idx: image count " + std::to_string(n) +
                           " != label count " + std::to_string(nl));
  std::size_t need_img = 16 + static_cast<std::size_t>(n) * rows * cols;
  if (img.size() != need_img) throw FormatError("idx: image payload size mismatch");
  if (lab.size() != 8 + static_cast<std::size_t>(n)) throw FormatError("idx: label payload size mismatch");

  Dataset ds;
  ds.x = Tensor({n, 1, rows, cols});
  ds.y.resize(n);
  int max_label = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    ds.y[i] = lab[8 + i];
    max_label = std::max(max_label, ds.y[i]);
    for (std::uint32_t p = 0; p < rows * cols; ++p)
      ds.x.data[static_cast<std::size_t>(i) * rows * cols + p] =
          static_cast<float>(img[16 + static_cast<std::size_t>(i) * rows * cols + p]) / 255.0f;
  }
  ds.classes = static_cast<std::size_t>(max_label) + 1;
  return ds;
}

std::vector<std::vector<std::size_t>> dirichlet_partition(const std::vector<int>& labels,
                                                          std::size_t n_clients,
                                                          double alpha,
                                                          std::uint64_t seed,
                                                          int max_retries) {
  if (n_clients < 1) throw std::invalid_argument("partition: need at least 1 client");
  if (alpha <= 0) throw std::invalid_argument("partition: alpha must be positive");
  if (labels.empty()) throw std::invalid_argument("partition: empty dataset");

  int max_label = 0;
  for (int l : labels) max_label = std::max(max_label, l);
  const std::size_t classes = static_cast<std::size_t>(max_label) + 1;

  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < labels.size(); ++i)
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);

  RngStream rng(seed);
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    std::vector<std::vector<std::size_t>> shards(n_clients);
    for (std::size_t c = 0; c < classes; ++c) {
      const std::vector<std::size_t>& rows = by_class[c];
      if (rows.empty()) continue;
      // Dirichlet via normalized gammas.
      std::vector<double> wgt(n_clients);
      double total = 0.0;
      for (std::size_t j = 0; j < n_clients; ++j) {
        wgt[j] = rng.gamma(alpha);
        total += wgt[j];
      }
      // Largest-remainder rounding of quotas to integer counts.
      std::vector<std::size_t> cnt(n_clients, 0);
      std::vector<std::pair<double, std::size_t>> rem;
      std::size_t assigned = 0;
      for (std::size_t j = 0; j < n_clients; ++j) {
        double quota = static_cast<double>(rows.size()) * wgt[j] / total;
        cnt[j] = static_cast<std::size_t>(quota);
        assigned += cnt[j];
        rem.emplace_back(quota - static_cast<double>(cnt[j]), j);
      }
      std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
      });
      for (std::size_t r = 0; assigned < rows.size(); ++r, ++assigned) ++cnt[rem[r].second];

      // Seeded shuffle, then carve the class rows by the counts.
      std::vector<std::size_t> shuffled = rows;
      for (std::size_t i = shuffled.size(); i > 1; --i)
        std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
      std::size_t at = 0;
      for (std::size_t j = 0; j < n_clients; ++j) {
        for (std::size_t t = 0; t < cnt[j]; ++t) shards[j].push_back(shuffled[at++]);
      }
    }
    bool ok = true;
    for (const auto& s : shards)
      if (s.empty()) ok = false;
    if (ok) {
      for (auto& s : shards) std::sort(s.begin(), s.end());
      return shards;
    }
  }
  throw PartitionFailure("partition: a client shard stayed empty after retries");
}

std::vector<std::size_t> apply_poison(Tensor& x, std::vector<int>& y, double p,
                                      int target, std::uint64_t seed,
                                      float trigger_value, int patch) {
  if (p < 0 || p > 1) throw std::invalid_argument("poison: p must be in [0,1]");
  if (x.rank() != 4 || x.shape[0] != y.size())
    throw std::invalid_argument("poison: malformed shard");
  const std::size_t n = y.size();
  const std::size_t m = static_cast<std::size_t>(p * static_cast<double>(n));  // floor
  RngStream rng(seed);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  std::vector<std::size_t> chosen(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(m));
  std::sort(chosen.begin(), chosen.end());

  const std::size_t ph = std::min<std::size_t>(static_cast<std::size_t>(patch), x.shape[2]);
  const std::size_t pw = std::min<std::size_t>(static_cast<std::size_t>(patch), x.shape[3]);
  for (std::size_t idx : chosen) {
    for (std::size_t c = 0; c < x.shape[1]; ++c)
      for (std::size_t i = 0; i < ph; ++i)
        for (std::size_t j = 0; j < pw; ++j) x.at4(idx, c, i, j) = trigger_value;
    y[idx] = target;
  }
  return chosen;
}

}  // namespace osplit
