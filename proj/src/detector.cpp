#include "osplit/detector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace osplit {

namespace {
double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}
}  // namespace

DetectionReport mad_z_detect(const std::vector<std::vector<double>>& client_vecs,
                             const std::vector<bool>* ground_truth,
                             double threshold) {
  const std::size_t n = client_vecs.size();
  if (n < 3)
    throw std::invalid_argument("mad_z_detect: need at least 3 clients, got " +
                                std::to_string(n));
  const std::size_t dim = client_vecs[0].size();
  for (const auto& v : client_vecs)
    if (v.size() != dim)
      throw std::invalid_argument("mad_z_detect: client vectors differ in length");
  if (ground_truth && ground_truth->size() != n)
    throw std::invalid_argument("mad_z_detect: ground truth length mismatch");

  std::vector<double> mean(dim, 0.0);
  for (const auto& v : client_vecs)
    for (std::size_t j = 0; j < dim; ++j) mean[j] += v[j];
  for (double& m : mean) m /= static_cast<double>(n);

  double mean_norm = 0.0;
  for (double m : mean) mean_norm += m * m;
  mean_norm = std::sqrt(mean_norm);

  DetectionReport rep;
  rep.scores.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double dot = 0.0, nrm = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      dot += client_vecs[i][j] * mean[j];
      nrm += client_vecs[i][j] * client_vecs[i][j];
    }
    nrm = std::sqrt(nrm);
    double den = nrm * mean_norm;
    rep.scores[i] = den > 0.0 ? dot / den : 0.0;
  }

  const double med = median_of(rep.scores);
  std::vector<double> dev(n);
  for (std::size_t i = 0; i < n; ++i) dev[i] = std::abs(rep.scores[i] - med);
  const double mad = median_of(dev);
  const double scale = 1.4826 * std::max(mad, 1e-12);

  rep.zscores.resize(n);
  rep.flagged.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    rep.zscores[i] = (rep.scores[i] - med) / scale;
    rep.flagged[i] = std::abs(rep.zscores[i]) > threshold;
  }

  if (ground_truth) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (rep.flagged[i] && (*ground_truth)[i]) ++tp;
      else if (rep.flagged[i] && !(*ground_truth)[i]) ++fp;
      else if (!rep.flagged[i] && (*ground_truth)[i]) ++fn;
    }
    const std::size_t den = 2 * tp + fp + fn;
    rep.f1 = den == 0 ? 1.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(den);
    rep.f1_defined = true;
  }
  return rep;
}

}  // namespace osplit
