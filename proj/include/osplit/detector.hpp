#pragma once

#include <cstddef>
#include <vector>

namespace osplit {

// Result of the robust update-similarity screen run server-side over the
// per-client cut-layer gradient summaries collected during a round.
struct DetectionReport {
  std::vector<double> scores;   // cosine similarity of each client to the consensus mean
  std::vector<double> zscores;  // robust z-score of each similarity (median / scaled MAD)
  std::vector<bool> flagged;    // |z| > threshold
  double f1 = 0.0;              // against ground truth when provided, else 0
  bool f1_defined = false;
};

// Flags clients whose summary vector points away from the consensus of the
// cohort.  Scores are cosine similarities to the mean vector; each score is
// standardised by the median and the scaled median absolute deviation
// (1.4826 * MAD, floored at 1e-12), and clients with |z| > threshold are
// flagged.  Needs at least three clients for the median/MAD to be meaningful.
//
// When `ground_truth` is given (true = actually malicious), `f1` holds the
// F1 score of the flag set; a run with no positives and no flags counts as a
// perfect 1.0.
DetectionReport mad_z_detect(const std::vector<std::vector<double>>& client_vecs,
                             const std::vector<bool>* ground_truth = nullptr,
                             double threshold = 3.0);

}  // namespace osplit
