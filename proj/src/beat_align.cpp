#include "ecgfa/beat_align.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "ecgfa/error.hpp"

namespace ecgfa {

void Delineation::validate(Eigen::Index trace_length) const {
  require(!r.empty(), "Delineation: needs at least one beat");
  for (std::size_t b = 0; b < r.size(); ++b) {
    require(r[b] >= 0 && r[b] < trace_length, "Delineation: R index out of trace bounds");
    if (b > 0) require(r[b - 1] < r[b], "Delineation: R indices must be strictly increasing");
  }
}

Delineation detect_r_peaks(const RawTrace& trace, double min_rr_s) {
  require(trace.fs > 0.0, "detect_r_peaks: fs must be > 0");
  require(min_rr_s > 0.0, "detect_r_peaks: min_rr must be > 0");
  const Eigen::Index n = trace.length();
  require(static_cast<double>(n) >= trace.fs * min_rr_s, "detect_r_peaks: trace shorter than min_rr");
  require(trace.samples.allFinite(), "detect_r_peaks: trace has non-finite samples");

  const Eigen::VectorXd& x = trace.samples;
  std::vector<double> sorted(x.data(), x.data() + n);
  std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
  const double median = sorted[static_cast<std::size_t>(n / 2)];
  const double peak = x.maxCoeff();
  if (!(peak > median)) fail(ErrorCode::kNoBeats, "detect_r_peaks: trace has no deflection above its median");
  const double threshold = median + 0.5 * (peak - median);

  // Candidates: samples above threshold that are >= the left neighbour and
  // > the right neighbour (the first sample of a plateau).
  std::vector<Eigen::Index> candidates;
  for (Eigen::Index k = 0; k < n; ++k) {
    if (x[k] <= threshold) continue;
    const bool left_ok = k == 0 || x[k] >= x[k - 1];
    const bool right_ok = k == n - 1 || x[k] > x[k + 1];
    const bool plateau_start = k == 0 || x[k] != x[k - 1];
    if (left_ok && right_ok && plateau_start) candidates.push_back(k);
  }

  // Largest first; accept if no accepted peak lies within the refractory gap.
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return x[a] > x[b]; });
  const auto gap = static_cast<Eigen::Index>(std::ceil(min_rr_s * trace.fs - 1e-9));
  std::set<Eigen::Index> accepted;
  for (Eigen::Index k : candidates) {
    auto it = accepted.lower_bound(k);
    if (it != accepted.end() && *it - k < gap) continue;
    if (it != accepted.begin() && k - *std::prev(it) < gap) continue;
    accepted.insert(k);
  }
  if (accepted.empty()) fail(ErrorCode::kNoBeats, "detect_r_peaks: no peaks found");

  Delineation out;
  out.r.assign(accepted.begin(), accepted.end());
  return out;
}

Eigen::MatrixXd align_beats(const RawTrace& trace, const Delineation& delineation, Eigen::Index d,
                            Eigen::Index r_offset) {
  require(d >= 1, "align_beats: d must be >= 1");
  require(r_offset >= 0 && r_offset < d, "align_beats: r_offset must lie in [0, d)");
  delineation.validate(trace.length());

  std::vector<Eigen::Index> starts;
  for (Eigen::Index r : delineation.r) {
    const Eigen::Index start = r - r_offset;
    if (start >= 0 && start + d <= trace.length()) starts.push_back(start);
  }
  if (starts.empty()) fail(ErrorCode::kNoBeats, "align_beats: every beat window exceeds the trace bounds");

  Eigen::MatrixXd beats(static_cast<Eigen::Index>(starts.size()), d);
  for (std::size_t b = 0; b < starts.size(); ++b) {
    beats.row(static_cast<Eigen::Index>(b)) = trace.samples.segment(starts[b], d).transpose();
  }
  return beats;
}

}  // namespace ecgfa
