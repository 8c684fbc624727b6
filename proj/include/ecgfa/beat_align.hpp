#pragma once

#include <vector>

#include <Eigen/Dense>

#include "ecgfa/ecg_sim.hpp"

namespace ecgfa {

// Fiducial sample indices for each beat of a trace. Only R is populated by
// detect_r_peaks; the other sequences are left empty.
struct Delineation {
  std::vector<Eigen::Index> r;
  std::vector<Eigen::Index> p, q, s, t;

  [[nodiscard]] Eigen::Index num_beats() const { return static_cast<Eigen::Index>(r.size()); }
  void validate(Eigen::Index trace_length) const;
};

// Local maxima above median + 0.5 * (max - median), at least min_rr apart.
// Within a refractory window the larger peak wins.
Delineation detect_r_peaks(const RawTrace& trace, double min_rr_s);

// Rows are windows [r_b - r_offset, r_b - r_offset + d); beats whose window
// leaves the trace are dropped.
Eigen::MatrixXd align_beats(const RawTrace& trace, const Delineation& delineation, Eigen::Index d,
                            Eigen::Index r_offset);

}  // namespace ecgfa
