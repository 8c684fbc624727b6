#include <doctest.h>

#include "ecgfa/beat_align.hpp"
#include "ecgfa/ecg_sim.hpp"
#include "test_support.hpp"

using namespace ecgfa;
using ecgfa::test::check_error;

namespace {

RawTrace steady_trace(double seconds) {
  const OdeParams p = OdeParams::mcsharry_defaults();
  return integrate_mcsharry(p, seconds, 500.0, periodic_initial_state(p, 500.0));
}

}  // namespace

TEST_CASE("single beat: one peak at the R sample") {
  const ThetaBeat beat = extract_canonical_beat(OdeParams::mcsharry_defaults(), 500.0, 493);
  const RawTrace trace{500.0, beat.values};
  const Delineation del = detect_r_peaks(trace, 0.5);
  REQUIRE(del.num_beats() == 1);
  CHECK(std::abs(del.r[0] - beat.r_peak_index) <= 1);
}

TEST_CASE("30 s trace at 60 bpm gives 29 to 31 evenly spaced peaks") {
  const RawTrace trace = steady_trace(30.0);
  const Delineation del = detect_r_peaks(trace, 0.5);
  CHECK(del.num_beats() >= 29);
  CHECK(del.num_beats() <= 31);
  for (std::size_t b = 1; b < del.r.size(); ++b) {
    CHECK(del.r[b] > del.r[b - 1]);
    CHECK(std::abs(del.r[b] - del.r[b - 1] - 500) <= 1);
  }
}

TEST_CASE("flat trace has no beats") {
  const RawTrace flat{500.0, Eigen::VectorXd::Zero(2000)};
  check_error(ErrorCode::kNoBeats, [&] { detect_r_peaks(flat, 0.5); });
}

TEST_CASE("refractory window keeps the larger peak") {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(1000);
  x[100] = 1.0;
  x[150] = 2.0;  // within 0.2 s of the first
  x[600] = 1.5;
  const Delineation del = detect_r_peaks(RawTrace{500.0, x}, 0.2);
  REQUIRE(del.num_beats() == 2);
  CHECK(del.r[0] == 150);
  CHECK(del.r[1] == 600);
}

TEST_CASE("align_beats: windows, edge dropping, preconditions") {
  const RawTrace trace = steady_trace(25.0);
  const Delineation del = detect_r_peaks(trace, 0.5);
  const Eigen::MatrixXd beats = align_beats(trace, del, 493, 164);
  CHECK(beats.rows() >= 23);
  CHECK(beats.rows() <= del.num_beats());
  CHECK(beats.cols() == 493);
  for (Eigen::Index b = 0; b < beats.rows(); ++b) {
    Eigen::Index arg = 0;
    beats.row(b).maxCoeff(&arg);
    CHECK(std::abs(arg - 164) <= 2);
  }
  // Zero jitter and steady state: all beats after warm-up match.
  for (Eigen::Index b = 4; b + 1 < beats.rows(); ++b) {
    CHECK(std::sqrt((beats.row(b) - beats.row(b + 1)).squaredNorm() / 493.0) < 1e-5);
  }

  check_error(ErrorCode::kInvalidArgument, [&] { align_beats(trace, del, 100, 100); });

  Delineation edge;
  edge.r = {3};
  check_error(ErrorCode::kNoBeats, [&] { align_beats(trace, edge, 493, 164); });
}

TEST_CASE("a single centred beat aligns onto itself") {
  const ThetaBeat beat = extract_canonical_beat(OdeParams::mcsharry_defaults(), 500.0, 493);
  const RawTrace trace{500.0, beat.values};
  const Delineation del = detect_r_peaks(trace, 0.5);
  const Eigen::MatrixXd rows = align_beats(trace, del, 493, 164);
  REQUIRE(rows.rows() == 1);
  CHECK(rows.row(0).transpose() == beat.values);
  Eigen::Index arg = 0;
  rows.row(0).maxCoeff(&arg);
  CHECK(arg == 164);
}

TEST_CASE("shifting the trace leaves aligned beats unchanged") {
  const RawTrace trace = steady_trace(8.0);
  const Eigen::Index shift = 37;
  RawTrace padded{500.0, Eigen::VectorXd::Zero(trace.length() + shift)};
  padded.samples.tail(trace.length()) = trace.samples;
  padded.samples.head(shift).setConstant(trace.samples[0]);

  const Eigen::MatrixXd a = align_beats(trace, detect_r_peaks(trace, 0.5), 493, 164);
  const Eigen::MatrixXd b = align_beats(padded, detect_r_peaks(padded, 0.5), 493, 164);
  REQUIRE(a.rows() == b.rows());
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("Delineation::validate") {
  Delineation d;
  check_error(ErrorCode::kInvalidArgument, [&] { d.validate(100); });
  d.r = {10, 5};
  check_error(ErrorCode::kInvalidArgument, [&] { d.validate(100); });
  d.r = {10, 200};
  check_error(ErrorCode::kInvalidArgument, [&] { d.validate(100); });
  d.r = {10, 50};
  CHECK_NOTHROW(d.validate(100));
}
