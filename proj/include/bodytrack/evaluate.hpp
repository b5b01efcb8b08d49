// Ground-truth evaluation: split-half calibration between the tracker's
// frames and an external ground-truth stream, MRE/MTE statistics, and
// throughput measurement.
#pragma once

#include <optional>
#include <vector>

#include "bodytrack/errors.hpp"
#include "bodytrack/pipeline.hpp"
#include "bodytrack/se3.hpp"

namespace bodytrack {

struct Calibration {
  RigidTransform x;        // world-side transform
  RigidTransform y;        // body-side transform
  double residual = 0.0;   // Frobenius residual over the fit poses
  int rounds = 0;
};

struct SequenceEval {
  std::vector<double> rotational_errors_deg;   // per evaluated frame
  std::vector<double> translational_errors_mm;
  std::vector<double> frame_fps;               // per pose estimation
  double mre_deg = 0.0;
  double mte_mm = 0.0;
  double median_re_deg = 0.0;
  double median_te_mm = 0.0;
  double mean_fps = 0.0;
  int evaluated_frames = 0;  // second-half frames with a pose
  int skipped_frames = 0;    // second-half frames without one
  double coverage = 1.0;
};

// Fits gt_i ~ X * est_i * Y over the first half of the sequence (frames
// without an estimate are skipped) by alternating least squares, each step
// reusing the pose-pair solver; stops when the Frobenius residual improves
// by less than 1e-10 or after 50 rounds. Throws TooFewPoses when fewer than
// 4 usable poses exist in the first half; LengthMismatch on ragged input.
Calibration split_half_calibrate(
    const std::vector<std::optional<RigidTransform>>& est,
    const std::vector<RigidTransform>& gt);

// Frobenius residual of the model over the given (est, gt) pairs.
double calibration_residual(
    const Calibration& cal,
    const std::vector<std::optional<RigidTransform>>& est,
    const std::vector<RigidTransform>& gt, std::size_t begin,
    std::size_t end);

// Second-half errors: E_i = (X est_i Y)^-1 gt_i, rotational error in
// degrees, translational in millimeters. frame_total_us, when given, is the
// per-frame processing time used for fps (aligned with est).
SequenceEval evaluate_sequence(
    const std::vector<std::optional<RigidTransform>>& est,
    const std::vector<RigidTransform>& gt, const Calibration& cal,
    const std::vector<std::int64_t>& frame_total_us = {});

// Pools the per-frame error lists and recomputes the aggregates (not the
// mean of means). Throws EmptyInput.
SequenceEval aggregate(const std::vector<SequenceEval>& evals);

// Mean of 1/dt over consecutive pose estimations; dt is each frame's
// processing time. Throws TooFewFrames for fewer than 2 frames.
double measure_fps(const std::vector<StageTimings>& timings);

// Lower-interpolation median of an unsorted list.
double median_lower(std::vector<double> values);

}  // namespace bodytrack
