#include "bodytrack/evaluate.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>

#include "bodytrack/posealign.hpp"

namespace bodytrack {

namespace {

double model_residual(const RigidTransform& x, const RigidTransform& y,
                      const std::vector<std::optional<RigidTransform>>& est,
                      const std::vector<RigidTransform>& gt,
                      std::size_t begin, std::size_t end) {
  double sum = 0.0;
  for (std::size_t i = begin; i < end && i < est.size(); ++i) {
    if (!est[i]) continue;
    const Matrix4 diff = matrix_of(compose(x, compose(*est[i], y))) -
                         matrix_of(gt[i]);
    sum += diff.squaredNorm();
  }
  return sum;
}

// Initializes the world-side transform from relative motions, which cancel
// the body-side factor: gt_i gt_j^-1 X = X est_i est_j^-1. Solved as a
// homogeneous linear system in the 16 entries of X. Starting the
// alternation blind (Y = identity) diverges when the true X is large.
RigidTransform initial_world_transform(
    const std::vector<std::size_t>& fit,
    const std::vector<std::optional<RigidTransform>>& est,
    const std::vector<RigidTransform>& gt) {
  if (fit.size() < 3) return RigidTransform::identity();
  Eigen::Matrix<double, 16, 16> normal = Eigen::Matrix<double, 16, 16>::Zero();
  for (std::size_t j = 1; j < fit.size(); ++j) {
    const Matrix4 m = matrix_of(compose(*est[fit[j - 1]],
                                        inverse(*est[fit[j]])));
    const Matrix4 n = matrix_of(compose(gt[fit[j - 1]],
                                        inverse(gt[fit[j]])));
    // vec(N X - X M) = (I (x) N - M^T (x) I) vec(X), column-major vec.
    Eigen::Matrix<double, 16, 16> a = Eigen::Matrix<double, 16, 16>::Zero();
    for (int col = 0; col < 4; ++col) {
      a.block<4, 4>(4 * col, 4 * col) += n;
      for (int k = 0; k < 4; ++k) {
        a.block<4, 4>(4 * col, 4 * k) -=
            m(k, col) * Matrix4::Identity();
      }
    }
    normal += a.transpose() * a;
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 16, 16>> eig(
      normal);
  // Ambiguous nullspace (static or rotation-poor trajectories): fall back.
  if (eig.eigenvalues()(1) < 1e-9 * std::max(eig.eigenvalues()(15), 1.0)) {
    return RigidTransform::identity();
  }
  Eigen::Matrix<double, 16, 1> v = eig.eigenvectors().col(0);
  Matrix4 x_raw;
  for (int col = 0; col < 4; ++col) x_raw.col(col) = v.segment<4>(4 * col);
  if (std::abs(x_raw(3, 3)) < 1e-9) return RigidTransform::identity();
  x_raw /= x_raw(3, 3);
  try {
    return project_to_se3(x_raw);
  } catch (const DegenerateRotation&) {
    return RigidTransform::identity();
  }
}

}  // namespace

Calibration split_half_calibrate(
    const std::vector<std::optional<RigidTransform>>& est,
    const std::vector<RigidTransform>& gt) {
  if (est.size() != gt.size()) {
    throw LengthMismatch("split_half_calibrate: est and gt differ in length");
  }
  const std::size_t half = est.size() / 2;
  std::vector<std::size_t> fit;
  for (std::size_t i = 0; i < half; ++i) {
    if (est[i]) fit.push_back(i);
  }
  if (fit.size() < 4) {
    throw TooFewPoses("split_half_calibrate: need >= 4 poses in the first half");
  }

  const auto solve_y_for = [&](const RigidTransform& x) {
    std::vector<PosePair> y_pairs;
    for (std::size_t i : fit) {
      y_pairs.push_back({compose(x, *est[i]), gt[i], static_cast<int>(i)});
    }
    return solve_pose_pairs(y_pairs);
  };
  const auto solve_x_for = [&](const RigidTransform& y) {
    // Left-factor solve of X (est_i Y) = gt_i, so both steps descend the
    // same Frobenius objective.
    std::vector<PosePair> x_pairs;
    for (std::size_t i : fit) {
      x_pairs.push_back({compose(*est[i], y), gt[i], static_cast<int>(i)});
    }
    return solve_pose_pairs_left(x_pairs);
  };

  // The relative-motion initializer is unreliable when consecutive motions
  // sit at the noise scale, so candidates compete on the fit residual.
  Calibration cal;
  double residual = std::numeric_limits<double>::infinity();
  for (const RigidTransform& x0 :
       {initial_world_transform(fit, est, gt), RigidTransform::identity()}) {
    try {
      Calibration candidate;
      candidate.x = x0;
      candidate.y = solve_y_for(x0);
      const double r = model_residual(candidate.x, candidate.y, est, gt, 0,
                                      half);
      if (r < residual) {
        residual = r;
        cal = candidate;
      }
    } catch (const DegenerateRotation&) {
      // A hopeless candidate start; the identity fallback still runs.
    }
  }
  if (!std::isfinite(residual)) {
    throw SingularNormalMatrix("split_half_calibrate: no usable initialization");
  }

  for (int round = 0; round < 50; ++round) {
    Calibration next = cal;
    try {
      next.x = solve_x_for(cal.y);
      next.y = solve_y_for(next.x);
    } catch (const DegenerateRotation&) {
      break;  // keep the best iterate
    }
    const double next_residual =
        model_residual(next.x, next.y, est, gt, 0, half);
    cal.rounds = round + 1;
    // The SE(3) projection inside each step can push the pair uphill;
    // keep the best iterate instead of ascending.
    if (next_residual > residual) break;
    next.rounds = cal.rounds;
    cal = next;
    const bool settled = residual - next_residual < 1e-10;
    residual = next_residual;
    if (settled) break;
  }
  cal.residual = residual;
  return cal;
}

double calibration_residual(
    const Calibration& cal,
    const std::vector<std::optional<RigidTransform>>& est,
    const std::vector<RigidTransform>& gt, std::size_t begin,
    std::size_t end) {
  return model_residual(cal.x, cal.y, est, gt, begin, end);
}

double median_lower(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  return values[(values.size() - 1) / 2];
}

SequenceEval evaluate_sequence(
    const std::vector<std::optional<RigidTransform>>& est,
    const std::vector<RigidTransform>& gt, const Calibration& cal,
    const std::vector<std::int64_t>& frame_total_us) {
  if (est.size() != gt.size() ||
      (!frame_total_us.empty() && frame_total_us.size() != est.size())) {
    throw LengthMismatch("evaluate_sequence: input lists differ in length");
  }
  SequenceEval eval;
  const std::size_t half = est.size() / 2;
  for (std::size_t i = half; i < est.size(); ++i) {
    if (!est[i]) {
      eval.skipped_frames += 1;
      continue;
    }
    const RigidTransform mapped = compose(cal.x, compose(*est[i], cal.y));
    const RigidTransform error = compose(inverse(mapped), gt[i]);
    eval.rotational_errors_deg.push_back(rotation_angle(error.rotation) *
                                         180.0 / M_PI);
    eval.translational_errors_mm.push_back(error.translation.norm() * 1000.0);
    eval.evaluated_frames += 1;
  }

  // Throughput over consecutive pose estimations (whole sequence).
  if (!frame_total_us.empty()) {
    std::int64_t accumulated = 0;
    bool have_previous = false;
    for (std::size_t i = 0; i < est.size(); ++i) {
      accumulated += frame_total_us[i];
      if (!est[i]) continue;
      if (have_previous && accumulated > 0) {
        eval.frame_fps.push_back(1e6 / static_cast<double>(accumulated));
      }
      have_previous = true;
      accumulated = 0;
    }
  }

  const auto mean = [](const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  eval.mre_deg = mean(eval.rotational_errors_deg);
  eval.mte_mm = mean(eval.translational_errors_mm);
  eval.median_re_deg = median_lower(eval.rotational_errors_deg);
  eval.median_te_mm = median_lower(eval.translational_errors_mm);
  eval.mean_fps = mean(eval.frame_fps);
  const int total = eval.evaluated_frames + eval.skipped_frames;
  eval.coverage = total > 0
                      ? static_cast<double>(eval.evaluated_frames) / total
                      : 1.0;
  return eval;
}

SequenceEval aggregate(const std::vector<SequenceEval>& evals) {
  if (evals.empty()) throw EmptyInput("aggregate: no sequence evaluations");
  SequenceEval pooled;
  for (const auto& e : evals) {
    pooled.rotational_errors_deg.insert(pooled.rotational_errors_deg.end(),
                                        e.rotational_errors_deg.begin(),
                                        e.rotational_errors_deg.end());
    pooled.translational_errors_mm.insert(pooled.translational_errors_mm.end(),
                                          e.translational_errors_mm.begin(),
                                          e.translational_errors_mm.end());
    pooled.frame_fps.insert(pooled.frame_fps.end(), e.frame_fps.begin(),
                            e.frame_fps.end());
    pooled.evaluated_frames += e.evaluated_frames;
    pooled.skipped_frames += e.skipped_frames;
  }
  const auto mean = [](const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  pooled.mre_deg = mean(pooled.rotational_errors_deg);
  pooled.mte_mm = mean(pooled.translational_errors_mm);
  pooled.median_re_deg = median_lower(pooled.rotational_errors_deg);
  pooled.median_te_mm = median_lower(pooled.translational_errors_mm);
  pooled.mean_fps = mean(pooled.frame_fps);
  const int total = pooled.evaluated_frames + pooled.skipped_frames;
  pooled.coverage =
      total > 0 ? static_cast<double>(pooled.evaluated_frames) / total : 1.0;
  return pooled;
}

double measure_fps(const std::vector<StageTimings>& timings) {
  if (timings.size() < 2) {
    throw TooFewFrames("measure_fps: need at least 2 frames");
  }
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 1; i < timings.size(); ++i) {
    if (timings[i].total_us <= 0) continue;
    sum += 1e6 / static_cast<double>(timings[i].total_us);
    n += 1;
  }
  return n > 0 ? sum / n : 0.0;
}

}  // namespace bodytrack
