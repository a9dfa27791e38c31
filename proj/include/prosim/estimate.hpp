#pragma once

#include <deque>
#include <optional>

#include "prosim/types.hpp"

namespace prosim {

// Rolling state of the interaction-force estimator: the previous sample
// needed for the finite-difference acceleration and a window of residual
// samples. Owned by exactly one controller.
struct EstimatorState {
  int window = 1;  // N
  bool has_prev = false;
  double prev_t = 0;
  Vec prev_q;
  Vec prev_qdot;
  Vec prev_u;
  Vec prev_lambda;
  std::deque<Vec> ring;  // newest at the back

  void reset() {
    has_prev = false;
    ring.clear();
  }
};

// (qdot_k - qdot_km1) / (t_k - t_km1).
Vec accel_estimate(RefVec qdot_k, RefVec qdot_km1, double t_k, double t_km1);

// Joint-space residual F = D qdd_est + H - B u - Jh' lambda, evaluated with
// the terms of the previous sample. Multiplications only; the inertia
// matrix is never inverted here.
Vec residual_dynamics(const Mat& D, const Vec& H, const Mat& B, const Mat& Jh,
                      RefVec qdd_est, RefVec u_km1, RefVec lambda_km1);

// Mean of the stored residuals (all of them when fewer than N exist);
// empty when no sample has been recorded yet.
std::optional<Vec> average_residual(const EstimatorState& state);

void push_residual(EstimatorState& state, const Vec& residual);

}  // namespace prosim
