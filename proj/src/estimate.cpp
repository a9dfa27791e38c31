#include "prosim/estimate.hpp"

namespace prosim {

Vec accel_estimate(RefVec qdot_k, RefVec qdot_km1, double t_k, double t_km1) {
  if (qdot_k.size() != qdot_km1.size())
    throw ModelError("accel_estimate: velocity dimension mismatch");
  const double dt = t_k - t_km1;
  if (!(dt > 0)) throw TimingError("accel_estimate: nonpositive time step");
  return (qdot_k - qdot_km1) / dt;
}

Vec residual_dynamics(const Mat& D, const Vec& H, const Mat& B, const Mat& Jh,
                      RefVec qdd_est, RefVec u_km1, RefVec lambda_km1) {
  const int n = int(D.rows());
  if (H.size() != n || qdd_est.size() != n)
    throw ModelError("residual_dynamics: dimension mismatch");
  if (B.cols() != u_km1.size() || Jh.rows() != lambda_km1.size())
    throw ModelError("residual_dynamics: input dimension mismatch");
  Vec f = D * qdd_est + H - B * u_km1;
  if (Jh.rows() > 0) f -= Jh.transpose() * lambda_km1;
  return f;
}

std::optional<Vec> average_residual(const EstimatorState& state) {
  if (state.ring.empty()) return std::nullopt;
  Vec avg = Vec::Zero(state.ring.front().size());
  for (const Vec& f : state.ring) avg += f;
  return avg / double(state.ring.size());
}

void push_residual(EstimatorState& state, const Vec& residual) {
  state.ring.push_back(residual);
  while (int(state.ring.size()) > std::max(1, state.window))
    state.ring.pop_front();
}

}  // namespace prosim
