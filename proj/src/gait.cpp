#include "prosim/gait.hpp"

#include <algorithm>
#include <cmath>

#include "prosim/model.hpp"

namespace prosim {

BezierEval bezier(RefVec alpha_row, double tau) {
  const int b = int(alpha_row.size()) - 1;
  if (b < 1) throw ConfigError("bezier degree must be >= 1");
  const double s = std::clamp(tau, 0.0, 1.0);

  // Bernstein basis of the row and of its difference rows.
  auto eval = [s](RefVec coeff) {
    const int d = int(coeff.size()) - 1;
    // de Boor style accumulation of sum_i coeff_i C(d,i) s^i (1-s)^(d-i).
    double binom = 1.0;
    double acc = 0.0;
    double spow = 1.0;
    std::vector<double> terms(d + 1);
    for (int i = 0; i <= d; ++i) {
      terms[i] = coeff[i] * binom * spow;
      binom *= double(d - i) / double(i + 1);
      spow *= s;
    }
    double mpow = 1.0;
    for (int i = d; i >= 0; --i) {
      acc += terms[i] * mpow;
      mpow *= (1.0 - s);
    }
    return acc;
  };

  BezierEval out;
  out.value = eval(alpha_row);
  Vec d1(b);
  for (int i = 0; i < b; ++i) d1[i] = double(b) * (alpha_row[i + 1] - alpha_row[i]);
  out.d1 = eval(d1);
  if (b >= 2) {
    Vec d2(b - 1);
    for (int i = 0; i + 1 < b; ++i)
      d2[i] = double(b - 1) * (d1[i + 1] - d1[i]);
    out.d2 = eval(d2);
  }
  return out;
}

Vec phase_coefficients(const RobotModel& model, int foot_body) {
  if (foot_body < 0 || foot_body >= model.nlinks())
    throw ModelError("invalid foot body");
  Vec c = Vec::Zero(model.nq);
  // Chain from foot to root; link l's length loads every rotational
  // coordinate at or above l.
  int b = foot_body;
  while (b >= 0) {
    const Link& l = model.links[b];
    const double L = l.params.length;
    int a = b;
    while (a >= 0) {
      const Link& al = model.links[a];
      const int k = model.q_index[a];
      const int coord = (al.parent < 0) ? k + 2 : k;
      c[coord] -= L;
      a = al.parent;
    }
    b = l.parent;
  }
  return c;
}

Vec phase_coefficients_domain(const RobotModel& model, int foot_body,
                              const std::string& domain) {
  Vec c = phase_coefficients(model, foot_body);
  if (domain == "pns") {
    // Swing progression: forward travel of the subsystem base since the
    // step start (the stance-chain expression is not monotone while the
    // chain is airborne). Callers anchor the offset at the impact.
    int root = foot_body;
    while (model.links[root].parent >= 0) root = model.links[root].parent;
    c.setZero();
    c[model.q_index[root]] = 1.0;
  }
  return c;
}

Phase phase_variable(RefVec qbar, RefVec qbardot, const PhaseSpec& spec) {
  if (spec.c.size() != qbar.size())
    throw ConfigError("phase coefficient dimension mismatch");
  const double span = spec.theta_minus - spec.theta_plus;
  if (span == 0.0) throw ConfigError("phase calibration endpoints coincide");
  const double p = spec.c.dot(qbar) - spec.offset;
  Phase out;
  out.tau = std::clamp((p - spec.theta_plus) / span, 0.0, 1.0);
  out.taudot = spec.c.dot(qbardot) / span;  // kept unclamped
  return out;
}

OutputBundle outputs(const OutputSpec& spec, const GaitParams& gait,
                     RefVec qbar, RefVec qbardot) {
  const int m = int(spec.actual_coords.size());
  if (gait.alpha.rows() < m) throw ConfigError("gait rows < output count");
  const int n = int(qbar.size());

  PhaseSpec ps = spec.phase;
  ps.theta_plus = gait.theta_plus;
  ps.theta_minus = gait.theta_minus;
  const Phase ph = phase_variable(qbar, qbardot, ps);
  const double span = gait.theta_minus - gait.theta_plus;
  const Vec dtau_dq = spec.phase.c / span;  // unclamped gradient

  OutputBundle out;
  out.tau = ph.tau;
  out.taudot = ph.taudot;
  out.y.resize(m);
  out.ydot.resize(m);
  out.y_des.resize(m);
  out.yd_des.resize(m);
  out.Jy.setZero(m, n);
  out.Jydot.setZero(m, n);
  for (int i = 0; i < m; ++i) {
    const int k = spec.actual_coords[i];
    const BezierEval bz = bezier(gait.alpha.row(i), ph.tau);
    out.y_des[i] = bz.value;
    out.yd_des[i] = bz.d1 * ph.taudot;
    out.y[i] = qbar[k] - bz.value;
    out.ydot[i] = qbardot[k] - bz.d1 * ph.taudot;
    out.Jy.row(i) = -bz.d1 * dtau_dq.transpose();
    out.Jy(i, k) += 1.0;
    out.Jydot.row(i) = -(bz.d2 * ph.taudot) * dtau_dq.transpose();
  }
  // Outputs must stay independent for the decoupling step downstream.
  if (m > 0) {
    Eigen::FullPivLU<Mat> lu(out.Jy * out.Jy.transpose());
    lu.setThreshold(1e-10);
    if (lu.rank() < m)
      throw ConfigError("output Jacobian is rank deficient");
  }
  return out;
}

}  // namespace prosim
