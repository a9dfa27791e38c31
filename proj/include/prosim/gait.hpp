#pragma once

#include <string>
#include <vector>

#include "prosim/types.hpp"

namespace prosim {

struct RobotModel;

// Desired-trajectory parameters for one walking domain: one Bezier
// coefficient row per output over the phase variable, plus the phase
// calibration endpoints.
struct GaitParams {
  std::string domain;  // "ps" or "pns"
  Mat alpha;           // outputs x (degree + 1)
  double theta_plus = 0;   // subsystem progression at tau = 0
  double theta_minus = 1;  // and at tau = 1
  double taudot_nominal = 1.0;  // phase rate at tau = 0 on the nominal gait
  // Human-side progression calibration (its stance-leg chain); equals the
  // subsystem calibration in prosthesis stance, differs in swing where the
  // subsystem can only see its own coordinates.
  double human_theta_plus = 0;
  double human_theta_minus = 1;
  double human_taudot_nominal = 1.0;
  std::vector<std::string> output_names;

  int degree() const { return int(alpha.cols()) - 1; }
};

struct BezierEval {
  double value = 0;
  double d1 = 0;  // d/dtau
  double d2 = 0;
};

// Bernstein-basis evaluation with first and second tau-derivatives.
BezierEval bezier(RefVec alpha_row, double tau);

// Linearized progression coordinate p = c' q: every rotational coordinate
// on the chain from the given root to the distal point of `foot_body`
// gets the (negated) summed lengths of the links hanging below it, so p
// grows as the hip advances over the stance foot.
Vec phase_coefficients(const RobotModel& model, int foot_body);

// Per-domain progression: the stance chain linearization in stance, the
// thigh-pitch sweep during swing (the chain is airborne there and the
// full expression need not be monotone).
Vec phase_coefficients_domain(const RobotModel& model, int foot_body,
                              const std::string& domain);

struct PhaseSpec {
  Vec c;  // progression coefficients, one per coordinate
  double theta_plus = 0;
  double theta_minus = 1;
  // Subtracted from c'q before calibration; swing-domain progressions are
  // anchored at the step start (captured at the impact) so the coordinate
  // stays translation-invariant across steps.
  double offset = 0;
};

struct Phase {
  double tau = 0;     // clamped to [0, 1]
  double taudot = 0;  // unclamped rate, by the chain rule
};

Phase phase_variable(RefVec qbar, RefVec qbardot, const PhaseSpec& spec);

// Output errors and their configuration derivatives for a set of
// position-modulating outputs: y = q[sel] - y_d(tau(q)).
struct OutputSpec {
  std::vector<int> actual_coords;  // coordinate index per output
  PhaseSpec phase;
};

struct OutputBundle {
  Vec y;
  Vec ydot;
  Mat Jy;      // outputs x n
  Mat Jydot;   // same shape
  Vec y_des;   // desired values at tau (diagnostics)
  Vec yd_des;
  double tau = 0;
  double taudot = 0;
};

OutputBundle outputs(const OutputSpec& spec, const GaitParams& gait,
                     RefVec qbar, RefVec qbardot);

}  // namespace prosim
