#pragma once

#include "prosim/types.hpp"

namespace prosim {

// Quadratic Lyapunov data for the double-integrator output system
//   xi = (y, ydot),  xidot = F xi + G nu,
// with P from the continuous-time algebraic Riccati equation and the
// epsilon-scaled form used by the rate constraint.
struct CLFData {
  int m = 0;  // output count
  Mat Q;
  Mat P;      // 2m x 2m, symmetric positive definite
  Mat P_eps;
  double eps = 0.25;
  double gamma = 0;  // lambda_min(Q) / lambda_max(P)

  double c1() const;  // lambda_min(P)
  double c2() const;  // lambda_max(P)
};

// Solves F'P + PF - PGG'P + Q = 0 for the double-integrator (F, G).
// Stable-invariant-subspace method with Newton refinement; residual is
// polished below 1e-10 or a SolverError reports it.
Mat solve_care(int m, const Mat& Q);

CLFData make_clf(int m, const Mat& Q, double eps);

double clf_value(const CLFData& clf, RefVec xi);

struct CLFDerivatives {
  double LFV = 0;
  Eigen::RowVectorXd LGV;  // 1 x m
};

// Vdot = LFV + LGV * nu for the auxiliary input nu = yddot.
CLFDerivatives clf_derivative_terms(const CLFData& clf, RefVec xi);

}  // namespace prosim
