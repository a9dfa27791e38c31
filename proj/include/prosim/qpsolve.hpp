#pragma once

#include <iosfwd>
#include <vector>

#include "prosim/types.hpp"

namespace prosim {

// Decision-vector layout for the inverse-dynamics QPs:
// [qdd (nq) | u (nu) | lambda (nlam) | delta (0 or 1)].
struct VarLayout {
  int nq = 0;
  int nu = 0;
  int nlam = 0;
  bool has_delta = false;

  int qdd_offset() const { return 0; }
  int u_offset() const { return nq; }
  int lambda_offset() const { return nq + nu; }
  int delta_offset() const { return nq + nu + nlam; }
  int size() const { return nq + nu + nlam + (has_delta ? 1 : 0); }
};

// min 1/2 x'H x + g'x  s.t.  A_eq x = b_eq,  A_in x <= b_in.
struct QPProblem {
  Mat hess;
  Vec grad;
  Mat A_eq;
  Vec b_eq;
  Mat A_in;
  Vec b_in;
  VarLayout layout;

  int nvars() const { return int(hess.rows()); }
  double objective(RefVec x) const;
  void validate() const;
};

enum class QPStatus { Optimal, Infeasible, MaxIterations, IllConditioned };

const char* to_string(QPStatus s);

struct QPResult {
  Vec x;
  Vec dual_eq;  // multipliers of A_eq x = b_eq
  Vec dual_in;  // multipliers of A_in x <= b_in, nonnegative
  QPStatus status = QPStatus::IllConditioned;
  int iterations = 0;
  // KKT residuals at x (stationarity, primal feasibility, complementarity).
  double kkt_stationarity = 0;
  double kkt_primal = 0;
  double kkt_complementarity = 0;
  std::vector<int> active_set;  // active inequality indices, sorted

  bool ok() const { return status == QPStatus::Optimal; }
};

struct QPOptions {
  int max_iterations = 500;
  double tol = 1e-10;
  // Active-set hint from a previous solve of the same problem; verified
  // before use, so a stale hint only costs one extra check.
  std::vector<int> warm_active;
};

// Dual active-set method for strictly convex problems. Deterministic:
// the most violated constraint enters (smallest index on ties) and the
// smallest-index blocking constraint leaves.
QPResult solve_qp(const QPProblem& p, const QPOptions& opt = {});

// Plain-text dump (matrix-market array blocks per section) for offline
// reproduction of a problem instance.
void dump_qp(const QPProblem& p, std::ostream& os);
QPProblem load_qp_dump(std::istream& is);

}  // namespace prosim
