#pragma once

#include <map>
#include <string>
#include <vector>

#include "prosim/sim.hpp"

namespace prosim {

struct VariantMetrics {
  std::string variant;
  WalkStatus status = WalkStatus::Ok;
  int steps_completed = 0;
  double tracking_rms = 0;   // stance ticks, rad
  double tracking_max = 0;   // max |y| over stance ticks
  double force_rms_err_pct = -1;  // summed projected force, estimate vs true
  std::vector<double> force_rms_err_pct_joint;
  double clf_violation_fraction = 0;  // beyond delta at the optimizer
  double clf_max_excess = 0;
  double torque_energy = 0;  // integral of |u_s|^2 dt over the run
};

struct ExperimentReport {
  std::vector<VariantMetrics> variants;
  std::uint64_t seed = 0;
  int n_steps = 0;

  std::string to_json() const;
};

// Metrics over prosthesis-stance samples of one run. The force comparison
// follows the summed-projection convention: true weld wrench plus true
// contact wrench, both mapped to subsystem joint space, against the
// controller's force term plus its own contact wrench decision.
VariantMetrics compute_metrics(const RobotModel& model, const SimLog& log,
                               WalkStatus status, int steps_completed,
                               const std::string& variant);

// Paired comparison across controller variants with identical initial
// conditions and seeds.
struct ComparisonResult {
  ExperimentReport report;
  std::map<std::string, SimLog> logs;
  std::map<std::string, WalkResult> runs;
};

ComparisonResult run_comparison(const WalkSetup& base, const Scenario& scenario,
                                const std::vector<Variant>& variants);

struct ClfReportRow {
  double t = 0;
  double vdot_numeric = 0;  // finite difference of V across ticks
  double lhs_at_opt = 0;    // LFV + LGV (Jydot qd + Jy qdd*)
  double rhs_bound = 0;     // -(gamma/eps) V + delta
  double u_norm = 0;
  bool smooth = false;  // not adjacent to a domain switch
};

struct ClfReport {
  std::vector<ClfReportRow> rows;
  double violation_fraction = 0;  // lhs_at_opt > rhs + tol
  double max_excess = 0;
  // Fraction of large-slack ticks whose |u| is below the median (the
  // natural-dynamics probe; reported, not asserted).
  double small_torque_fraction = 0;
};

ClfReport clf_report(const SimLog& log, double tol = 1e-8);

}  // namespace prosim
