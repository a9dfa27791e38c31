#include "prosim/report.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace prosim {

static bool stance_row(const SimLogRow& r) { return r.domain == "ps"; }

VariantMetrics compute_metrics(const RobotModel& model, const SimLog& log,
                               WalkStatus status, int steps_completed,
                               const std::string& variant) {
  VariantMetrics m;
  m.variant = variant;
  m.status = status;
  m.steps_completed = steps_completed;

  const RobotModel& sub = *model.subsystem;
  const int nbar = sub.nq;

  double sum_y2 = 0, sum_u2 = 0;
  int n_stance = 0;
  double prev_t = 0;
  bool have_prev_t = false;
  Vec err2 = Vec::Zero(nbar), sig2 = Vec::Zero(nbar);
  int n_force = 0;

  // Subsystem torque columns within the full torque vector.
  std::vector<int> sub_cols;
  for (int j = 0; j < model.nu(); ++j)
    if (std::find(model.sub_to_full.begin(), model.sub_to_full.end(),
                  model.actuated[j]) != model.sub_to_full.end())
      sub_cols.push_back(j);

  const HolonomicSet& sub_stance = sub.constraint_sets.at("prosthesis_stance");

  for (size_t i = 0; i < log.rows.size(); ++i) {
    const SimLogRow& r = log.rows[i];
    double dt = 0;
    if (have_prev_t) dt = r.t - prev_t;
    prev_t = r.t;
    have_prev_t = true;
    for (int j : sub_cols) sum_u2 += r.u[j] * r.u[j] * dt;

    if (!stance_row(r)) continue;
    ++n_stance;
    sum_y2 += r.y * r.y;
    m.tracking_max = std::max(m.tracking_max, std::abs(r.y));

    const double excess = r.Vdot_lhs - r.Vdot_rhs;
    if (excess > 1e-8) {
      m.clf_violation_fraction += 1;
      m.clf_max_excess = std::max(m.clf_max_excess, excess);
    }

    // Summed projected force: truth from the full-order wrench, estimate
    // from the controller's force term plus its contact wrench decision.
    if (r.lambda.size() >= 3 && int(r.f_term.size()) == nbar) {
      const Vec qbar = model.sub_coords(r.q);
      const Vec qbdot = model.sub_coords(r.qd);
      const Kinematics kin = kinematics(sub, qbar);
      Mat Jf;
      point_jacobian_into(sub, kin, 0, Vec2::Zero(), Jf);
      const auto cj = constraint_jacobians(sub, qbar, qbdot, sub_stance);
      const int nh = int(cj.J.rows());
      const Vec3 Ff_true = r.lambda.head<3>();
      const Vec lam_true = r.lambda.tail(nh);
      Vec truth = Jf.transpose() * Ff_true + cj.J.transpose() * lam_true;
      Vec est = r.f_term;
      if (int(r.lambda_bar.size()) == nh) est += cj.J.transpose() * r.lambda_bar;
      err2 += (truth - est).cwiseAbs2();
      sig2 += truth.cwiseAbs2();
      ++n_force;
    }
  }

  if (n_stance > 0) {
    m.tracking_rms = std::sqrt(sum_y2 / n_stance);
    m.clf_violation_fraction /= double(n_stance);
  }
  m.torque_energy = sum_u2;
  if (n_force > 0) {
    m.force_rms_err_pct_joint.resize(nbar);
    double e_all = 0, s_all = 0;
    for (int j = 0; j < nbar; ++j) {
      e_all += err2[j];
      s_all += sig2[j];
      m.force_rms_err_pct_joint[j] =
          sig2[j] > 0 ? 100.0 * std::sqrt(err2[j] / sig2[j]) : 0.0;
    }
    m.force_rms_err_pct = s_all > 0 ? 100.0 * std::sqrt(e_all / s_all) : 0.0;
  }
  return m;
}

std::string ExperimentReport::to_json() const {
  std::ostringstream os;
  os.precision(17);
  os << "{\n  \"seed\": " << seed << ",\n  \"n_steps\": " << n_steps
     << ",\n  \"variants\": [\n";
  for (size_t i = 0; i < variants.size(); ++i) {
    const VariantMetrics& v = variants[i];
    os << "    {\"variant\": \"" << v.variant << "\", \"status\": \""
       << (v.status == WalkStatus::Ok
               ? "ok"
               : (v.status == WalkStatus::Fell ? "fell" : "failed"))
       << "\", \"steps\": " << v.steps_completed
       << ", \"tracking_rms\": " << v.tracking_rms
       << ", \"tracking_max\": " << v.tracking_max
       << ", \"force_rms_err_pct\": " << v.force_rms_err_pct
       << ", \"clf_violation_fraction\": " << v.clf_violation_fraction
       << ", \"clf_max_excess\": " << v.clf_max_excess
       << ", \"torque_energy\": " << v.torque_energy << "}";
    os << (i + 1 < variants.size() ? ",\n" : "\n");
  }
  os << "  ]\n}\n";
  return os.str();
}

ComparisonResult run_comparison(const WalkSetup& base, const Scenario& scenario,
                                const std::vector<Variant>& variants) {
  ComparisonResult out;
  out.report.seed = scenario.seed;
  out.report.n_steps = scenario.n_steps;
  for (Variant v : variants) {
    WalkSetup setup = base;
    setup.prosthesis.variant = v;
    WalkResult run = walk(setup, scenario);
    const std::string name = to_string(v);
    out.report.variants.push_back(compute_metrics(
        *setup.model, run.log, run.status, run.steps_completed, name));
    out.logs[name] = run.log;
    out.runs[name] = std::move(run);
  }
  return out;
}

ClfReport clf_report(const SimLog& log, double tol) {
  ClfReport rep;
  int n_stance = 0, n_viol = 0;
  for (size_t i = 0; i < log.rows.size(); ++i) {
    const SimLogRow& r = log.rows[i];
    if (!stance_row(r)) continue;
    ClfReportRow row;
    row.t = r.t;
    row.lhs_at_opt = r.Vdot_lhs;
    row.rhs_bound = r.Vdot_rhs;
    double un = 0;
    for (int j = 0; j < r.u.size(); ++j) un += r.u[j] * r.u[j];
    row.u_norm = std::sqrt(un);
    // Numeric Vdot from neighbouring ticks inside the same step.
    row.smooth = false;
    if (i > 0 && i + 1 < log.rows.size()) {
      const SimLogRow& a = log.rows[i - 1];
      const SimLogRow& b = log.rows[i + 1];
      if (a.step_index == r.step_index && b.step_index == r.step_index &&
          b.t > a.t) {
        row.vdot_numeric = (b.V - a.V) / (b.t - a.t);
        row.smooth = true;
      }
    }
    ++n_stance;
    if (row.lhs_at_opt > row.rhs_bound + tol) {
      ++n_viol;
      rep.max_excess =
          std::max(rep.max_excess, row.lhs_at_opt - row.rhs_bound);
    }
    rep.rows.push_back(row);
  }
  rep.violation_fraction = n_stance ? double(n_viol) / n_stance : 0.0;

  // Natural-dynamics probe: among ticks with bound slack above 1.5x the
  // median slack, count those with below-median torque.
  std::vector<double> slack, unorm;
  for (const auto& r : rep.rows) {
    slack.push_back(r.rhs_bound - r.lhs_at_opt);
    unorm.push_back(r.u_norm);
  }
  if (!slack.empty()) {
    auto median = [](std::vector<double> v) {
      std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
      return v[v.size() / 2];
    };
    const double ms = median(slack), mu = median(unorm);
    int big = 0, small_u = 0;
    for (size_t i = 0; i < slack.size(); ++i) {
      if (slack[i] > 1.5 * ms) {
        ++big;
        if (unorm[i] < mu) ++small_u;
      }
    }
    rep.small_torque_fraction = big ? double(small_u) / big : 0.0;
  }
  return rep;
}

}  // namespace prosim
