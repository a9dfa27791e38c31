#include "prosim/control.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>

namespace prosim {

Variant variant_from_string(const std::string& s) {
  if (s == "FL" || s == "fl") return Variant::FL;
  if (s == "PD" || s == "pd") return Variant::PD;
  if (s == "IDCLFQP" || s == "idclfqp") return Variant::IDCLFQP;
  if (s == "IDCLFQP_Ff" || s == "idclfqp_ff") return Variant::IDCLFQP_Ff;
  if (s == "IDCLFQP_Fest" || s == "idclfqp_fest") return Variant::IDCLFQP_Fest;
  throw ConfigError("unknown controller variant '" + s + "'");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::FL: return "FL";
    case Variant::PD: return "PD";
    case Variant::IDCLFQP: return "IDCLFQP";
    case Variant::IDCLFQP_Ff: return "IDCLFQP_Ff";
    case Variant::IDCLFQP_Fest: return "IDCLFQP_Fest";
  }
  return "?";
}

void ControllerConfig::validate() const {
  if (!(kp > 0 && kd > 0)) throw ConfigError("controller: kp, kd must be > 0");
  if (!(sigma > 0 && rho > 0))
    throw ConfigError("controller: sigma, rho must be > 0");
  if (!(eps > 0 && eps < 1)) throw ConfigError("controller: eps in (0,1)");
  if (n_avg < 1) throw ConfigError("controller: n_avg must be >= 1");
  if (u_max.size() == 0 || (u_max.array() <= 0).any())
    throw ConfigError("controller: u_max must be positive per joint");
  if (!(joint_kp > 0 && joint_kd >= 0))
    throw ConfigError("controller: joint PD gains invalid");
}

static std::string constraint_set_name(const std::string& domain) {
  if (domain == "ps") return "prosthesis_stance";
  if (domain == "pns") return "prosthesis_nonstance";
  throw ConfigError("unknown domain '" + domain + "'");
}

// Revolute coordinate of a named link.
static int joint_coord(const RobotModel& model, const std::string& link) {
  const int id = model.link_id(link);
  if (model.links[id].joint != JointType::Revolute)
    throw ConfigError("link '" + link + "' has no revolute joint");
  return model.q_index[id];
}

static int actuator_column(const RobotModel& model, int coord) {
  for (int j = 0; j < model.nu(); ++j)
    if (model.actuated[j] == coord) return j;
  throw ConfigError("coordinate is not actuated");
}

static int alpha_row(const GaitParams& gait, const std::string& link) {
  for (size_t i = 0; i < gait.output_names.size(); ++i)
    if (gait.output_names[i] == link) return int(i);
  throw ConfigError("gait file has no output row for '" + link + "'");
}

AffineOutputMap output_accel_map(const RobotModel& model, RefVec q, RefVec qdot,
                                 const HolonomicSet& holo, RefVec extra_force,
                                 const OutputBundle& ob) {
  const int n = model.nq;
  const Mat D = inertia_matrix(model, q);
  const Vec H = bias_forces(model, q, qdot);
  const auto cj = constraint_jacobians(model, q, qdot, holo);
  const int c = int(cj.J.rows());
  const int m = model.nu();

  Mat K = Mat::Zero(n + c, n + c);
  K.topLeftCorner(n, n) = D;
  if (c > 0) {
    K.topRightCorner(n, c) = -cj.J.transpose();
    K.bottomLeftCorner(c, n) = cj.J;
  }
  Mat rhs = Mat::Zero(n + c, 1 + m);
  rhs.col(0).head(n) = -H + extra_force;
  if (c > 0) rhs.col(0).tail(c) = -(cj.Jdot * qdot);
  for (int j = 0; j < m; ++j) rhs(model.actuated[j], 1 + j) = 1.0;

  Eigen::FullPivLU<Mat> lu(K);
  lu.setThreshold(1e-10);
  if (!lu.isInvertible())
    throw ModelError("output_accel_map: singular constrained dynamics");
  const Mat X = lu.solve(rhs);

  AffineOutputMap map;
  map.qdd0 = X.col(0).head(n);
  map.qdd_u = X.block(0, 1, n, m);
  map.a = ob.Jy * map.qdd0 + ob.Jydot * qdot;
  map.M = ob.Jy * map.qdd_u;
  return map;
}

Vec feedback_linearize(const AffineOutputMap& map, RefVec nu,
                       const std::vector<int>& free_cols, RefVec u_fixed) {
  const int m_out = int(map.M.rows());
  if (int(free_cols.size()) != m_out)
    throw SolverError("feedback_linearize: outputs and free torques differ");
  Vec u = u_fixed;
  for (int j : free_cols) u[j] = 0.0;
  Mat Mfree(m_out, m_out);
  for (int i = 0; i < m_out; ++i) Mfree.col(i) = map.M.col(free_cols[i]);
  Eigen::FullPivLU<Mat> lu(Mfree);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible())
    throw SolverError("feedback_linearize: singular decoupling matrix");
  const Vec rhs = nu - map.a - map.M * u;
  const Vec ufree = lu.solve(rhs);
  for (int i = 0; i < m_out; ++i) u[free_cols[i]] = ufree[i];
  return u;
}

Vec feedback_linearize(const AffineOutputMap& map, RefVec nu) {
  std::vector<int> all(map.M.cols());
  for (size_t i = 0; i < all.size(); ++i) all[i] = int(i);
  return feedback_linearize(map, nu, all, Vec::Zero(map.M.cols()));
}

Vec pd_joint_controller(RefVec q, RefVec qdot, RefVec q_sp, RefVec qdot_sp,
                        double kp, double kd, RefVec u_max) {
  if (q.size() != q_sp.size() || qdot.size() != qdot_sp.size())
    throw ModelError("pd_joint_controller: dimension mismatch");
  Vec u = -kp * (q - q_sp) - kd * (qdot - qdot_sp);
  for (int i = 0; i < u.size(); ++i)
    u[i] = std::clamp(u[i], -u_max[i], u_max[i]);
  return u;
}

QPProblem build_idclfqp(const IdclfqpTerms& t, const OutputBundle& ob,
                        const CLFData& clf, RefVec qbardot,
                        const ControllerConfig& cfg, RefVec upsilon_prev,
                        const std::vector<std::pair<int, double>>& pinned_torques) {
  const int nq = int(t.D.rows());
  const int nu = int(t.B.cols());
  const int nh = int(t.Jh.rows());
  const int m_out = int(ob.Jy.rows());
  if (t.H.size() != nq || t.force.size() != nq)
    throw ModelError("build_idclfqp: dimension mismatch");

  QPProblem p;
  p.layout.nq = nq;
  p.layout.nu = nu;
  p.layout.nlam = nh;
  p.layout.has_delta = true;
  const int nv = p.layout.size();
  const int off_u = p.layout.u_offset();
  const int off_l = p.layout.lambda_offset();
  const int off_d = p.layout.delta_offset();

  // Cost: || Jc qdd + (Jcdot qbardot - mu_pd) ||^2 + sigma ||Y - Y_prev||^2
  // + rho delta, with Jc = [Jy; Jh] and mu_pd = (nu_pd, 0).
  Mat Jc(m_out + nh, nq);
  Jc.topRows(m_out) = ob.Jy;
  if (nh > 0) Jc.bottomRows(nh) = t.Jh;
  Vec resid0(m_out + nh);
  resid0.head(m_out) = ob.Jydot * qbardot + cfg.kp * ob.y + cfg.kd * ob.ydot;
  if (nh > 0) resid0.tail(nh) = t.Jhdot * qbardot;

  p.hess = Mat::Zero(nv, nv);
  p.hess.topLeftCorner(nq, nq) = 2.0 * Jc.transpose() * Jc;
  p.hess += 2.0 * cfg.sigma * Mat::Identity(nv, nv);
  p.grad = Vec::Zero(nv);
  p.grad.head(nq) = 2.0 * Jc.transpose() * resid0;
  if (upsilon_prev.size() == nv) p.grad -= 2.0 * cfg.sigma * upsilon_prev;
  p.grad[off_d] += cfg.rho;

  // Dynamics equality D qdd - B u - Jh' lambda = -H + force, then one row
  // per pinned torque.
  const int n_eq = nq + int(pinned_torques.size());
  p.A_eq = Mat::Zero(n_eq, nv);
  p.b_eq = Vec::Zero(n_eq);
  p.A_eq.topLeftCorner(nq, nq) = t.D;
  p.A_eq.block(0, off_u, nq, nu) = -t.B;
  if (nh > 0) p.A_eq.block(0, off_l, nq, nh) = -t.Jh.transpose();
  p.b_eq.head(nq) = -t.H + t.force;
  for (size_t i = 0; i < pinned_torques.size(); ++i) {
    p.A_eq(nq + int(i), off_u + pinned_torques[i].first) = 1.0;
    p.b_eq[nq + int(i)] = pinned_torques[i].second;
  }

  // Inequalities: CLF rate row (relaxed by delta), torque box, delta >= 0.
  Vec xi(2 * m_out);
  xi.head(m_out) = ob.y;
  xi.tail(m_out) = ob.ydot;
  const double V = clf_value(clf, xi);
  const CLFDerivatives dv = clf_derivative_terms(clf, xi);

  const int n_in = 1 + 2 * nu + 1;
  p.A_in = Mat::Zero(n_in, nv);
  p.b_in = Vec::Zero(n_in);
  p.A_in.block(0, 0, 1, nq) = dv.LGV * ob.Jy;
  p.A_in(0, off_d) = -1.0;
  p.b_in[0] =
      -(clf.gamma / clf.eps) * V - dv.LFV - dv.LGV.dot(ob.Jydot * qbardot);
  for (int j = 0; j < nu; ++j) {
    p.A_in(1 + 2 * j, off_u + j) = 1.0;
    p.b_in[1 + 2 * j] = cfg.u_max[j];
    p.A_in(1 + 2 * j + 1, off_u + j) = -1.0;
    p.b_in[1 + 2 * j + 1] = cfg.u_max[j];
  }
  p.A_in(n_in - 1, off_d) = -1.0;
  p.b_in[n_in - 1] = 0.0;
  return p;
}

// --- prosthesis controller --------------------------------------------------

ProsthesisController::ProsthesisController(
    std::shared_ptr<const RobotModel> submodel, ControllerConfig cfg,
    std::map<std::string, GaitParams> gaits)
    : sub_(std::move(submodel)), cfg_(std::move(cfg)), gaits_(std::move(gaits)) {
  cfg_.validate();
  if (gaits_.empty()) throw ConfigError("controller needs gait parameters");
  if (cfg_.u_max.size() != sub_->nu())
    throw ConfigError("u_max size must match subsystem actuators");
  const GaitParams& g0 = gaits_.begin()->second;

  for (const auto& name : cfg_.tracked_links) {
    const int coord = joint_coord(*sub_, name);
    out_spec_.actual_coords.push_back(coord);
    tracked_rows_.push_back(alpha_row(g0, name));
    tracked_ucols_.push_back(actuator_column(*sub_, coord));
  }
  for (const auto& name : cfg_.setpoint_links) {
    const int coord = joint_coord(*sub_, name);
    setpoint_coords_.push_back(coord);
    setpoint_rows_.push_back(alpha_row(g0, name));
    setpoint_ucols_.push_back(actuator_column(*sub_, coord));
  }
  if (out_spec_.actual_coords.empty())
    throw ConfigError("controller tracks no outputs");

  // Progression coordinate: stance chain in ps, thigh sweep in pns.
  const auto& stance = sub_->constraint_sets.at("prosthesis_stance");
  if (stance.contacts.empty())
    throw ConfigError("subsystem stance constraint set has no contact");
  const int foot = stance.contacts[0].body;
  phase_c_["ps"] = phase_coefficients_domain(*sub_, foot, "ps");
  phase_c_["pns"] = phase_coefficients_domain(*sub_, foot, "pns");
  out_spec_.phase.c = phase_c_["ps"];

  const int m = int(out_spec_.actual_coords.size());
  Mat Q = Mat::Identity(2 * m, 2 * m);
  Q.topLeftCorner(m, m) *= cfg_.kp;
  Q.bottomRightCorner(m, m) *= cfg_.kd;
  clf_ = make_clf(m, Q, cfg_.eps);

  est_.window = cfg_.n_avg;
  est_.reset();
}

void ProsthesisController::on_impact() {
  est_.has_prev = false;
  if (cfg_.reset_estimator_on_impact) est_.ring.clear();
  upsilon_prev_.resize(0);
  warm_active_.clear();
  phase_anchor_.reset();
}

OutputSpec ProsthesisController::domain_spec(const std::string& domain) const {
  OutputSpec spec = out_spec_;
  spec.phase.c = phase_c_.at(domain);
  if (domain == "pns" && phase_anchor_) spec.phase.offset = *phase_anchor_;
  return spec;
}

// Gait rows of the tracked outputs only, in tracked order.
static GaitParams tracked_gait(const GaitParams& g, const std::vector<int>& rows) {
  GaitParams out = g;
  out.alpha.resize(rows.size(), g.alpha.cols());
  out.output_names.clear();
  for (size_t i = 0; i < rows.size(); ++i) {
    out.alpha.row(int(i)) = g.alpha.row(rows[i]);
    out.output_names.push_back(g.output_names[rows[i]]);
  }
  return out;
}

ControlOutput ProsthesisController::tick(const MeasurableBundle& bundle,
                                         const std::string& domain) {
  const auto it = gaits_.find(domain);
  if (it == gaits_.end()) throw ConfigError("no gait for domain " + domain);
  const GaitParams& gait = it->second;
  if (domain == "pns" && !phase_anchor_)
    phase_anchor_ = phase_c_.at("pns").dot(bundle.qbar());
  switch (cfg_.variant) {
    case Variant::PD: return pd_tick(bundle, gait);
    case Variant::FL: return swing_fl_tick(bundle, gait);
    case Variant::IDCLFQP:
    case Variant::IDCLFQP_Ff:
    case Variant::IDCLFQP_Fest:
      return (domain == "ps") ? stance_qp_tick(bundle, gait)
                              : swing_fl_tick(bundle, gait);
  }
  throw ConfigError("unhandled controller variant");
}

ControlOutput ProsthesisController::stance_qp_tick(
    const MeasurableBundle& bundle, const GaitParams& gait) {
  const Vec qb = bundle.qbar();
  const Vec qbd = bundle.qbardot();
  const HolonomicSet& holo = sub_->constraint_sets.at("prosthesis_stance");

  IdclfqpTerms t;
  t.D = inertia_matrix(*sub_, qb);
  t.H = bias_forces(*sub_, qb, qbd);
  t.B = sub_->actuation_matrix();
  const auto cj = constraint_jacobians(*sub_, qb, qbd, holo);
  t.Jh = cj.J;
  t.Jhdot = cj.Jdot;

  const OutputBundle ob =
      outputs(domain_spec("ps"), tracked_gait(gait, tracked_rows_), qb, qbd);

  // Interaction force term per variant. The estimator consumes the
  // measured velocities and the previous tick's applied torque and
  // contact wrench; no inertia solve anywhere on this path.
  t.force = Vec::Zero(sub_->nq);
  if (cfg_.variant == Variant::IDCLFQP_Ff) {
    Mat Jf;
    const Kinematics kin = kinematics(*sub_, qb);
    point_jacobian_into(*sub_, kin, 0, Vec2::Zero(), Jf);
    t.force = Jf.transpose() * bundle.zeta;
  } else if (cfg_.variant == Variant::IDCLFQP_Fest) {
    if (est_.has_prev) {
      const Vec qdd_est =
          accel_estimate(qbd, est_.prev_qdot, bundle.t, est_.prev_t);
      const Mat D_prev = inertia_matrix(*sub_, est_.prev_q);
      const Vec H_prev = bias_forces(*sub_, est_.prev_q, est_.prev_qdot);
      const auto cj_prev =
          constraint_jacobians(*sub_, est_.prev_q, est_.prev_qdot, holo);
      push_residual(est_, residual_dynamics(D_prev, H_prev, t.B, cj_prev.J,
                                            qdd_est, est_.prev_u,
                                            est_.prev_lambda));
    }
    if (const auto avg = average_residual(est_)) t.force = *avg;
  }

  // Set-point joints: saturated PD torque, pinned inside the QP so the
  // internal dynamics match what is applied.
  std::vector<std::pair<int, double>> pinned;
  for (size_t i = 0; i < setpoint_coords_.size(); ++i) {
    const int k = setpoint_coords_[i];
    const BezierEval des = bezier(gait.alpha.row(setpoint_rows_[i]), ob.tau);
    double u = -cfg_.joint_kp * (qb[k] - des.value) -
               cfg_.joint_kd * (qbd[k] - des.d1 * ob.taudot);
    const int col = setpoint_ucols_[i];
    u = std::clamp(u, -cfg_.u_max[col], cfg_.u_max[col]);
    pinned.emplace_back(col, u);
  }

  const QPProblem qp =
      build_idclfqp(t, ob, clf_, qbd, cfg_, upsilon_prev_, pinned);
  QPOptions opt;
  opt.warm_active = warm_active_;
  QPResult res = solve_qp(qp, opt);
  if (res.status != QPStatus::Optimal) {
    const bool usable = res.status == QPStatus::MaxIterations &&
                        res.kkt_stationarity <= 1e-6 &&
                        res.kkt_primal <= 1e-6 &&
                        res.kkt_complementarity <= 1e-6;
    if (!usable)
      throw SolverError(std::string("stance QP failed: ") +
                        to_string(res.status));
  }
  upsilon_prev_ = res.x;
  warm_active_ = res.active_set;

  ControlOutput out;
  out.upsilon = res.x;
  out.u_s = res.x.segment(qp.layout.u_offset(), sub_->nu());
  out.lambda_bar = res.x.segment(qp.layout.lambda_offset(), qp.layout.nlam);
  out.delta = res.x[qp.layout.delta_offset()];
  out.tau = ob.tau;
  out.y = ob.y;
  out.ydot = ob.ydot;
  out.f_term = t.force;
  out.qp_status = res.status;

  Vec xi(2 * ob.y.size());
  xi.head(ob.y.size()) = ob.y;
  xi.tail(ob.y.size()) = ob.ydot;
  out.clf_value = clf_value(clf_, xi);
  const CLFDerivatives dv = clf_derivative_terms(clf_, xi);
  const Vec qdd = res.x.head(sub_->nq);
  out.clf_bound_lhs = dv.LFV + dv.LGV.dot(ob.Jydot * qbd + ob.Jy * qdd);
  out.clf_bound_rhs = -(clf_.gamma / clf_.eps) * out.clf_value + out.delta;

  est_.prev_t = bundle.t;
  est_.prev_q = qb;
  est_.prev_qdot = qbd;
  est_.prev_u = out.u_s;
  est_.prev_lambda = out.lambda_bar;
  est_.has_prev = true;
  return out;
}

ControlOutput ProsthesisController::swing_fl_tick(const MeasurableBundle& bundle,
                                                  const GaitParams& gait) {
  const Vec qb = bundle.qbar();
  const Vec qbd = bundle.qbardot();
  const std::string set_name =
      (gait.domain == "ps") ? "prosthesis_stance" : "prosthesis_nonstance";
  const HolonomicSet& holo = sub_->constraint_sets.at(set_name);

  const OutputBundle ob = outputs(domain_spec(gait.domain),
                                  tracked_gait(gait, tracked_rows_), qb, qbd);

  Mat Jf;
  const Kinematics kin = kinematics(*sub_, qb);
  point_jacobian_into(*sub_, kin, 0, Vec2::Zero(), Jf);
  const Vec force = Jf.transpose() * bundle.zeta;

  const AffineOutputMap map = output_accel_map(*sub_, qb, qbd, holo, force, ob);
  const Vec nu = -cfg_.kp * ob.y - cfg_.kd * ob.ydot;

  Vec u_fixed = Vec::Zero(sub_->nu());
  for (size_t i = 0; i < setpoint_coords_.size(); ++i) {
    const int k = setpoint_coords_[i];
    const BezierEval des = bezier(gait.alpha.row(setpoint_rows_[i]), ob.tau);
    double u = -cfg_.joint_kp * (qb[k] - des.value) -
               cfg_.joint_kd * (qbd[k] - des.d1 * ob.taudot);
    const int col = setpoint_ucols_[i];
    u_fixed[col] = std::clamp(u, -cfg_.u_max[col], cfg_.u_max[col]);
  }
  Vec u = feedback_linearize(map, nu, tracked_ucols_, u_fixed);
  for (int j = 0; j < u.size(); ++j)
    u[j] = std::clamp(u[j], -cfg_.u_max[j], cfg_.u_max[j]);

  ControlOutput out;
  out.u_s = u;
  out.tau = ob.tau;
  out.y = ob.y;
  out.ydot = ob.ydot;
  out.f_term = force;
  Vec xi(2 * ob.y.size());
  xi.head(ob.y.size()) = ob.y;
  xi.tail(ob.y.size()) = ob.ydot;
  out.clf_value = clf_value(clf_, xi);
  const CLFDerivatives dv = clf_derivative_terms(clf_, xi);
  const Vec qdd = map.qdd0 + map.qdd_u * u;
  out.clf_bound_lhs = dv.LFV + dv.LGV.dot(ob.Jydot * qbd + ob.Jy * qdd);
  out.clf_bound_rhs = -(clf_.gamma / clf_.eps) * out.clf_value;
  out.lambda_bar = Vec::Zero(0);
  return out;
}

ControlOutput ProsthesisController::pd_tick(const MeasurableBundle& bundle,
                                            const GaitParams& gait) {
  const Vec qb = bundle.qbar();
  const Vec qbd = bundle.qbardot();
  const OutputBundle ob = outputs(domain_spec(gait.domain),
                                  tracked_gait(gait, tracked_rows_), qb, qbd);

  Vec u = Vec::Zero(sub_->nu());
  auto apply = [&](int coord, int row, int col) {
    const BezierEval des = bezier(gait.alpha.row(row), ob.tau);
    const double cmd = -cfg_.joint_kp * (qb[coord] - des.value) -
                       cfg_.joint_kd * (qbd[coord] - des.d1 * ob.taudot);
    u[col] = std::clamp(cmd, -cfg_.u_max[col], cfg_.u_max[col]);
  };
  for (size_t i = 0; i < out_spec_.actual_coords.size(); ++i)
    apply(out_spec_.actual_coords[i], tracked_rows_[i], tracked_ucols_[i]);
  for (size_t i = 0; i < setpoint_coords_.size(); ++i)
    apply(setpoint_coords_[i], setpoint_rows_[i], setpoint_ucols_[i]);

  ControlOutput out;
  out.u_s = u;
  out.tau = ob.tau;
  out.y = ob.y;
  out.ydot = ob.ydot;
  Vec xi(2 * ob.y.size());
  xi.head(ob.y.size()) = ob.y;
  xi.tail(ob.y.size()) = ob.ydot;
  out.clf_value = clf_value(clf_, xi);
  out.f_term = Vec::Zero(sub_->nq);
  out.lambda_bar = Vec::Zero(0);
  return out;
}

// --- human-side controller --------------------------------------------------

HumanController::HumanController(std::shared_ptr<const RobotModel> model,
                                 ControllerConfig cfg,
                                 std::map<std::string, GaitParams> gaits,
                                 std::vector<std::string> tracked_links)
    : model_(std::move(model)), cfg_(std::move(cfg)), gaits_(std::move(gaits)) {
  const GaitParams& g0 = gaits_.begin()->second;
  std::vector<int> rows;
  for (const auto& name : tracked_links) {
    const int coord = joint_coord(*model_, name);
    out_spec_.actual_coords.push_back(coord);
    rows.push_back(alpha_row(g0, name));
  }
  rows_ = rows;
  // The human side phases its outputs by the active stance-leg chain: the
  // prosthesis chain in ps (same values as the subsystem controller's
  // progression) and its own leg in pns.
  phase_c_["ps"] = phase_coefficients(
      *model_,
      model_->constraint_sets.at("prosthesis_stance").contacts[0].body);
  phase_c_["pns"] = phase_coefficients(
      *model_,
      model_->constraint_sets.at("prosthesis_nonstance").contacts[0].body);
  out_spec_.phase.c = phase_c_["ps"];

  for (int j = 0; j < model_->nu(); ++j) {
    const int coord = model_->actuated[j];
    const bool in_sub =
        std::find(model_->sub_to_full.begin(), model_->sub_to_full.end(),
                  coord) != model_->sub_to_full.end();
    (in_sub ? sub_ucols_ : rest_ucols_).push_back(j);
  }
}

Vec HumanController::tick(const FullState& x, const std::string& domain,
                          RefVec u_s) {
  const GaitParams& gait = gaits_.at(domain);
  const HolonomicSet& holo =
      model_->constraint_sets.at(constraint_set_name(domain));
  OutputSpec spec = out_spec_;
  spec.phase.c = phase_c_.at(domain);
  GaitParams hgait = tracked_gait_rows(gait);
  hgait.theta_plus = gait.human_theta_plus;
  hgait.theta_minus = gait.human_theta_minus;
  const OutputBundle ob = outputs(spec, hgait, x.q, x.qdot);
  const AffineOutputMap map = output_accel_map(
      *model_, x.q, x.qdot, holo, Vec::Zero(model_->nq), ob);
  const Vec nu = -cfg_.kp * ob.y - cfg_.kd * ob.ydot;
  Vec u_fixed = Vec::Zero(model_->nu());
  for (size_t i = 0; i < sub_ucols_.size(); ++i)
    u_fixed[sub_ucols_[i]] = u_s[int(i)];
  const Vec u = feedback_linearize(map, nu, rest_ucols_, u_fixed);
  Vec u_r(rest_ucols_.size());
  for (size_t i = 0; i < rest_ucols_.size(); ++i) u_r[int(i)] = u[rest_ucols_[i]];
  return u_r;
}

GaitParams HumanController::tracked_gait_rows(const GaitParams& g) const {
  GaitParams out = g;
  out.alpha.resize(rows_.size(), g.alpha.cols());
  out.output_names.clear();
  for (size_t i = 0; i < rows_.size(); ++i) {
    out.alpha.row(int(i)) = g.alpha.row(rows_[i]);
    out.output_names.push_back(g.output_names[rows_[i]]);
  }
  return out;
}

// Output rows for a named subset at a given phase specification.
static OutputBundle named_outputs(const RobotModel& model, const FullState& x,
                                  const GaitParams& gait,
                                  const std::vector<std::string>& names,
                                  const Vec& phase_c, double theta_plus,
                                  double theta_minus, double offset) {
  OutputSpec spec;
  GaitParams rows = gait;
  rows.alpha.resize(names.size(), gait.alpha.cols());
  rows.output_names.clear();
  rows.theta_plus = theta_plus;
  rows.theta_minus = theta_minus;
  for (size_t i = 0; i < names.size(); ++i) {
    spec.actual_coords.push_back(joint_coord(model, names[i]));
    rows.alpha.row(int(i)) = gait.alpha.row(alpha_row(gait, names[i]));
    rows.output_names.push_back(names[i]);
  }
  spec.phase.c = phase_c;
  spec.phase.offset = offset;
  return outputs(spec, rows, x.q, x.qdot);
}

Vec full_fl_torque(const RobotModel& model, const FullState& x,
                   const std::string& domain,
                   const std::map<std::string, GaitParams>& gaits,
                   const std::vector<std::string>& human_tracked,
                   const ControllerConfig& pros_cfg, double phase_offset) {
  const GaitParams& gait = gaits.at(domain);
  const HolonomicSet& holo =
      model.constraint_sets.at(constraint_set_name(domain));
  const int pros_foot =
      model.constraint_sets.at("prosthesis_stance").contacts[0].body;
  const int stance_foot =
      model.constraint_sets.at(constraint_set_name(domain)).contacts[0].body;

  const OutputBundle hb = named_outputs(
      model, x, gait, human_tracked, phase_coefficients(model, stance_foot),
      gait.human_theta_plus, gait.human_theta_minus, 0.0);
  const OutputBundle pb = named_outputs(
      model, x, gait, pros_cfg.tracked_links,
      phase_coefficients_domain(model, pros_foot, domain), gait.theta_plus,
      gait.theta_minus, (domain == "pns") ? phase_offset : 0.0);

  OutputBundle ob;
  const int mh = int(hb.y.size()), mp = int(pb.y.size());
  ob.y.resize(mh + mp);
  ob.ydot.resize(mh + mp);
  ob.Jy.resize(mh + mp, model.nq);
  ob.Jydot.resize(mh + mp, model.nq);
  ob.y << hb.y, pb.y;
  ob.ydot << hb.ydot, pb.ydot;
  ob.Jy << hb.Jy, pb.Jy;
  ob.Jydot << hb.Jydot, pb.Jydot;
  ob.tau = pb.tau;
  ob.taudot = pb.taudot;

  const AffineOutputMap map =
      output_accel_map(model, x.q, x.qdot, holo, Vec::Zero(model.nq), ob);
  const Vec nu = -pros_cfg.kp * ob.y - pros_cfg.kd * ob.ydot;

  Vec u_fixed = Vec::Zero(model.nu());
  std::vector<int> free_cols;
  std::vector<bool> is_pinned(model.nu(), false);
  for (const auto& name : pros_cfg.setpoint_links) {
    const int coord = joint_coord(model, name);
    const int col = actuator_column(model, coord);
    const int row = alpha_row(gait, name);
    const BezierEval des = bezier(gait.alpha.row(row), pb.tau);
    u_fixed[col] = -pros_cfg.joint_kp * (x.q[coord] - des.value) -
                   pros_cfg.joint_kd * (x.qdot[coord] - des.d1 * pb.taudot);
    is_pinned[col] = true;
  }
  for (int j = 0; j < model.nu(); ++j)
    if (!is_pinned[j]) free_cols.push_back(j);
  return feedback_linearize(map, nu, free_cols, u_fixed);
}

}  // namespace prosim
