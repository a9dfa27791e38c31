#include "prosim/sim.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <random>
#include <sstream>

namespace prosim {

void Scenario::validate() const {
  if (!(dt > 0)) throw ConfigError("scenario: dt must be > 0");
  if (!(ctrl_rate > 0)) throw ConfigError("scenario: ctrl_rate must be > 0");
  if (n_steps < 1) throw ConfigError("scenario: n_steps must be >= 1");
  if (start_domain != "ps" && start_domain != "pns")
    throw ConfigError("scenario: start_domain must be ps or pns");
  if (init_mode != "nominal" && init_mode != "explicit")
    throw ConfigError("scenario: init_mode must be nominal or explicit");
  if (init_mode == "explicit" && (q0.size() == 0 || qd0.size() == 0))
    throw ConfigError("scenario: explicit init needs q0 and qd0");
  if (!(fall_fraction > 0 && fall_fraction < 1))
    throw ConfigError("scenario: fall_fraction in (0,1)");
}

std::map<std::string, DomainSpec> walking_domains(const RobotModel& model) {
  std::map<std::string, DomainSpec> out;
  const auto need = [&](const std::string& name) -> const HolonomicSet& {
    auto it = model.constraint_sets.find(name);
    if (it == model.constraint_sets.end())
      throw ConfigError("model has no constraint set '" + name + "'");
    if (it->second.contacts.empty())
      throw ConfigError("constraint set '" + name + "' has no contact");
    return it->second;
  };
  const HolonomicSet& ps = need("prosthesis_stance");
  const HolonomicSet& pns = need("prosthesis_nonstance");

  DomainSpec dps;
  dps.id = "ps";
  dps.next = "pns";
  dps.holonomic = ps;
  dps.guard_body = pns.contacts[0].body;  // foot that strikes next
  dps.guard_point = pns.contacts[0].point;
  out["ps"] = dps;

  DomainSpec dpns;
  dpns.id = "pns";
  dpns.next = "ps";
  dpns.holonomic = pns;
  dpns.guard_body = ps.contacts[0].body;
  dpns.guard_point = ps.contacts[0].point;
  out["pns"] = dpns;
  return out;
}

// --- integration ------------------------------------------------------------

static Vec stacked_deriv(const RobotModel& model, const FullState& s, RefVec u,
                         const HolonomicSet& holo,
                         const std::vector<Vec3>* targets) {
  const Vec qdd = constrained_dynamics(model, s, u, holo, targets).qdd;
  Vec dx(2 * model.nq);
  dx.head(model.nq) = s.qdot;
  dx.tail(model.nq) = qdd;
  return dx;
}

FullState integrate_step(const RobotModel& model, const FullState& state,
                         RefVec u, const HolonomicSet& holo, double dt,
                         const std::vector<Vec3>* contact_targets,
                         double drift_tol) {
  if (!(dt > 0)) throw SimError("integrate_step: dt must be > 0");
  const int n = model.nq;
  auto advance = [&](const FullState& s, const Vec& dx, double h) {
    FullState next = s;
    next.q += h * dx.head(n);
    next.qdot += h * dx.tail(n);
    next.t = s.t + h;
    return next;
  };
  const Vec k1 = stacked_deriv(model, state, u, holo, contact_targets);
  const Vec k2 =
      stacked_deriv(model, advance(state, k1, dt / 2), u, holo, contact_targets);
  const Vec k3 =
      stacked_deriv(model, advance(state, k2, dt / 2), u, holo, contact_targets);
  const Vec k4 =
      stacked_deriv(model, advance(state, k3, dt), u, holo, contact_targets);
  FullState next = state;
  next.q += dt / 6.0 * (k1.head(n) + 2 * k2.head(n) + 2 * k3.head(n) + k4.head(n));
  next.qdot +=
      dt / 6.0 * (k1.tail(n) + 2 * k2.tail(n) + 2 * k3.tail(n) + k4.tail(n));
  next.t = state.t + dt;

  if (!next.q.allFinite() || !next.qdot.allFinite())
    throw SimError("integration diverged (non-finite state)");
  if (contact_targets) {
    const Vec c = constraint_residual(model, next.q, holo, *contact_targets);
    if (c.size() > 0 && c.cwiseAbs().maxCoeff() > drift_tol)
      throw SimError("holonomic drift exceeded tolerance");
  }
  return next;
}

std::optional<GuardCrossing> detect_guard(
    const RobotModel& model, const FullState& state, RefVec u,
    const HolonomicSet& holo, double dt,
    const std::function<double(const FullState&)>& guard) {
  const double h0 = guard(state);
  const FullState full = integrate_step(model, state, u, holo, dt);
  const double h1 = guard(full);
  if (!(h0 > 0 && h1 <= 0)) return std::nullopt;

  // Bisect the step fraction; RK4 is a one-step method, so integrating a
  // partial step from the same state is consistent.
  auto at = [&](double s) {
    return (s <= 0) ? state : integrate_step(model, state, u, holo, s * dt);
  };
  double lo = 0, hi = 1;
  FullState cross = full;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const FullState sm = at(mid);
    const double hm = guard(sm);
    if (hm > 0)
      lo = mid;
    else {
      hi = mid;
      cross = sm;
    }
    if (std::abs(hm) <= 1e-10 && hm <= 0) {
      cross = sm;
      hi = mid;
      break;
    }
  }
  // Direction filter: require a genuinely descending contact point.
  const double h_before = guard(at(std::max(0.0, hi - 1e-6)));
  const double rate = (guard(cross) - h_before) / (1e-6 * dt);
  if (rate > -1e-6) {
    std::cerr << "[prosim] grazing guard crossing ignored at t=" << cross.t
              << "\n";
    return std::nullopt;
  }
  GuardCrossing ev;
  ev.fraction = hi;
  ev.state = cross;
  return ev;
}

// --- stance inverse kinematics ---------------------------------------------

// Chain from `body` up to its tree root; returns link ids root-first.
static std::vector<int> chain_to_root(const RobotModel& model, int body) {
  std::vector<int> chain;
  int b = body;
  while (b >= 0) {
    chain.push_back(b);
    b = model.links[b].parent;
  }
  std::reverse(chain.begin(), chain.end());
  return chain;
}

IkResult stance_base_ik(const RobotModel& submodel, RefVec xs_pos,
                        RefVec xs_vel, const Vec3& foot_anchor,
                        const PhaseSpec& phase) {
  const auto& stance = submodel.constraint_sets.at("prosthesis_stance");
  if (stance.contacts.empty())
    throw ConfigError("stance_base_ik: no stance contact");
  const int foot = stance.contacts[0].body;
  const Vec2 contact_local = stance.contacts[0].point;
  const std::vector<int> chain = chain_to_root(submodel, foot);
  if (chain.front() != 0)
    throw ConfigError("stance_base_ik: stance chain must reach the base");

  // Absolute pitches down the chain from the anchored foot.
  auto joint_angle = [&](int link) {
    const int k = submodel.q_index[link];
    return xs_pos[k - 3];  // subsystem joints follow the 3 base coords
  };
  std::vector<double> pitch(chain.size());
  pitch.back() = foot_anchor[2];
  for (int i = int(chain.size()) - 2; i >= 0; --i)
    pitch[i] = pitch[i + 1] - joint_angle(chain[i + 1]);

  // Positions up the chain from the contact point.
  Vec2 origin = Vec2(foot_anchor[0], foot_anchor[1]) -
                rot2(foot_anchor[2]) * contact_local;  // foot frame origin
  for (int i = int(chain.size()) - 1; i >= 1; --i)
    origin -= rot2(pitch[i - 1]) * submodel.links[chain[i]].joint_origin;

  IkResult out;
  out.base_pose = Vec3(origin.x(), origin.y(), pitch[0]);

  // Velocities: stance rows J (qB_dot, xs_dot) = 0 solved for the base.
  Vec qb(submodel.nq);
  qb.head<3>() = out.base_pose;
  qb.tail(submodel.nq - 3) = xs_pos;
  Vec qbd_joints = xs_vel;
  const auto cj = constraint_jacobians(submodel, qb, Vec::Zero(submodel.nq),
                                       stance);
  const Mat Jb = cj.J.leftCols<3>();
  const Mat Js = cj.J.rightCols(submodel.nq - 3);
  Eigen::FullPivLU<Mat> lu(Jb);
  if (!lu.isInvertible())
    throw ModelError("stance_base_ik: singular base block");
  out.base_vel = lu.solve(-(Js * qbd_joints));

  Vec qbdot(submodel.nq);
  qbdot.head<3>() = out.base_vel;
  qbdot.tail(submodel.nq - 3) = xs_vel;
  out.tau = phase_variable(qb, qbdot, phase).tau;
  return out;
}

// --- nominal initial state ---------------------------------------------------

// Sets the root coordinates of `body`'s tree so the frame at (body, local)
// lands on `target`; all revolute angles on the chain must already be in q.
static void anchor_chain(const RobotModel& model, int body, const Vec2& local,
                         const Vec3& target, Vec& q) {
  const std::vector<int> chain = chain_to_root(model, body);
  const int root = chain.front();
  std::vector<double> pitch(chain.size());
  pitch.back() = target[2];
  for (int i = int(chain.size()) - 2; i >= 0; --i)
    pitch[i] = pitch[i + 1] - q[model.q_index[chain[i + 1]]];
  Vec2 origin = Vec2(target[0], target[1]) - rot2(target[2]) * local;
  for (int i = int(chain.size()) - 1; i >= 1; --i)
    origin -= rot2(pitch[i - 1]) * model.links[chain[i]].joint_origin;
  const int k = model.q_index[root];
  q[k] = origin.x();
  q[k + 1] = origin.y();
  q[k + 2] = pitch[0];
}

FullState nominal_state(const RobotModel& model,
                        const std::map<std::string, GaitParams>& gaits,
                        const std::string& domain) {
  const GaitParams& gait = gaits.at(domain);
  const auto domains = walking_domains(model);
  const DomainSpec& dom = domains.at(domain);

  Vec q = Vec::Zero(model.nq);
  // Joint angles from the gait rows at tau = 0.
  std::vector<int> coords(gait.output_names.size());
  for (size_t i = 0; i < gait.output_names.size(); ++i) {
    const int link = model.link_id(gait.output_names[i]);
    coords[i] = model.q_index[link];
    q[coords[i]] = bezier(gait.alpha.row(int(i)), 0.0).value;
  }
  // Anchor the stance foot flat at the origin, then close the weld.
  const auto& contact = dom.holonomic.contacts[0];
  anchor_chain(model, contact.body, contact.point, Vec3::Zero(), q);
  if (model.fixed_joint) {
    const FixedJoint& fj = *model.fixed_joint;
    const bool child_is_stance =
        chain_to_root(model, contact.body).front() == fj.child_root;
    if (child_is_stance) {
      // Child tree anchored; place the parent tree against the weld frame.
      const int k = model.q_index[fj.child_root];
      anchor_chain(model, fj.parent_body, fj.parent_point,
                   Vec3(q[k], q[k + 1], q[k + 2]), q);
    } else {
      // Parent tree anchored; weld frame pose fixes the child root.
      const Kinematics kin = kinematics(model, q);
      const Vec3 pose = frame_pose(model, kin, fj.parent_body, fj.parent_point);
      const int k = model.q_index[fj.child_root];
      q[k] = pose[0];
      q[k + 1] = pose[1];
      q[k + 2] = pose[2];
    }
  }

  // Velocities: joints from the gait rate (per the phase each row is
  // parameterized by), roots from the constraints.
  Vec qdot = Vec::Zero(model.nq);
  for (size_t i = 0; i < coords.size(); ++i) {
    const bool pros_row =
        std::find(model.sub_to_full.begin(), model.sub_to_full.end(),
                  coords[i]) != model.sub_to_full.end();
    const double taudot0 =
        pros_row ? gait.taudot_nominal : gait.human_taudot_nominal;
    qdot[coords[i]] = bezier(gait.alpha.row(int(i)), 0.0).d1 * taudot0;
  }
  const auto cj = constraint_jacobians(model, q, qdot, dom.holonomic);
  std::vector<int> root_coords;
  for (int i = 0; i < model.nlinks(); ++i)
    if (model.links[i].parent < 0)
      for (int c = 0; c < 3; ++c) root_coords.push_back(model.q_index[i] + c);
  Mat Jr(cj.J.rows(), root_coords.size());
  for (size_t i = 0; i < root_coords.size(); ++i)
    Jr.col(int(i)) = cj.J.col(root_coords[i]);
  const Vec rhs = -(cj.J * qdot);  // joints already filled, roots zero
  Eigen::FullPivLU<Mat> lu(Jr);
  if (!lu.isInvertible())
    throw ModelError("nominal_state: singular root-velocity system");
  const Vec vroot = lu.solve(rhs);
  for (size_t i = 0; i < root_coords.size(); ++i)
    qdot[root_coords[i]] = vroot[int(i)];

  FullState s;
  s.q = q;
  s.qdot = qdot;
  s.t = 0;
  return s;
}

// --- logging -----------------------------------------------------------------

static std::vector<std::string> log_columns(const RobotModel& model,
                                            int nlam_full, int nbar,
                                            int nlam_bar) {
  std::vector<std::string> cols = {"t", "step", "domain", "tau"};
  for (int i = 0; i < model.nq; ++i) cols.push_back("q" + std::to_string(i));
  for (int i = 0; i < model.nq; ++i) cols.push_back("qd" + std::to_string(i));
  for (int i = 0; i < model.nu(); ++i) cols.push_back("u" + std::to_string(i));
  cols.insert(cols.end(), {"y", "ydot", "V", "Vdot_lhs", "Vdot_rhs", "delta"});
  for (int i = 0; i < nlam_full; ++i) cols.push_back("lam" + std::to_string(i));
  for (int i = 0; i < nlam_bar; ++i)
    cols.push_back("lamqp" + std::to_string(i));
  for (int i = 0; i < nbar; ++i) cols.push_back("fterm" + std::to_string(i));
  return cols;
}

static void fmt(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

std::string SimLog::to_csv() const {
  std::string out;
  for (size_t i = 0; i < columns.size(); ++i) {
    out += columns[i];
    out += (i + 1 < columns.size()) ? ',' : '\n';
  }
  for (const SimLogRow& r : rows) {
    fmt(out, r.t);
    out += ',';
    out += std::to_string(r.step_index);
    out += ',';
    out += r.domain;
    out += ',';
    fmt(out, r.tau);
    auto add_vec = [&](const Vec& v) {
      for (int i = 0; i < v.size(); ++i) {
        out += ',';
        fmt(out, v[i]);
      }
    };
    add_vec(r.q);
    add_vec(r.qd);
    add_vec(r.u);
    for (double v : {r.y, r.ydot, r.V, r.Vdot_lhs, r.Vdot_rhs, r.delta}) {
      out += ',';
      fmt(out, v);
    }
    add_vec(r.lambda);
    add_vec(r.lambda_bar);
    add_vec(r.f_term);
    out += '\n';
  }
  return out;
}

SimLog SimLog::from_csv(const std::string& text) {
  SimLog log;
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("empty csv");
  {
    std::istringstream hs(line);
    std::string col;
    while (std::getline(hs, col, ',')) log.columns.push_back(col);
  }
  auto count_prefix = [&](const std::string& p) {
    int n = 0;
    for (const auto& c : log.columns)
      if (c.rfind(p, 0) == 0 &&
          c.size() > p.size() &&
          std::isdigit(static_cast<unsigned char>(c[p.size()])))
        ++n;
    return n;
  };
  const int nq = count_prefix("q");  // "qd..." fails the digit test
  const int nqd = count_prefix("qd");
  const int nu = count_prefix("u");
  const int nlam = count_prefix("lam");
  const int nlamqp = count_prefix("lamqp");
  const int nf = count_prefix("fterm");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tok;
    auto next = [&]() {
      if (!std::getline(ls, tok, ',')) throw ConfigError("csv row too short");
      return tok;
    };
    SimLogRow r;
    r.t = std::stod(next());
    r.step_index = std::stoi(next());
    r.domain = next();
    r.tau = std::stod(next());
    auto read_vec = [&](int n) {
      Vec v(n);
      for (int i = 0; i < n; ++i) v[i] = std::stod(next());
      return v;
    };
    r.q = read_vec(nq);
    r.qd = read_vec(nqd);
    r.u = read_vec(nu);
    r.y = std::stod(next());
    r.ydot = std::stod(next());
    r.V = std::stod(next());
    r.Vdot_lhs = std::stod(next());
    r.Vdot_rhs = std::stod(next());
    r.delta = std::stod(next());
    r.lambda = read_vec(nlam);
    r.lambda_bar = read_vec(nlamqp);
    r.f_term = read_vec(nf);
    log.rows.push_back(std::move(r));
  }
  return log;
}

// --- walking loop -------------------------------------------------------------

double step_state_distance(const RobotModel& model, const FullState& a,
                           const FullState& b) {
  Vec qa = a.q, qb = b.q;
  // Shift both so the first root's x is zero; the second tree follows the
  // same translation on its x coordinate.
  std::vector<int> root_x;
  for (int i = 0; i < model.nlinks(); ++i)
    if (model.links[i].parent < 0) root_x.push_back(model.q_index[i]);
  const double sa = qa[root_x[0]];
  const double sb = qb[root_x[0]];
  for (int k : root_x) {
    qa[k] -= sa;
    qb[k] -= sb;
  }
  const double dq = (qa - qb).norm();
  const double dv = (a.qdot - b.qdot).norm();
  return std::sqrt(dq * dq + dv * dv);
}

WalkResult walk(const WalkSetup& setup, const Scenario& scenario) {
  scenario.validate();
  const RobotModel& model = *setup.model;
  if (!model.subsystem) throw ConfigError("walk: model has no subsystem");
  const auto domains = walking_domains(model);

  ProsthesisController pros(model.subsystem, setup.prosthesis, setup.gaits);
  ControllerConfig human_cfg = setup.human;
  HumanController human(setup.model, human_cfg, setup.gaits,
                        setup.human_tracked);

  // Prosthesis-side config reused for the full feedback-linearizing law
  // that evaluates the exact interaction wrench.
  const ControllerConfig& fl_cfg = setup.prosthesis;

  // Torque assembly bookkeeping.
  std::vector<int> sub_cols, rest_cols;
  for (int j = 0; j < model.nu(); ++j) {
    const bool in_sub =
        std::find(model.sub_to_full.begin(), model.sub_to_full.end(),
                  model.actuated[j]) != model.sub_to_full.end();
    (in_sub ? sub_cols : rest_cols).push_back(j);
  }

  FullState state = (scenario.init_mode == "explicit")
                        ? FullState{scenario.q0, scenario.qd0, 0.0}
                        : nominal_state(model, setup.gaits, scenario.start_domain);
  check_state(model, state);

  std::string domain = scenario.start_domain;
  std::vector<Vec3> targets =
      capture_contact_targets(model, state.q, domains.at(domain).holonomic);

  const double nominal_torso_z =
      point_position(model, kinematics(model, state.q), 0,
                     Vec2(0, -model.links[0].params.com_offset))
          .y();

  std::mt19937_64 rng(scenario.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const int sub_nq = model.subsystem->nq;
  const int nlam_full = domains.at("ps").holonomic.rows(model);
  const int nlam_bar =
      model.subsystem->constraint_sets.at("prosthesis_stance").rows(
          *model.subsystem);

  WalkResult result;
  result.log.columns = log_columns(model, nlam_full, sub_nq, nlam_bar);
  result.step_starts.push_back({domain, state});

  const double tick_dt = 1.0 / scenario.ctrl_rate;
  const int substeps = std::max(1, int(std::lround(tick_dt / scenario.dt)));
  const double dt = tick_dt / substeps;

  const int sub_foot =
      model.subsystem->constraint_sets.at("prosthesis_stance").contacts[0].body;
  const PhaseSpec sub_phase{
      phase_coefficients_domain(*model.subsystem, sub_foot, "ps"), 0.0, 1.0,
      0.0};
  const Vec pns_c = phase_coefficients_domain(
      model, model.constraint_sets.at("prosthesis_stance").contacts[0].body,
      "pns");
  double pns_anchor = (domain == "pns") ? pns_c.dot(state.q) : 0.0;

  double step_clock = 0;
  int guard_armed = 0;

  auto guard_fn = [&](const DomainSpec& dom) {
    return [&model, &dom](const FullState& s) {
      const Kinematics kin = kinematics(model, s.q);
      return point_position(model, kin, dom.guard_body, dom.guard_point).y();
    };
  };

  try {
    while (result.steps_completed < scenario.n_steps) {
      const DomainSpec& dom = domains.at(domain);
      const GaitParams& gait = setup.gaits.at(domain);

      // Exact interaction wrench under the full feedback-linearizing law;
      // the PD baseline never consumes it.
      Vec3 zeta = Vec3::Zero();
      if (setup.prosthesis.variant != Variant::PD) {
        const Vec u_fl =
            full_fl_torque(model, state, domain, setup.gaits,
                           setup.human_tracked, fl_cfg, pns_anchor);
        zeta = constraint_wrench(model, state, u_fl, dom.holonomic)
                   .interaction();
      }

      // Measurable bundle for the subsystem controller.
      MeasurableBundle bundle;
      if (domain == "ps") {
        const Vec xs = model.sub_coords(state.q).tail(sub_nq - 3);
        Vec xsd = model.sub_coords(state.qdot).tail(sub_nq - 3);
        if (setup.prosthesis.noise_std > 0)
          for (int i = 0; i < xsd.size(); ++i)
            xsd[i] += setup.prosthesis.noise_std * gauss(rng);
        PhaseSpec ph = sub_phase;
        ph.theta_plus = gait.theta_plus;
        ph.theta_minus = gait.theta_minus;
        const IkResult ik =
            stance_base_ik(*model.subsystem, xs, xsd, targets[0], ph);
        bundle.base_pose = ik.base_pose;
        bundle.base_vel = ik.base_vel;
        bundle.xs_pos = xs;
        bundle.xs_vel = xsd;
        bundle.zeta = zeta;
        bundle.t = state.t;
      } else {
        bundle = measurable_transform(model, state, zeta);
        if (setup.prosthesis.noise_std > 0) {
          for (int i = 0; i < bundle.xs_vel.size(); ++i)
            bundle.xs_vel[i] += setup.prosthesis.noise_std * gauss(rng);
          for (int i = 0; i < 3; ++i)
            bundle.base_vel[i] += setup.prosthesis.noise_std * gauss(rng);
        }
      }

      const ControlOutput pout = pros.tick(bundle, domain);
      const Vec u_r = human.tick(state, domain, pout.u_s);
      Vec u = Vec::Zero(model.nu());
      for (size_t i = 0; i < rest_cols.size(); ++i) u[rest_cols[i]] = u_r[int(i)];
      for (size_t i = 0; i < sub_cols.size(); ++i) u[sub_cols[i]] = pout.u_s[int(i)];

      // Log with the wrench under the applied torque.
      const Wrench lam_applied =
          constraint_wrench(model, state, u, dom.holonomic);
      SimLogRow row;
      row.t = state.t;
      row.step_index = result.steps_completed;
      row.domain = domain;
      row.tau = pout.tau;
      row.q = state.q;
      row.qd = state.qdot;
      row.u = u;
      row.y = pout.y.size() ? pout.y[0] : 0.0;
      row.ydot = pout.ydot.size() ? pout.ydot[0] : 0.0;
      row.V = pout.clf_value;
      row.Vdot_lhs = pout.clf_bound_lhs;
      row.Vdot_rhs = pout.clf_bound_rhs;
      row.delta = pout.delta;
      row.lambda = lam_applied.lambda;
      row.lambda_bar = Vec::Zero(nlam_bar);
      if (int(pout.lambda_bar.size()) == nlam_bar)
        row.lambda_bar = pout.lambda_bar;
      row.f_term = pout.f_term.size() ? pout.f_term : Vec::Zero(sub_nq);
      result.log.rows.push_back(std::move(row));

      // Integrate the tick with guard detection.
      bool switched = false;
      for (int s = 0; s < substeps && !switched; ++s) {
        const auto guard = guard_fn(dom);
        if (!guard_armed && guard(state) > scenario.guard_arm_height)
          guard_armed = 1;
        std::optional<GuardCrossing> ev;
        if (guard_armed)
          ev = detect_guard(model, state, u, dom.holonomic, dt, guard);
        if (ev) {
          const DomainSpec& next_dom = domains.at(dom.next);
          state = impact_map(model, ev->state, next_dom.holonomic);
          domain = dom.next;
          targets =
              capture_contact_targets(model, state.q, next_dom.holonomic);
          pros.on_impact();
          if (domain == "pns") pns_anchor = pns_c.dot(state.q);
          guard_armed = 0;
          step_clock = 0;
          ++result.steps_completed;
          result.step_starts.push_back({domain, state});
          switched = true;
        } else {
          state = integrate_step(model, state, u, dom.holonomic, dt, &targets,
                                 scenario.drift_tol);
          step_clock += dt;
        }
      }

      // Fall and watchdog checks at tick boundaries.
      const double torso_z =
          point_position(model, kinematics(model, state.q), 0,
                         Vec2(0, -model.links[0].params.com_offset))
              .y();
      if (torso_z < scenario.fall_fraction * nominal_torso_z) {
        result.status = WalkStatus::Fell;
        result.message = "torso below fall threshold";
        return result;
      }
      if (step_clock > scenario.max_step_time) {
        result.status = WalkStatus::Fell;
        result.message = "no guard crossing within max_step_time";
        return result;
      }
    }
  } catch (const SolverError& e) {
    result.status = WalkStatus::Failed;
    result.solver_failure = true;
    result.message = e.what();
    return result;
  } catch (const Error& e) {
    result.status = WalkStatus::Failed;
    result.message = e.what();
    return result;
  }
  result.status = WalkStatus::Ok;
  return result;
}

}  // namespace prosim
