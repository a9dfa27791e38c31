#include "prosim/constraints.hpp"

#include <Eigen/LU>
#include <Eigen/QR>

#include "prosim/model.hpp"

namespace prosim {

int HolonomicSet::rows(const RobotModel& model) const {
  int n = (include_fixed_joint && model.fixed_joint) ? 3 : 0;
  for (const auto& c : contacts) n += c.nrows();
  return n;
}

std::string HolonomicSet::row_owner(const RobotModel& model, int row) const {
  int at = 0;
  if (include_fixed_joint && model.fixed_joint) {
    if (row < 3) return "fixed_joint";
    at = 3;
  }
  for (const auto& c : contacts) {
    at += c.nrows();
    if (row < at) return c.name;
  }
  return "?";
}

// Selected rows of a 3 x eta pose Jacobian, appended at `row`.
static int append_rows(const Mat& src, const std::array<bool, 3>& which,
                       Mat& dst, int row) {
  for (int r = 0; r < 3; ++r)
    if (which[r]) dst.row(row++) = src.row(r);
  return row;
}

ConstraintJacobians constraint_jacobians(const RobotModel& model, RefVec q,
                                         RefVec qdot, const HolonomicSet& set) {
  const Kinematics kin = kinematics(model, q, qdot);
  const int nr = set.rows(model);
  ConstraintJacobians out;
  out.J.setZero(nr, model.nq);
  out.Jdot.setZero(nr, model.nq);

  Mat Ja, Jb, Jad, Jbd;
  int row = 0;
  if (set.include_fixed_joint && model.fixed_joint) {
    const FixedJoint& fj = *model.fixed_joint;
    point_jacobian_into(model, kin, fj.child_root, Vec2::Zero(), Ja);
    point_jacobian_into(model, kin, fj.parent_body, fj.parent_point, Jb);
    point_jacobian_dot_into(model, kin, fj.child_root, Vec2::Zero(), Jad);
    point_jacobian_dot_into(model, kin, fj.parent_body, fj.parent_point, Jbd);
    out.J.middleRows<3>(row) = Ja - Jb;
    out.Jdot.middleRows<3>(row) = Jad - Jbd;
    row += 3;
  }
  for (const auto& c : set.contacts) {
    point_jacobian_into(model, kin, c.body, c.point, Ja);
    point_jacobian_dot_into(model, kin, c.body, c.point, Jad);
    const int start = row;
    row = append_rows(Ja, c.rows, out.J, row);
    append_rows(Jad, c.rows, out.Jdot, start);
  }
  return out;
}

Vec constraint_residual(const RobotModel& model, RefVec q,
                        const HolonomicSet& set,
                        const std::vector<Vec3>& contact_targets) {
  const Kinematics kin = kinematics(model, q);
  const int nr = set.rows(model);
  Vec c = Vec::Zero(nr);
  int row = 0;
  if (set.include_fixed_joint && model.fixed_joint) {
    const FixedJoint& fj = *model.fixed_joint;
    const Vec3 child = frame_pose(model, kin, fj.child_root, Vec2::Zero());
    const Vec3 parent = frame_pose(model, kin, fj.parent_body, fj.parent_point);
    c.segment<3>(row) = child - parent;
    row += 3;
  }
  if (contact_targets.size() != set.contacts.size())
    throw ModelError("contact target count mismatch");
  for (size_t i = 0; i < set.contacts.size(); ++i) {
    const auto& spec = set.contacts[i];
    const Vec3 pose = frame_pose(model, kin, spec.body, spec.point);
    const Vec3 err = pose - contact_targets[i];
    for (int r = 0; r < 3; ++r)
      if (spec.rows[r]) c[row++] = err[r];
  }
  return c;
}

std::vector<Vec3> capture_contact_targets(const RobotModel& model, RefVec q,
                                          const HolonomicSet& set) {
  const Kinematics kin = kinematics(model, q);
  std::vector<Vec3> targets;
  targets.reserve(set.contacts.size());
  for (const auto& c : set.contacts)
    targets.push_back(frame_pose(model, kin, c.body, c.point));
  return targets;
}

// Reports which constraint makes the set rank deficient: first row whose
// addition does not grow the rank of J.
static std::string find_rank_culprit(const RobotModel& model,
                                     const HolonomicSet& set, const Mat& J) {
  Eigen::ColPivHouseholderQR<Mat> qr;
  int rank = 0;
  for (int r = 0; r < J.rows(); ++r) {
    qr.compute(J.topRows(r + 1).transpose());
    qr.setThreshold(1e-10);
    if (qr.rank() == rank) return set.row_owner(model, r);
    rank = qr.rank();
  }
  return "?";
}

struct KKTSolution {
  Vec qdd;
  Vec lambda;
};

// [ D  -J' ] [qdd   ]   [ rhs_f ]
// [ J   0  ] [lambda] = [ rhs_c ]
static KKTSolution kkt_solve(const RobotModel& model, const HolonomicSet& set,
                             const Mat& D, const Mat& J, const Vec& rhs_f,
                             const Vec& rhs_c) {
  const int n = int(D.rows()), m = int(J.rows());
  Mat K = Mat::Zero(n + m, n + m);
  K.topLeftCorner(n, n) = D;
  if (m > 0) {
    K.topRightCorner(n, m) = -J.transpose();
    K.bottomLeftCorner(m, n) = J;
  }
  Vec rhs(n + m);
  rhs.head(n) = rhs_f;
  rhs.tail(m) = rhs_c;

  Eigen::FullPivLU<Mat> lu(K);
  lu.setThreshold(1e-10);
  if (!lu.isInvertible()) {
    const std::string culprit = find_rank_culprit(model, set, J);
    throw ConstraintRankError(
        "singular constraint system; dependent constraint: " + culprit,
        culprit);
  }
  const Vec sol = lu.solve(rhs);
  KKTSolution out;
  out.qdd = sol.head(n);
  out.lambda = sol.tail(m);
  return out;
}

ConstrainedDynamics constrained_dynamics(const RobotModel& model,
                                         const FullState& state, RefVec u,
                                         const HolonomicSet& set,
                                         const std::vector<Vec3>* contact_targets,
                                         const Vec* extra_force) {
  check_state(model, state);
  if (u.size() != model.nu()) throw ModelError("input dimension mismatch");
  const Mat D = inertia_matrix(model, state.q);
  const Vec H = bias_forces(model, state.q, state.qdot);
  Vec rhs_f = -H;
  for (int j = 0; j < model.nu(); ++j) rhs_f[model.actuated[j]] += u[j];
  if (extra_force) {
    if (extra_force->size() != model.nq)
      throw ModelError("extra force dimension mismatch");
    rhs_f += *extra_force;
  }

  const auto cj = constraint_jacobians(model, state.q, state.qdot, set);
  Vec rhs_c = -(cj.Jdot * state.qdot);
  if (set.baumgarte && contact_targets) {
    const Vec c = constraint_residual(model, state.q, set, *contact_targets);
    rhs_c -= 2.0 * set.bg_zeta * set.bg_omega * (cj.J * state.qdot) +
             set.bg_omega * set.bg_omega * c;
  }
  auto sol = kkt_solve(model, set, D, cj.J, rhs_f, rhs_c);
  ConstrainedDynamics out;
  out.qdd = std::move(sol.qdd);
  out.wrench.lambda = std::move(sol.lambda);
  return out;
}

Wrench constraint_wrench(const RobotModel& model, const FullState& state,
                         RefVec u, const HolonomicSet& set) {
  return constrained_dynamics(model, state, u, set).wrench;
}

Vec constrained_accel(const RobotModel& model, const FullState& state,
                      RefVec u, const HolonomicSet& set) {
  return constrained_dynamics(model, state, u, set).qdd;
}

FullState impact_map(const RobotModel& model, const FullState& pre,
                     const HolonomicSet& new_set) {
  check_state(model, pre);
  const Mat D = inertia_matrix(model, pre.q);
  const auto cj = constraint_jacobians(model, pre.q, pre.qdot, new_set);
  const int m = int(cj.J.rows());
  // D (qdot+ - qdot-) = J' Lambda,  J qdot+ = 0.
  auto sol = kkt_solve(model, new_set, D, cj.J, D * pre.qdot, Vec::Zero(m));
  FullState post = pre;
  post.qdot = std::move(sol.qdd);
  return post;
}

}  // namespace prosim
