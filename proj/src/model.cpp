#include "prosim/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace prosim {

void RobotModel::finalize() {
  nq = 0;
  q_index.assign(links.size(), -1);
  coord_link.clear();
  for (size_t i = 0; i < links.size(); ++i) {
    const Link& l = links[i];
    if (l.parent >= int(i)) throw ModelError("links must be parent-ordered");
    if (l.parent < 0 && l.joint != JointType::Floating)
      throw ModelError("tree root '" + l.name + "' must use a floating joint");
    if (l.parent >= 0 && l.joint != JointType::Revolute)
      throw ModelError("link '" + l.name + "' must use a revolute joint");
    q_index[i] = nq;
    const int nc = (l.joint == JointType::Floating) ? 3 : 1;
    for (int c = 0; c < nc; ++c) coord_link.push_back(int(i));
    nq += nc;
  }
  validate();

  subsystem.reset();
  sub_to_full.clear();
  if (fixed_joint) {
    auto sub = std::make_shared<RobotModel>();
    sub->name = name + "/subsystem";
    sub->gravity = gravity;
    std::vector<int> link_map(links.size(), -1);
    for (size_t i = 0; i < links.size(); ++i) {
      const Link& l = links[i];
      const bool in_sub =
          (int(i) == fixed_joint->child_root) ||
          (l.parent >= 0 && link_map[l.parent] >= 0);
      if (!in_sub) continue;
      Link copy = l;
      copy.parent = (l.parent >= 0) ? link_map[l.parent] : -1;
      link_map[i] = int(sub->links.size());
      sub->links.push_back(copy);
      const int nc = (l.joint == JointType::Floating) ? 3 : 1;
      for (int c = 0; c < nc; ++c) sub_to_full.push_back(q_index[i] + c);
    }
    sub->finalize_subsystem_stub_ = true;
    sub->finalize();
    // Map actuated coordinates into subsystem numbering.
    for (int k : actuated) {
      auto it = std::find(sub_to_full.begin(), sub_to_full.end(), k);
      if (it != sub_to_full.end())
        sub->actuated.push_back(int(it - sub_to_full.begin()));
    }
    sub->part_f = {0, 1, 2};
    for (int c = 3; c < sub->nq; ++c) sub->part_s.push_back(c);
    // Subsystem contact sets: contacts whose body lives in the child tree.
    for (const auto& [set_name, set] : constraint_sets) {
      HolonomicSet ss;
      ss.include_fixed_joint = false;
      for (const auto& c : set.contacts) {
        if (link_map[c.body] >= 0) {
          ConstraintSpec cc = c;
          cc.body = link_map[c.body];
          ss.contacts.push_back(cc);
        }
      }
      sub->constraint_sets[set_name] = ss;
    }
    sub->validate();
    subsystem = sub;

    // q_f must be exactly the child root's floating coordinates.
    const int base = q_index[fixed_joint->child_root];
    if (part_f != std::vector<int>{base, base + 1, base + 2})
      throw ModelError("partition q_f must be the weld child's base coords");
  }
}

void RobotModel::validate() const {
  for (const Link& l : links) {
    const LinkParams& p = l.params;
    if (!(p.mass > 0)) throw ModelError("link '" + l.name + "': mass must be > 0");
    if (!(p.length > 0))
      throw ModelError("link '" + l.name + "': length must be > 0");
    if (p.inertia_com < 0)
      throw ModelError("link '" + l.name + "': inertia_com must be >= 0");
    if (p.com_offset < 0 || p.com_offset > p.length)
      throw ModelError("link '" + l.name + "': com_offset outside [0, length]");
  }
  for (int k : actuated)
    if (k < 0 || k >= nq || !is_rotational_coord(k) ||
        links[coord_link[k]].joint != JointType::Revolute)
      throw ModelError("actuated coordinates must be revolute joints");
  if (std::set<int>(actuated.begin(), actuated.end()).size() != actuated.size())
    throw ModelError("duplicate actuated coordinate");
  if (finalize_subsystem_stub_) return;  // partition checked on the full model

  if (!part_l.empty() || !part_f.empty() || !part_s.empty() || fixed_joint) {
    std::vector<int> all;
    for (auto* part : {&part_l, &part_f, &part_s})
      all.insert(all.end(), part->begin(), part->end());
    std::sort(all.begin(), all.end());
    std::vector<int> expect(nq);
    for (int i = 0; i < nq; ++i) expect[i] = i;
    if (all != expect)
      throw ModelError("partition sets must be disjoint and cover all coords");
    if (part_f.size() != 3) throw ModelError("partition q_f must have 3 coords");
    if (!fixed_joint) throw ModelError("partitioned model needs a fixed joint");
    if (fixed_joint->child_root < 0 ||
        fixed_joint->child_root >= int(links.size()) ||
        links[fixed_joint->child_root].parent != -1)
      throw ModelError("fixed joint child must be a tree root");
    if (fixed_joint->parent_body < 0 ||
        fixed_joint->parent_body >= int(links.size()))
      throw ModelError("fixed joint parent body out of range");
  }
  if (torque_limit.size() != 0 && torque_limit.size() != int(actuated.size()))
    throw ModelError("torque_limit size must match actuated count");
}

Mat RobotModel::actuation_matrix() const {
  Mat B = Mat::Zero(nq, nu());
  for (int j = 0; j < nu(); ++j) B(actuated[j], j) = 1.0;
  return B;
}

int RobotModel::link_id(const std::string& link_name) const {
  for (size_t i = 0; i < links.size(); ++i)
    if (links[i].name == link_name) return int(i);
  throw ModelError("unknown link '" + link_name + "'");
}

bool RobotModel::is_rotational_coord(int k) const {
  const Link& l = links[coord_link[k]];
  if (l.joint == JointType::Revolute) return true;
  return k == q_index[coord_link[k]] + 2;  // floating pitch coordinate
}

Vec RobotModel::sub_coords(RefVec q_full) const {
  Vec out(sub_to_full.size());
  for (size_t i = 0; i < sub_to_full.size(); ++i) out[i] = q_full[sub_to_full[i]];
  return out;
}

void check_state(const RobotModel& model, const FullState& x) {
  if (x.q.size() != model.nq || x.qdot.size() != model.nq)
    throw ModelError("state dimension mismatch");
  if (!x.q.allFinite() || !x.qdot.allFinite())
    throw ModelError("state has non-finite entries");
}

Vec MeasurableBundle::qbar() const {
  Vec out(3 + xs_pos.size());
  out.head<3>() = base_pose;
  out.tail(xs_pos.size()) = xs_pos;
  return out;
}

Vec MeasurableBundle::qbardot() const {
  Vec out(3 + xs_vel.size());
  out.head<3>() = base_vel;
  out.tail(xs_vel.size()) = xs_vel;
  return out;
}

// --- kinematics -----------------------------------------------------------

static Kinematics kin_impl(const RobotModel& model, RefVec q, const Vec* qdot) {
  if (q.size() != model.nq) throw ModelError("q dimension mismatch");
  Kinematics kin;
  const int n = model.nlinks();
  kin.origin.resize(n);
  kin.pitch.resize(n);
  kin.origin_vel.assign(n, Vec2::Zero());
  kin.pitchdot.assign(n, 0.0);
  kin.has_velocity = (qdot != nullptr);
  for (int i = 0; i < n; ++i) {
    const Link& l = model.links[i];
    const int k = model.q_index[i];
    if (l.parent < 0) {
      kin.origin[i] = Vec2(q[k], q[k + 1]);
      kin.pitch[i] = q[k + 2];
      if (qdot) {
        kin.origin_vel[i] = Vec2((*qdot)[k], (*qdot)[k + 1]);
        kin.pitchdot[i] = (*qdot)[k + 2];
      }
    } else {
      const int p = l.parent;
      const Vec2 r = rot2(kin.pitch[p]) * l.joint_origin;
      kin.origin[i] = kin.origin[p] + r;
      kin.pitch[i] = kin.pitch[p] + q[k];
      if (qdot) {
        kin.origin_vel[i] = kin.origin_vel[p] + kin.pitchdot[p] * perp(r);
        kin.pitchdot[i] = kin.pitchdot[p] + (*qdot)[k];
      }
    }
  }
  return kin;
}

Kinematics kinematics(const RobotModel& model, RefVec q) {
  return kin_impl(model, q, nullptr);
}

Kinematics kinematics(const RobotModel& model, RefVec q, RefVec qdot) {
  if (qdot.size() != model.nq) throw ModelError("qdot dimension mismatch");
  Vec qd = qdot;
  return kin_impl(model, q, &qd);
}

static void check_body(const RobotModel& model, int body) {
  if (body < 0 || body >= model.nlinks()) throw ModelError("invalid body id");
}

Vec2 point_position(const RobotModel& model, const Kinematics& kin, int body,
                    const Vec2& local) {
  check_body(model, body);
  return kin.origin[body] + rot2(kin.pitch[body]) * local;
}

Vec2 point_velocity(const RobotModel& model, const Kinematics& kin, int body,
                    const Vec2& local) {
  check_body(model, body);
  return kin.origin_vel[body] +
         kin.pitchdot[body] * perp(rot2(kin.pitch[body]) * local);
}

Vec3 frame_pose(const RobotModel& model, const Kinematics& kin, int body,
                const Vec2& local) {
  const Vec2 p = point_position(model, kin, body, local);
  return Vec3(p.x(), p.y(), kin.pitch[body]);
}

Vec3 frame_velocity(const RobotModel& model, const Kinematics& kin, int body,
                    const Vec2& local) {
  const Vec2 v = point_velocity(model, kin, body, local);
  return Vec3(v.x(), v.y(), kin.pitchdot[body]);
}

// Columns of the point Jacobian: a rotational ancestor coordinate k with
// its joint anchored at world point a contributes perp(p - a) to the
// position rows and 1 to the pitch row; root translations contribute unit
// columns. Time derivatives follow by differentiating those expressions.
void point_jacobian_into(const RobotModel& model, const Kinematics& kin,
                         int body, const Vec2& local, Mat& J) {
  check_body(model, body);
  J.setZero(3, model.nq);
  const Vec2 p = point_position(model, kin, body, local);
  int i = body;
  while (i >= 0) {
    const Link& l = model.links[i];
    const int k = model.q_index[i];
    if (l.parent < 0) {
      J(0, k) = 1.0;
      J(1, k + 1) = 1.0;
      const Vec2 lever = perp(p - kin.origin[i]);
      J(0, k + 2) = lever.x();
      J(1, k + 2) = lever.y();
      J(2, k + 2) = 1.0;
    } else {
      const Vec2 lever = perp(p - kin.origin[i]);
      J(0, k) = lever.x();
      J(1, k) = lever.y();
      J(2, k) = 1.0;
    }
    i = l.parent;
  }
}

void point_jacobian_dot_into(const RobotModel& model, const Kinematics& kin,
                             int body, const Vec2& local, Mat& Jdot) {
  check_body(model, body);
  if (!kin.has_velocity)
    throw ModelError("point_jacobian_dot needs velocity kinematics");
  Jdot.setZero(3, model.nq);
  const Vec2 pd = point_velocity(model, kin, body, local);
  int i = body;
  while (i >= 0) {
    const Link& l = model.links[i];
    const int k = model.q_index[i];
    const int col = (l.parent < 0) ? k + 2 : k;
    const Vec2 lever_dot = perp(pd - kin.origin_vel[i]);
    Jdot(0, col) = lever_dot.x();
    Jdot(1, col) = lever_dot.y();
    i = l.parent;
  }
}

Mat point_jacobian(const RobotModel& model, RefVec q, int body,
                   const Vec2& local) {
  const Kinematics kin = kinematics(model, q);
  Mat J;
  point_jacobian_into(model, kin, body, local, J);
  return J;
}

// --- dynamics -------------------------------------------------------------

Mat inertia_matrix(const RobotModel& model, RefVec q) {
  const Kinematics kin = kinematics(model, q);
  Mat D = Mat::Zero(model.nq, model.nq);
  Mat J;
  for (int i = 0; i < model.nlinks(); ++i) {
    const LinkParams& p = model.links[i].params;
    point_jacobian_into(model, kin, i, Vec2(0, -p.com_offset), J);
    const auto Jp = J.topRows<2>();
    const auto Jr = J.row(2);
    D.noalias() += p.mass * (Jp.transpose() * Jp);
    D.noalias() += p.inertia_com * (Jr.transpose() * Jr);
  }
  return D;
}

// Per-link COM velocity and its partial derivatives with respect to each
// rotational coordinate, used for the dE/dq term of the bias vector.
Vec bias_forces(const RobotModel& model, RefVec q, RefVec qdot) {
  if (q.size() != model.nq || qdot.size() != model.nq)
    throw ModelError("bias_forces dimension mismatch");
  const Kinematics kin = kinematics(model, q, qdot);
  const int nq = model.nq;
  Vec H = Vec::Zero(nq);

  Mat J, Jdot;
  std::vector<int> rot_coords;   // rotational coordinates on the chain
  std::vector<Vec2> anchors;     // joint anchor of each, root first
  std::vector<double> rates;     // qdot of each
  for (int i = 0; i < model.nlinks(); ++i) {
    const LinkParams& prm = model.links[i].params;
    const Vec2 local(0, -prm.com_offset);
    point_jacobian_into(model, kin, i, local, J);
    point_jacobian_dot_into(model, kin, i, local, Jdot);

    const Vec2 v = point_velocity(model, kin, i, local);
    const double w = kin.pitchdot[i];

    // Ddot qdot accumulated as Jdot' M (J qdot) + J' M (Jdot qdot).
    Vec3 Mv(prm.mass * v.x(), prm.mass * v.y(), prm.inertia_com * w);
    Vec3 Jd_qd = Jdot * qdot;
    Vec3 MJdqd(prm.mass * Jd_qd.x(), prm.mass * Jd_qd.y(),
               prm.inertia_com * Jd_qd.z());
    H.noalias() += Jdot.transpose() * Mv;
    H.noalias() += J.transpose() * MJdqd;

    // Gravity: dV/dq = m g d(z_com)/dq = m g * z-row of J.
    H.noalias() += prm.mass * model.gravity * J.row(1).transpose();

    // -1/2 d/dq (qdot' D qdot) = -sum_l m v' dv/dq  (pitch rate is
    // configuration-independent). Chain bookkeeping:
    rot_coords.clear();
    anchors.clear();
    rates.clear();
    {
      int b = i;
      while (b >= 0) {
        const Link& l = model.links[b];
        const int k = model.q_index[b];
        const int coord = (l.parent < 0) ? k + 2 : k;
        rot_coords.push_back(coord);
        anchors.push_back(kin.origin[b]);
        rates.push_back(qdot[coord]);
        b = l.parent;
      }
      std::reverse(rot_coords.begin(), rot_coords.end());  // root first
      std::reverse(anchors.begin(), anchors.end());
      std::reverse(rates.begin(), rates.end());
    }
    const Vec2 p = point_position(model, kin, i, local);
    const int nc = int(rot_coords.size());
    for (int a = 0; a < nc; ++a) {  // derivative coordinate k = rot_coords[a]
      const Vec2 dp = perp(p - anchors[a]);
      Vec2 dv = Vec2::Zero();
      for (int b = 0; b < nc; ++b) {
        // d a_b / d q_a is nonzero only when joint a is strictly above b.
        const Vec2 da = (a < b) ? perp(anchors[b] - anchors[a]) : Vec2::Zero();
        dv += rates[b] * perp(dp - da);
      }
      H[rot_coords[a]] -= prm.mass * v.dot(dv);
    }
  }
  return H;
}

Energies energies(const RobotModel& model, RefVec q, RefVec qdot) {
  if (q.size() != model.nq || qdot.size() != model.nq)
    throw ModelError("energies dimension mismatch");
  const Kinematics kin = kinematics(model, q, qdot);
  Energies e;
  for (int i = 0; i < model.nlinks(); ++i) {
    const LinkParams& p = model.links[i].params;
    const Vec2 local(0, -p.com_offset);
    const Vec2 v = point_velocity(model, kin, i, local);
    const double w = kin.pitchdot[i];
    e.kinetic += 0.5 * p.mass * v.squaredNorm() + 0.5 * p.inertia_com * w * w;
    e.potential += p.mass * model.gravity * point_position(model, kin, i, local).y();
  }
  return e;
}

SubsystemTerms subsystem_terms(const RobotModel& model, RefVec qbar,
                               RefVec qbardot) {
  if (!model.subsystem) throw ModelError("model has no subsystem");
  const RobotModel& sub = *model.subsystem;
  if (qbar.size() != sub.nq) throw ModelError("qbar dimension mismatch");
  SubsystemTerms out;
  out.D = inertia_matrix(sub, qbar);
  out.H = bias_forces(sub, qbar, qbardot);
  out.B = sub.actuation_matrix();
  const Kinematics kin = kinematics(sub, qbar);
  point_jacobian_into(sub, kin, 0, Vec2::Zero(), out.Jf);
  return out;
}

MeasurableBundle measurable_transform(const RobotModel& model,
                                      const FullState& x, const Vec3& Ff) {
  check_state(model, x);
  if (!model.subsystem) throw ModelError("model has no subsystem");
  MeasurableBundle b;
  b.t = x.t;
  for (int i = 0; i < 3; ++i) {
    b.base_pose[i] = x.q[model.part_f[i]];
    b.base_vel[i] = x.qdot[model.part_f[i]];
  }
  b.xs_pos.resize(model.part_s.size());
  b.xs_vel.resize(model.part_s.size());
  for (size_t i = 0; i < model.part_s.size(); ++i) {
    b.xs_pos[i] = x.q[model.part_s[i]];
    b.xs_vel[i] = x.qdot[model.part_s[i]];
  }
  b.zeta = Ff;
  return b;
}

}  // namespace prosim
