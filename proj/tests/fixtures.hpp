#pragma once

#include <memory>
#include <string>

#include "prosim/config_io.hpp"
#include "prosim/model.hpp"

namespace fixtures {

using namespace prosim;

// Point-mass pendulum on a floating base (base coordinates locked to zero
// in the tests that need a pinned pivot).
inline RobotModel pendulum(double m = 1.2, double l = 0.7) {
  RobotModel model;
  model.name = "pendulum";
  Link base;
  base.name = "base";
  base.params = {1.0, 0.0, 0.0, 0.1};
  // zero-size pivot body: give it token inertia so D stays positive definite
  base.params.inertia_com = 0.05;
  model.links.push_back(base);
  Link rod;
  rod.name = "rod";
  rod.parent = 0;
  rod.joint = JointType::Revolute;
  rod.joint_origin = Vec2(0, 0);
  rod.params = {m, l, 0.0, l};  // point mass at the tip
  model.links.push_back(rod);
  model.actuated = {3};
  model.finalize();
  return model;
}

struct TwoLinkParams {
  double m1 = 2.1, l1 = 0.6, lc1 = 0.25, I1 = 0.03;
  double m2 = 1.4, l2 = 0.5, lc2 = 0.21, I2 = 0.015;
};

inline RobotModel double_pendulum(const TwoLinkParams& p = {}) {
  RobotModel model;
  model.name = "double_pendulum";
  Link base;
  base.name = "base";
  base.params = {0.8, 0.0, 0.02, 0.1};
  model.links.push_back(base);
  Link l1;
  l1.name = "link1";
  l1.parent = 0;
  l1.joint = JointType::Revolute;
  l1.joint_origin = Vec2(0, 0);
  l1.params = {p.m1, p.lc1, p.I1, p.l1};
  model.links.push_back(l1);
  Link l2;
  l2.name = "link2";
  l2.parent = 1;
  l2.joint = JointType::Revolute;
  l2.joint_origin = Vec2(0, -p.l1);
  l2.params = {p.m2, p.lc2, p.I2, p.l2};
  model.links.push_back(l2);
  model.actuated = {3, 4};
  model.finalize();
  return model;
}

// Uniform rod as a single free link.
inline RobotModel free_rod(double m = 1.5, double l = 0.9) {
  RobotModel model;
  model.name = "rod";
  Link rod;
  rod.name = "rod";
  rod.params = {m, l / 2, m * l * l / 12.0, l};
  model.links.push_back(rod);
  model.finalize();
  return model;
}

inline std::string data_path(const std::string& file) {
  return std::string(PROSIM_DATA_DIR) + "/" + file;
}

inline std::shared_ptr<RobotModel> paper_model() {
  return load_model(data_path("model_8link.json"));
}

// Constraint-consistent random state: the weld is closed exactly and the
// velocity is projected onto the active constraint surface.
inline FullState random_constrained_state(const RobotModel& model,
                                          const HolonomicSet& set,
                                          std::mt19937_64& gen,
                                          double angle_range = 0.4,
                                          double vel_range = 1.0) {
  std::uniform_real_distribution<double> ang(-angle_range, angle_range);
  std::uniform_real_distribution<double> vel(-vel_range, vel_range);
  FullState s;
  s.q = Vec::Zero(model.nq);
  s.qdot = Vec::Zero(model.nq);
  for (int k = 0; k < model.nq; ++k) {
    s.q[k] = ang(gen);
    s.qdot[k] = vel(gen);
  }
  // Keep roots near a standing pose so contact geometry stays sane.
  for (int i = 0; i < model.nlinks(); ++i)
    if (model.links[i].parent < 0) {
      const int k = model.q_index[i];
      s.q[k] *= 0.2;
      s.q[k + 1] = 1.0 + 0.2 * ang(gen);
    }
  // Close the weld exactly.
  if (model.fixed_joint) {
    const FixedJoint& fj = *model.fixed_joint;
    const Kinematics kin = kinematics(model, s.q);
    const Vec3 pose = frame_pose(model, kin, fj.parent_body, fj.parent_point);
    const int k = model.q_index[fj.child_root];
    s.q[k] = pose[0];
    s.q[k + 1] = pose[1];
    s.q[k + 2] = pose[2];
  }
  // Project velocities onto J qdot = 0 (minimum-norm correction).
  const auto cj = constraint_jacobians(model, s.q, s.qdot, set);
  if (cj.J.rows() > 0) {
    const Mat JJt = cj.J * cj.J.transpose();
    s.qdot -= cj.J.transpose() * JJt.ldlt().solve(cj.J * s.qdot);
  }
  return s;
}

}  // namespace fixtures
