#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "prosim/constraints.hpp"
#include "prosim/types.hpp"

// Planar rigid-body chains.
//
// Conventions (shared by every oracle in the test suite):
//   - world frame: x forward, z up; pitch rotates counterclockwise in the
//     x-z plane (rot2 in types.hpp); gravity acts along -z.
//   - a tree root carries a 3-DOF floating joint with absolute coordinates
//     (x, z, pitch) of its frame origin; every other link carries a
//     revolute joint whose coordinate is the pitch relative to the parent.
//   - a link frame sits at its parent joint; the link body extends along
//     local (0, -1), so at zero pitch everything hangs straight down. The
//     center of mass is at (0, -com_offset), the default distal point at
//     (0, -length).
//
// A model may consist of two trees tied together by a 3-DOF fixed joint
// (weld). The weld is enforced as a holonomic constraint, which makes the
// inertia matrix block-diagonal across the trees and lets the second tree
// double as a standalone subsystem with the weld wrench as an input.

namespace prosim {

enum class JointType { Floating, Revolute };

struct LinkParams {
  double mass = 0;         // kg
  double com_offset = 0;   // m, down the link axis from the parent joint
  double inertia_com = 0;  // kg m^2 about the center of mass
  double length = 0;       // m
};

struct Link {
  std::string name;
  int parent = -1;  // -1 for tree roots
  JointType joint = JointType::Floating;
  Vec2 joint_origin = Vec2::Zero();  // parent-frame attach point (revolute)
  LinkParams params;
};

struct FixedJoint {
  int parent_body = -1;
  Vec2 parent_point = Vec2::Zero();
  int child_root = -1;  // must be a tree root
};

struct RobotModel {
  std::string name;
  std::vector<Link> links;
  double gravity = 9.81;

  // Coordinate partition (q_l, q_f, q_s) as coordinate indices.
  std::vector<int> part_l, part_f, part_s;
  // Actuated coordinate indices; column order of B (rest first, then
  // subsystem).
  std::vector<int> actuated;

  std::optional<FixedJoint> fixed_joint;
  std::map<std::string, HolonomicSet> constraint_sets;
  Vec torque_limit;  // per actuated column, N m

  // Derived on finalize().
  int nq = 0;
  std::vector<int> q_index;     // first coordinate of each link
  std::vector<int> coord_link;  // owning link of each coordinate

  void finalize();  // assigns coordinates, validates, builds the subsystem
  void validate() const;

  int nlinks() const { return int(links.size()); }
  int nu() const { return int(actuated.size()); }
  Mat actuation_matrix() const;  // B, eta x m selector
  int link_id(const std::string& link_name) const;
  bool is_rotational_coord(int k) const;

  // Subsystem rooted at the weld (coordinates (q_f, q_s) of the full
  // model). Null when the model has no fixed joint.
  std::shared_ptr<const RobotModel> subsystem;
  std::vector<int> sub_to_full;  // subsystem coordinate -> full coordinate
  Vec sub_coords(RefVec q_full) const;

  bool finalize_subsystem_stub_ = false;  // relaxes partition validation
};

struct FullState {
  Vec q;
  Vec qdot;
  double t = 0;
};

void check_state(const RobotModel& model, const FullState& x);

// Subsystem bundle: everything the prosthesis-side controller is allowed
// to see. zeta is the weld interaction wrench (measured or estimated).
struct MeasurableBundle {
  Vec3 base_pose = Vec3::Zero();
  Vec3 base_vel = Vec3::Zero();
  Vec xs_pos;  // subsystem joint angles
  Vec xs_vel;
  Vec3 zeta = Vec3::Zero();
  double t = 0;

  Vec qbar() const;
  Vec qbardot() const;
};

// --- kinematics -----------------------------------------------------------

struct Kinematics {
  std::vector<Vec2> origin;      // world position of each link frame
  std::vector<double> pitch;     // absolute pitch of each link
  std::vector<Vec2> origin_vel;  // world velocity of each link frame
  std::vector<double> pitchdot;
  bool has_velocity = false;
};

Kinematics kinematics(const RobotModel& model, RefVec q);
Kinematics kinematics(const RobotModel& model, RefVec q, RefVec qdot);

Vec2 point_position(const RobotModel& model, const Kinematics& kin, int body,
                    const Vec2& local);
Vec2 point_velocity(const RobotModel& model, const Kinematics& kin, int body,
                    const Vec2& local);
Vec3 frame_pose(const RobotModel& model, const Kinematics& kin, int body,
                const Vec2& local);
Vec3 frame_velocity(const RobotModel& model, const Kinematics& kin, int body,
                    const Vec2& local);

// 3 x eta Jacobian of the world pose (x, z, pitch) of a point on a body.
Mat point_jacobian(const RobotModel& model, RefVec q, int body,
                   const Vec2& local);
void point_jacobian_into(const RobotModel& model, const Kinematics& kin,
                         int body, const Vec2& local, Mat& J);
// Time derivative of the above; requires velocity kinematics.
void point_jacobian_dot_into(const RobotModel& model, const Kinematics& kin,
                             int body, const Vec2& local, Mat& Jdot);

// --- dynamics -------------------------------------------------------------

// Composite-Jacobian inertia matrix, symmetric positive definite.
Mat inertia_matrix(const RobotModel& model, RefVec q);

// Coriolis/centrifugal plus gravity bias H(q, qdot), in the Christoffel
// form  H = Ddot qdot - 1/2 d/dq (qdot' D qdot) + dV/dq, all analytic.
Vec bias_forces(const RobotModel& model, RefVec q, RefVec qdot);

struct Energies {
  double kinetic = 0;
  double potential = 0;  // zero reference at z = 0
};
Energies energies(const RobotModel& model, RefVec q, RefVec qdot);

struct SubsystemTerms {
  Mat D;   // eta_bar x eta_bar
  Vec H;   // eta_bar
  Mat B;   // eta_bar x m_s
  Mat Jf;  // 3 x eta_bar, weld frame Jacobian (identity block at the base)
};

// Evaluated on the subsystem model; qbar = (q_f, q_s).
SubsystemTerms subsystem_terms(const RobotModel& model, RefVec qbar,
                               RefVec qbardot);

// T(x): base pose/velocity of the weld frame plus subsystem joint states,
// with the interaction wrench supplied by the caller (solved from the
// full-order constraint wrench or estimated).
MeasurableBundle measurable_transform(const RobotModel& model,
                                      const FullState& x, const Vec3& Ff);

}  // namespace prosim
