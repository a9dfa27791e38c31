#pragma once

#include <array>
#include <string>
#include <vector>

#include "prosim/types.hpp"

namespace prosim {

struct RobotModel;
struct FullState;

// One pinned frame: selected rows of the world pose (x, z, pitch) of a
// point on a body are held at a fixed target.
struct ConstraintSpec {
  std::string name;
  int body = -1;
  Vec2 point = Vec2::Zero();
  std::array<bool, 3> rows = {true, true, true};

  int nrows() const { return int(rows[0]) + int(rows[1]) + int(rows[2]); }
};

// Active holonomic constraints. When the model has a fixed joint between
// its two trees and include_fixed_joint is set, the weld contributes the
// first three rows, so the wrench layout is (F_f, lambda_g).
//
// Baumgarte stabilization is off by default (the acceleration-level
// constraint is exact); the flag adds (2*zeta*omega, omega^2) feedback for
// drift studies and needs position targets at solve time.
struct HolonomicSet {
  bool include_fixed_joint = true;
  std::vector<ConstraintSpec> contacts;
  bool baumgarte = false;
  double bg_omega = 10.0;
  double bg_zeta = 1.0;

  int rows(const RobotModel& model) const;
  // Name of the constraint owning a given row (weld rows report the weld).
  std::string row_owner(const RobotModel& model, int row) const;
};

struct Wrench {
  Vec lambda;  // weld wrench stacked over contact wrenches

  Vec3 interaction() const {
    if (lambda.size() < 3) throw ModelError("wrench has no weld rows");
    return lambda.head<3>();
  }
};

struct ConstraintJacobians {
  Mat J;     // rows x eta
  Mat Jdot;  // same shape
};

ConstraintJacobians constraint_jacobians(const RobotModel& model, RefVec q,
                                         RefVec qdot, const HolonomicSet& set);

// Position-level residual c(q) against captured targets (one Vec3 pose per
// contact, weld target is identically zero). Used by the drift monitor.
Vec constraint_residual(const RobotModel& model, RefVec q,
                        const HolonomicSet& set,
                        const std::vector<Vec3>& contact_targets);

std::vector<Vec3> capture_contact_targets(const RobotModel& model, RefVec q,
                                          const HolonomicSet& set);

struct ConstrainedDynamics {
  Vec qdd;
  Wrench wrench;
};

// Joint solve of the dynamics and constraint equations as one KKT system;
// no explicit inertia inverse. Targets are only consumed when Baumgarte
// stabilization is enabled on the set. `extra_force` is an additional
// generalized force (e.g. a measured interaction wrench mapped through a
// Jacobian transpose).
ConstrainedDynamics constrained_dynamics(
    const RobotModel& model, const FullState& state, RefVec u,
    const HolonomicSet& set, const std::vector<Vec3>* contact_targets = nullptr,
    const Vec* extra_force = nullptr);

Wrench constraint_wrench(const RobotModel& model, const FullState& state,
                         RefVec u, const HolonomicSet& set);

Vec constrained_accel(const RobotModel& model, const FullState& state,
                      RefVec u, const HolonomicSet& set);

// Plastic impact under a new constraint set: q is unchanged, velocities are
// projected so the new constraints are satisfied.
FullState impact_map(const RobotModel& model, const FullState& pre,
                     const HolonomicSet& new_set);

}  // namespace prosim
