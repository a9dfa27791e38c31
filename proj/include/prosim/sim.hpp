#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "prosim/control.hpp"
#include "prosim/gait.hpp"
#include "prosim/model.hpp"

namespace prosim {

// One continuous walking domain. The guard is the height of the point that
// becomes constrained in the next domain.
struct DomainSpec {
  std::string id;    // "ps" or "pns"
  std::string next;  // successor domain
  HolonomicSet holonomic;
  int guard_body = -1;
  Vec2 guard_point = Vec2::Zero();
};

std::map<std::string, DomainSpec> walking_domains(const RobotModel& model);

struct SimLogRow {
  double t = 0;
  int step_index = 0;
  std::string domain;
  double tau = 0;
  Vec q, qd, u;
  double y = 0, ydot = 0;
  double V = 0, Vdot_lhs = 0, Vdot_rhs = 0, delta = 0;
  Vec lambda;      // full-order wrench under the applied torque
  Vec lambda_bar;  // subsystem QP wrench decision (zero-padded otherwise)
  Vec f_term;      // joint-space force term used by the controller
};

struct SimLog {
  std::vector<std::string> columns;
  std::vector<SimLogRow> rows;

  std::string to_csv() const;
  static SimLog from_csv(const std::string& text);
};

enum class WalkStatus { Ok, Fell, Failed };

struct StepStart {
  std::string domain;
  FullState state;
};

struct WalkResult {
  SimLog log;
  WalkStatus status = WalkStatus::Ok;
  bool solver_failure = false;
  int steps_completed = 0;
  std::string message;
  std::vector<StepStart> step_starts;
};

struct Scenario {
  double dt = 1e-4;          // integrator step
  double ctrl_rate = 1000.0;  // controller rate, Hz
  int n_steps = 10;           // footsteps to simulate
  std::uint64_t seed = 0;
  std::string start_domain = "ps";
  std::string init_mode = "nominal";  // "nominal" or "explicit"
  Vec q0, qd0;
  double fall_fraction = 0.6;      // of the nominal torso height
  double guard_arm_height = 1e-3;  // m before strike detection arms
  double drift_tol = 1e-6;
  double max_step_time = 3.0;  // watchdog, s of sim time per footstep

  void validate() const;
};

// RK4 step of the constrained dynamics under zero-order-hold torque.
// Monitors the position-level constraint residual when targets are given.
FullState integrate_step(const RobotModel& model, const FullState& state,
                         RefVec u, const HolonomicSet& holo, double dt,
                         const std::vector<Vec3>* contact_targets = nullptr,
                         double drift_tol = 1e-6);

struct GuardCrossing {
  double fraction = 0;  // of the step that was integrated
  FullState state;      // interpolated state at the crossing
};

// Bisection for a descending zero crossing of the guard within one
// integrator step. Ascending and grazing crossings return nothing.
std::optional<GuardCrossing> detect_guard(
    const RobotModel& model, const FullState& state, RefVec u,
    const HolonomicSet& holo, double dt,
    const std::function<double(const FullState&)>& guard);

// Closed-form base reconstruction for a stance chain with the foot pose
// held: positions by walking the chain up from the anchored contact point,
// velocities from the stance constraint rows.
struct IkResult {
  Vec3 base_pose;
  Vec3 base_vel;
  double tau = 0;
};

IkResult stance_base_ik(const RobotModel& submodel, RefVec xs_pos,
                        RefVec xs_vel, const Vec3& foot_anchor,
                        const PhaseSpec& phase);

// Nominal state on the gait at tau = 0 of the given domain, stance foot
// anchored flat at the origin.
FullState nominal_state(const RobotModel& model,
                        const std::map<std::string, GaitParams>& gaits,
                        const std::string& domain);

struct WalkSetup {
  std::shared_ptr<const RobotModel> model;
  std::map<std::string, GaitParams> gaits;
  ControllerConfig prosthesis;  // subsystem controller configuration
  ControllerConfig human;       // human-side tracking configuration
  std::vector<std::string> human_tracked;
};

WalkResult walk(const WalkSetup& setup, const Scenario& scenario);

// Distance between two step-start states after shifting the forward
// translation out (both trees' root x coordinates are made relative).
double step_state_distance(const RobotModel& model, const FullState& a,
                           const FullState& b);

}  // namespace prosim
