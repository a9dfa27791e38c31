#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "prosim/clf.hpp"
#include "prosim/estimate.hpp"
#include "prosim/gait.hpp"
#include "prosim/model.hpp"
#include "prosim/qpsolve.hpp"

namespace prosim {

enum class Variant { FL, PD, IDCLFQP, IDCLFQP_Ff, IDCLFQP_Fest };

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);

struct ControllerConfig {
  double kp = 100.0;  // output PD gains (1/s^2, 1/s); also the CLF weights
  double kd = 20.0;
  double sigma = 1e-3;  // regularization weight
  double rho = 1e3;     // relaxation weight
  double eps = 0.25;
  Vec u_max;  // per subsystem actuator, N m
  int n_avg = 1;
  Variant variant = Variant::IDCLFQP_Fest;
  double joint_kp = 250.0;  // joint-space PD (set-point joints, PD baseline)
  double joint_kd = 12.0;
  bool reset_estimator_on_impact = true;
  double noise_std = 0.0;  // velocity measurement noise, sim studies only

  std::vector<std::string> tracked_links;   // QP/CLF outputs, by link name
  std::vector<std::string> setpoint_links;  // PD set-point joints

  void validate() const;
};

// Affine map from actuator torques to output accelerations under the
// active constraints: yddot = a + M u, with the underlying qdd map kept
// for diagnostics.
struct AffineOutputMap {
  Vec a;
  Mat M;
  Vec qdd0;
  Mat qdd_u;
};

AffineOutputMap output_accel_map(const RobotModel& model, RefVec q, RefVec qdot,
                                 const HolonomicSet& holo, RefVec extra_force,
                                 const OutputBundle& ob);

// Exact output linearization: picks the torques on `free_cols` so the
// closed loop satisfies yddot = nu, with the remaining entries of u held
// at `u_fixed`. Throws when the decoupling block is singular.
Vec feedback_linearize(const AffineOutputMap& map, RefVec nu,
                       const std::vector<int>& free_cols, RefVec u_fixed);
Vec feedback_linearize(const AffineOutputMap& map, RefVec nu);

Vec pd_joint_controller(RefVec q, RefVec qdot, RefVec q_sp, RefVec qdot_sp,
                        double kp, double kd, RefVec u_max);

// Subsystem dynamics snapshot for one controller tick.
struct IdclfqpTerms {
  Mat D;
  Vec H;
  Mat B;
  Mat Jh;     // active subsystem contact rows (may be empty)
  Mat Jhdot;
  Vec force;  // joint-space interaction force term
};

// Inverse-dynamics CLF QP over [qdd, u, lambda, delta]: dynamics as a hard
// equality, contact rows soft in the cost, the CLF rate row relaxed by
// delta, and box bounds on the torques. `pinned_torques` adds one equality
// per externally commanded actuator (set-point joints).
QPProblem build_idclfqp(const IdclfqpTerms& t, const OutputBundle& ob,
                        const CLFData& clf, RefVec qbardot,
                        const ControllerConfig& cfg, RefVec upsilon_prev,
                        const std::vector<std::pair<int, double>>& pinned_torques);

struct ControlOutput {
  Vec u_s;
  Vec upsilon;  // QP solution (empty for non-QP variants)
  double clf_value = 0;
  double clf_bound_lhs = 0;  // LFV + LGV (Jydot qbdot + Jy qdd*)
  double clf_bound_rhs = 0;  // -(gamma/eps) V + delta*
  double delta = 0;
  double tau = 0;
  Vec lambda_bar;  // QP contact wrench decision
  Vec f_term;      // joint-space force term used this tick
  Vec y, ydot;
  QPStatus qp_status = QPStatus::Optimal;
};

// Prosthesis-side controller. Sees MeasurableBundle only: subsystem state,
// reconstructed base, and the interaction wrench (exact or estimated).
class ProsthesisController {
 public:
  ProsthesisController(std::shared_ptr<const RobotModel> submodel,
                       ControllerConfig cfg,
                       std::map<std::string, GaitParams> gaits);

  ControlOutput tick(const MeasurableBundle& bundle, const std::string& domain);
  void on_impact();  // invalidates the finite-difference window

  const CLFData& clf() const { return clf_; }
  const ControllerConfig& config() const { return cfg_; }
  const EstimatorState& estimator() const { return est_; }

 private:
  ControlOutput stance_qp_tick(const MeasurableBundle& bundle,
                               const GaitParams& gait);
  ControlOutput swing_fl_tick(const MeasurableBundle& bundle,
                              const GaitParams& gait);
  ControlOutput pd_tick(const MeasurableBundle& bundle, const GaitParams& gait);

  OutputSpec domain_spec(const std::string& domain) const;

  std::shared_ptr<const RobotModel> sub_;
  ControllerConfig cfg_;
  std::map<std::string, GaitParams> gaits_;
  CLFData clf_;
  EstimatorState est_;
  Vec upsilon_prev_;
  std::vector<int> warm_active_;
  OutputSpec out_spec_;
  std::map<std::string, Vec> phase_c_;  // progression coefficients per domain
  std::optional<double> phase_anchor_;  // swing progression origin
  std::vector<int> tracked_rows_;         // alpha rows of tracked outputs
  std::vector<int> setpoint_coords_;      // qbar coords of set-point joints
  std::vector<int> setpoint_rows_;        // alpha rows of set-point joints
  std::vector<int> setpoint_ucols_;       // actuator columns of those joints
  std::vector<int> tracked_ucols_;
};

// Full-state output tracking for the human side of the simulation; opaque
// to the prosthesis controller.
class HumanController {
 public:
  HumanController(std::shared_ptr<const RobotModel> model,
                  ControllerConfig cfg, std::map<std::string, GaitParams> gaits,
                  std::vector<std::string> tracked_links);

  // Returns u_r given the already chosen subsystem torques.
  Vec tick(const FullState& x, const std::string& domain, RefVec u_s);

 private:
  GaitParams tracked_gait_rows(const GaitParams& g) const;

  std::shared_ptr<const RobotModel> model_;
  ControllerConfig cfg_;
  std::map<std::string, GaitParams> gaits_;
  OutputSpec out_spec_;
  std::map<std::string, Vec> phase_c_;
  std::vector<int> rows_;
  std::vector<int> rest_ucols_, sub_ucols_;
};

// Feedback-linearizing torque for the whole model: human outputs phased by
// the stance-leg chain, the prosthesis tracked outputs by the subsystem
// progression, set-point joints pinned to their PD values. Used to
// evaluate the exact interaction wrench in simulation. `phase_offset`
// anchors the subsystem swing progression (ignored in stance).
Vec full_fl_torque(const RobotModel& model, const FullState& x,
                   const std::string& domain,
                   const std::map<std::string, GaitParams>& gaits,
                   const std::vector<std::string>& human_tracked,
                   const ControllerConfig& pros_cfg, double phase_offset = 0);

}  // namespace prosim
