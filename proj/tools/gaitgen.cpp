// Offline gait synthesis: designs a kinematically consistent flat-foot
// walking pattern for the amputee-prosthesis model, reparameterizes it by
// the controller's own state-based phase variable, fits Bezier rows per
// joint, and (optionally) forward-simulates to a settled step so the
// shipped scenario starts on the limit cycle.

#include <CLI11.hpp>

#include <cmath>
#include <iostream>

#include "prosim/config_io.hpp"
#include "prosim/control.hpp"
#include "prosim/gait.hpp"
#include "prosim/model.hpp"
#include "prosim/sim.hpp"

using namespace prosim;

namespace {

struct GaitDesign {
  double step_length = 0.30;
  double step_time = 0.65;
  double hip_height = 0.88;
  double apex = 0.045;       // swing foot clearance
  double lift_slope = 0.18;  // dz/ds at lift-off, m per unit s
  double land_slope = 0.10;  // -dz/ds at touchdown
  double torso_pitch = 0.0;
  int samples = 240;
  int degree = 7;
};

struct LegAngles {
  double thigh;  // absolute pitches
  double calf;
};

// Two-link reach: absolute thigh/calf pitches for a hip at `hip` and the
// ankle at `ankle`, knee folded backward (human sign).
LegAngles leg_ik(const Vec2& hip, const Vec2& ankle, double l1, double l2) {
  Vec2 d = ankle - hip;
  double r = d.norm();
  const double rmax = 0.9995 * (l1 + l2);
  if (r > rmax) {
    d *= rmax / r;
    r = rmax;
  }
  const double psi = std::atan2(d.x(), -d.y());
  const double a1 = std::acos(
      std::clamp((l1 * l1 + r * r - l2 * l2) / (2 * l1 * r), -1.0, 1.0));
  const double a2 = std::acos(
      std::clamp((l1 * l1 + l2 * l2 - r * r) / (2 * l1 * l2), -1.0, 1.0));
  LegAngles out;
  out.thigh = psi + a1;
  out.calf = out.thigh - (M_PI - a2);
  return out;
}

// Quintic smoothstep: zero first derivative at both ends.
double smoothstep5(double s) {
  return s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
}

// Swing height profile z(s) = s(1-s)(a + b s + c s^2) with prescribed end
// slopes and midpoint clearance.
struct SwingZ {
  double a, b, c;
  double operator()(double s) const {
    return s * (1 - s) * (a + b * s + c * s * s);
  }
};

SwingZ make_swing_z(const GaitDesign& d) {
  // z'(0) = a, z'(1) = -(a + b + c), z(1/2) = (a + b/2 + c/4)/4.
  const double a = d.lift_slope;
  const double rhs1 = d.land_slope - a;   // b + c
  const double rhs2 = 4.0 * d.apex - a;   // b/2 + c/4 (times 4 below)
  const double b = 4.0 * rhs2 - rhs1;
  const double c = rhs1 - b;
  return SwingZ{a, b, c};
}

struct SampledGait {
  std::vector<std::string> names;
  Mat values;  // names x samples
  Vec p;       // subsystem progression per sample
  Vec p_h;     // human stance-chain progression per sample
  Vec s_grid;
};

// Output row order shared with the shipped gait file.
const std::vector<std::string> kOutputOrder = {
    "left_thigh", "left_calf", "left_foot",
    "right_thigh", "pros_calf", "pros_foot"};

SampledGait sample_domain(const RobotModel& model, const GaitDesign& d,
                          const std::string& domain) {
  const double Lt_left = model.links[model.link_id("left_thigh")].params.length;
  const double Lc_left = model.links[model.link_id("left_calf")].params.length;
  const double Lf = model.links[model.link_id("left_foot")].params.length;
  const double Lt_right =
      model.links[model.link_id("right_thigh")].params.length +
      model.links[model.link_id("pros_thigh")].params.length;
  const double Lc_right = model.links[model.link_id("pros_calf")].params.length;

  const bool pros_stance = (domain == "ps");
  const double S = d.step_length;
  const SwingZ zprof = make_swing_z(d);

  SampledGait out;
  out.names = kOutputOrder;
  out.values.resize(6, d.samples);
  out.p.resize(d.samples);
  out.p_h.resize(d.samples);
  out.s_grid.resize(d.samples);

  auto row = [&](const std::string& n) {
    for (size_t i = 0; i < out.names.size(); ++i)
      if (out.names[i] == n) return int(i);
    throw ConfigError("gaitgen: bad row " + n);
  };

  for (int k = 0; k < d.samples; ++k) {
    const double s = double(k) / (d.samples - 1);
    out.s_grid[k] = s;
    const Vec2 hip(-S / 2 + s * S, d.hip_height);
    const Vec2 stance_ankle(0.0, Lf);
    const Vec2 swing_sole(-S + 2 * S * smoothstep5(s), zprof(s));
    const Vec2 swing_ankle = swing_sole + Vec2(0.0, Lf);

    const double l1_st = pros_stance ? Lt_right : Lt_left;
    const double l2_st = pros_stance ? Lc_right : Lc_left;
    const double l1_sw = pros_stance ? Lt_left : Lt_right;
    const double l2_sw = pros_stance ? Lc_left : Lc_right;
    const LegAngles st = leg_ik(hip, stance_ankle, l1_st, l2_st);
    const LegAngles sw = leg_ik(hip, swing_ankle, l1_sw, l2_sw);

    // Hips relative to the torso, knees relative to thighs, ankles holding
    // the feet flat (absolute foot pitch zero).
    auto fill = [&](const std::string& thigh_row, const std::string& calf_row,
                    const std::string& foot_row, const LegAngles& leg) {
      out.values(row(thigh_row), k) = leg.thigh - d.torso_pitch;
      out.values(row(calf_row), k) = leg.calf - leg.thigh;
      out.values(row(foot_row), k) = 0.0 - leg.calf;
    };
    if (pros_stance) {
      fill("right_thigh", "pros_calf", "pros_foot", st);
      fill("left_thigh", "left_calf", "left_foot", sw);
    } else {
      fill("left_thigh", "left_calf", "left_foot", st);
      fill("right_thigh", "pros_calf", "pros_foot", sw);
    }

    // Subsystem progression. The weld frame (socket) hangs partway down
    // the right thigh.
    const RobotModel& sub = *model.subsystem;
    const int foot =
        sub.constraint_sets.at("prosthesis_stance").contacts[0].body;
    const Vec c = phase_coefficients_domain(sub, foot, domain);
    const double Lrt = model.links[model.link_id("right_thigh")].params.length;
    Vec qbar = Vec::Zero(5);
    const LegAngles& pros = pros_stance ? st : sw;
    qbar[0] = hip.x() + Lrt * std::sin(pros.thigh);
    qbar[1] = hip.y() - Lrt * std::cos(pros.thigh);
    qbar[2] = pros.thigh;  // weld pitch equals the right-thigh pitch
    qbar[3] = out.values(row("pros_calf"), k);
    qbar[4] = out.values(row("pros_foot"), k);
    out.p[k] = c.dot(qbar);

    // Human stance-chain progression over the full coordinates.
    const std::string set_name =
        pros_stance ? "prosthesis_stance" : "prosthesis_nonstance";
    const int stance_foot = model.constraint_sets.at(set_name).contacts[0].body;
    const Vec ch = phase_coefficients(model, stance_foot);
    Vec q = Vec::Zero(model.nq);
    q[2] = d.torso_pitch;
    for (int r = 0; r < 6; ++r)
      q[model.q_index[model.link_id(out.names[r])]] = out.values(r, k);
    q[model.q_index[model.link_id("pros_thigh")] + 2] = pros.thigh;
    out.p_h[k] = ch.dot(q);
  }
  // Swing progression is measured from the step start.
  if (!pros_stance) out.p.array() -= out.p[0];
  return out;
}

// Least-squares Bezier fit with pinned endpoint values and slopes.
Vec fit_bezier(const Vec& tau, const Vec& y, int degree, double d0,
               double d1) {
  const int n = int(tau.size());
  Vec alpha = Vec::Zero(degree + 1);
  alpha[0] = y[0];
  alpha[degree] = y[n - 1];
  alpha[1] = alpha[0] + d0 / degree;
  alpha[degree - 1] = alpha[degree] - d1 / degree;
  const int nfree = degree - 3;
  if (nfree <= 0) return alpha;

  auto bernstein = [&](int i, double t) {
    double binom = 1.0;
    for (int k = 0; k < i; ++k) binom *= double(degree - k) / double(k + 1);
    return binom * std::pow(t, i) * std::pow(1 - t, degree - i);
  };
  Mat A(n, nfree);
  Vec rhs(n);
  for (int r = 0; r < n; ++r) {
    const double fixed = alpha[0] * bernstein(0, tau[r]) +
                         alpha[1] * bernstein(1, tau[r]) +
                         alpha[degree - 1] * bernstein(degree - 1, tau[r]) +
                         alpha[degree] * bernstein(degree, tau[r]);
    rhs[r] = y[r] - fixed;
    for (int j = 0; j < nfree; ++j) A(r, j) = bernstein(2 + j, tau[r]);
  }
  const Vec sol = (A.transpose() * A).ldlt().solve(A.transpose() * rhs);
  for (int j = 0; j < nfree; ++j) alpha[2 + j] = sol[j];
  return alpha;
}

bool is_pros_row(const std::string& name) {
  return name == "pros_calf" || name == "pros_foot";
}

Vec tau_grid(const Vec& p, const std::string& what, const std::string& domain) {
  const int n = int(p.size());
  const double span = p[n - 1] - p[0];
  for (int k = 1; k < n; ++k) {
    const double dp = (p[k] - p[k - 1]) * (span > 0 ? 1.0 : -1.0);
    if (dp <= 0)
      throw ConfigError("gaitgen: " + what + " progression not monotone in " +
                        domain);
  }
  Vec tau(n);
  for (int k = 0; k < n; ++k) tau[k] = (p[k] - p[0]) / span;
  return tau;
}

GaitParams fit_domain(const RobotModel& model, const GaitDesign& d,
                      const std::string& domain) {
  const SampledGait g = sample_domain(model, d, domain);
  const int n = d.samples;

  const Vec tau_p = tau_grid(g.p, "subsystem", domain);
  const Vec tau_h = tau_grid(g.p_h, "human", domain);

  GaitParams out;
  out.domain = domain;
  out.output_names = g.names;
  out.theta_plus = g.p[0];
  out.theta_minus = g.p[n - 1];
  out.human_theta_plus = g.p_h[0];
  out.human_theta_minus = g.p_h[n - 1];
  out.alpha.resize(6, d.degree + 1);
  for (int r = 0; r < 6; ++r) {
    // Each row lives on the phase its consumer evaluates it with.
    const Vec& tau = is_pros_row(g.names[r]) ? tau_p : tau_h;
    const Vec y = g.values.row(r);
    const double d0 = (y[1] - y[0]) / (tau[1] - tau[0]);
    const double d1 = (y[n - 1] - y[n - 2]) / (tau[n - 1] - tau[n - 2]);
    out.alpha.row(r) = fit_bezier(tau, y, d.degree, d0, d1).transpose();
  }
  const double ds = g.s_grid[1] - g.s_grid[0];
  out.taudot_nominal =
      (g.p[1] - g.p[0]) / ds / (out.theta_minus - out.theta_plus) / d.step_time;
  out.human_taudot_nominal =
      (g.p_h[1] - g.p_h[0]) / ds /
      (out.human_theta_minus - out.human_theta_plus) / d.step_time;
  return out;
}

double fit_error(const RobotModel& model, const GaitDesign& d,
                 const GaitParams& gait) {
  const SampledGait g = sample_domain(model, d, gait.domain);
  double worst = 0;
  for (int k = 0; k < d.samples; ++k) {
    for (int r = 0; r < 6; ++r) {
      const bool pros = is_pros_row(g.names[r]);
      const double span = pros ? gait.theta_minus - gait.theta_plus
                               : gait.human_theta_minus - gait.human_theta_plus;
      const double p0 = pros ? gait.theta_plus : gait.human_theta_plus;
      const double tau = ((pros ? g.p[k] : g.p_h[k]) - p0) / span;
      const double fit = bezier(gait.alpha.row(r), tau).value;
      worst = std::max(worst, std::abs(fit - g.values(r, k)));
    }
  }
  return worst;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gait synthesis for the planar amputee-prosthesis model"};
  std::string model_path = "data/model_8link.json";
  std::string gait_out = "data/gait_reference.json";
  std::string controller_path = "data/controller_default.json";
  std::string scenario_out = "data/scenario_default.json";
  GaitDesign d;
  int settle_steps = 14;
  bool no_settle = false;
  app.add_option("--model", model_path);
  app.add_option("--out", gait_out);
  app.add_option("--controller", controller_path);
  app.add_option("--scenario-out", scenario_out);
  app.add_option("--step-length", d.step_length);
  app.add_option("--step-time", d.step_time);
  app.add_option("--hip-height", d.hip_height);
  app.add_option("--apex", d.apex);
  app.add_option("--degree", d.degree);
  app.add_option("--samples", d.samples);
  app.add_option("--settle", settle_steps);
  app.add_flag("--no-settle", no_settle);
  CLI11_PARSE(app, argc, argv);

  try {
    auto model = load_model(model_path);
    std::map<std::string, GaitParams> gaits;
    for (const std::string domain : {"ps", "pns"}) {
      gaits[domain] = fit_domain(*model, d, domain);
      const double err = fit_error(*model, d, gaits[domain]);
      std::cout << domain << ": theta+ " << gaits[domain].theta_plus
                << ", theta- " << gaits[domain].theta_minus << ", fit err "
                << err << ", taudot0 " << gaits[domain].taudot_nominal << "\n";
    }

    // Seam continuity: the end of each domain must match the start of the
    // next (legs trade roles, joint values must agree).
    for (const auto& [from, to] :
         std::vector<std::pair<std::string, std::string>>{{"ps", "pns"},
                                                          {"pns", "ps"}}) {
      double worst = 0;
      for (int r = 0; r < 6; ++r) {
        const double end = bezier(gaits[from].alpha.row(r), 1.0).value;
        const double start = bezier(gaits[to].alpha.row(r), 0.0).value;
        worst = std::max(worst, std::abs(end - start));
      }
      std::cout << "seam " << from << "->" << to << ": " << worst << "\n";
      if (worst > 1e-6) {
        std::cerr << "gaitgen: seam discontinuity\n";
        return 1;
      }
    }
    save_gait(gait_out, gaits);
    std::cout << "wrote " << gait_out << "\n";

    const FullState s0 = nominal_state(*model, gaits, "ps");
    const auto& ps_set = model->constraint_sets.at("prosthesis_stance");
    const auto targets = capture_contact_targets(*model, s0.q, ps_set);
    const auto cj = constraint_jacobians(*model, s0.q, s0.qdot, ps_set);
    std::cout << "nominal |J qdot| " << (cj.J * s0.qdot).cwiseAbs().maxCoeff()
              << ", stance sole (" << targets[0][0] << ", " << targets[0][1]
              << ")\n";

    if (!no_settle) {
      ScenarioFile sc;
      sc.model_path = model_path;
      sc.gait_path = gait_out;
      sc.controller_path = controller_path;
      sc.scenario.n_steps = settle_steps;
      sc.scenario.init_mode = "nominal";
      WalkSetup setup = load_walk_setup(sc);
      WalkResult run = walk(setup, sc.scenario);
      std::cout << "settle: " << run.steps_completed << " steps, status "
                << int(run.status) << " " << run.message << "\n";
      if (run.status != WalkStatus::Ok) return 2;

      for (auto it = run.step_starts.rbegin(); it != run.step_starts.rend();
           ++it) {
        if (it->domain != "ps") continue;
        FullState settled = it->state;
        const auto t2 = capture_contact_targets(*model, settled.q, ps_set);
        const double shift = t2[0][0];
        for (int i = 0; i < model->nlinks(); ++i)
          if (model->links[i].parent < 0)
            settled.q[model->q_index[i]] -= shift;
        Scenario& s = sc.scenario;
        s.init_mode = "explicit";
        s.q0 = settled.q;
        s.qd0 = settled.qdot;
        s.n_steps = 10;
        save_scenario(scenario_out, sc);
        std::cout << "wrote " << scenario_out << "\n";
        break;
      }
    }
  } catch (const Error& e) {
    std::cerr << "gaitgen: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
