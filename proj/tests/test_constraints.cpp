#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "prosim/constraints.hpp"
#include "prosim/model.hpp"

using namespace prosim;

namespace {

HolonomicSet pin_base(bool with_weld = false) {
  HolonomicSet set;
  set.include_fixed_joint = with_weld;
  ConstraintSpec pin;
  pin.name = "base_pin";
  pin.body = 0;
  pin.point = Vec2::Zero();
  set.contacts.push_back(pin);
  return set;
}

}  // namespace

TEST_CASE("free chain matches the dense unconstrained solve") {
  RobotModel model = fixtures::double_pendulum();
  HolonomicSet none;
  none.include_fixed_joint = false;
  FullState s{oracle::random_vec(5, -1, 1), oracle::random_vec(5, -1, 1), 0};
  const Vec u = Vec::Zero(2);
  const Vec qdd = constrained_accel(model, s, u, none);
  const Mat D = inertia_matrix(model, s.q);
  const Vec H = bias_forces(model, s.q, s.qdot);
  const Vec expect = D.ldlt().solve(-H);
  CHECK((qdd - expect).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("zero gravity, zero velocity, zero torque gives zero wrench") {
  RobotModel model = fixtures::double_pendulum();
  model.gravity = 0.0;
  FullState s{Vec::Zero(5), Vec::Zero(5), 0};
  s.q[3] = 0.4;
  const Wrench w = constraint_wrench(model, s, Vec::Zero(2), pin_base());
  CHECK(w.lambda.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("pinned base has zero base acceleration rows") {
  RobotModel model = fixtures::double_pendulum();
  FullState s{oracle::random_vec(5, -1, 1), oracle::random_vec(5, -1, 1), 0};
  s.q.head<3>().setZero();
  s.qdot.head<3>().setZero();
  const Vec qdd =
      constrained_accel(model, s, oracle::random_vec(2, -3, 3), pin_base());
  CHECK(qdd.head<3>().cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("static balanced chain: vertical contact force carries the weight") {
  fixtures::TwoLinkParams p;
  RobotModel model = fixtures::double_pendulum(p);
  FullState s{Vec::Zero(5), Vec::Zero(5), 0};
  const Wrench w = constraint_wrench(model, s, Vec::Zero(2), pin_base());
  const double m_tot = 0.8 + p.m1 + p.m2;  // includes the pivot body
  CHECK(w.lambda[1] == doctest::Approx(m_tot * model.gravity).epsilon(1e-10));
  CHECK(std::abs(w.lambda[0]) < 1e-10);
  const Vec qdd = constrained_accel(model, s, Vec::Zero(2), pin_base());
  CHECK(qdd.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("wrench and acceleration are mutually consistent") {
  auto model = fixtures::paper_model();
  const HolonomicSet& set = model->constraint_sets.at("prosthesis_stance");
  std::mt19937_64 gen(21);
  for (int trial = 0; trial < 25; ++trial) {
    FullState s = fixtures::random_constrained_state(*model, set, gen);
    const Vec u = oracle::random_vec(model->nu(), -20, 20);
    const auto cd = constrained_dynamics(*model, s, u, set);

    const auto cj = constraint_jacobians(*model, s.q, s.qdot, set);
    const Mat D = inertia_matrix(*model, s.q);
    const Vec H = bias_forces(*model, s.q, s.qdot);
    Vec rhs = -H + cj.J.transpose() * cd.wrench.lambda;
    for (int j = 0; j < model->nu(); ++j) rhs[model->actuated[j]] += u[j];
    const Vec qdd = D.ldlt().solve(rhs);
    CHECK((qdd - cd.qdd).cwiseAbs().maxCoeff() < 1e-9);

    const Vec cacc = cj.J * cd.qdd + cj.Jdot * s.qdot;
    CHECK(cacc.cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("redundant constraints raise a rank error naming the culprit") {
  RobotModel model = fixtures::double_pendulum();
  HolonomicSet set = pin_base();
  ConstraintSpec dup = set.contacts[0];
  dup.name = "base_pin_again";
  set.contacts.push_back(dup);
  FullState s{Vec::Zero(5), Vec::Zero(5), 0};
  try {
    constrained_accel(model, s, Vec::Zero(2), set);
    FAIL("expected ConstraintRankError");
  } catch (const ConstraintRankError& e) {
    CHECK(e.constraint_name == "base_pin_again");
  }
}

TEST_CASE("equivalent subsystem: accelerations and wrench match the full order") {
  auto model = fixtures::paper_model();
  const RobotModel& sub = *model->subsystem;
  std::mt19937_64 gen(5);
  for (const char* domain : {"prosthesis_stance", "prosthesis_nonstance"}) {
    const HolonomicSet& set = model->constraint_sets.at(domain);
    const HolonomicSet& sub_set = sub.constraint_sets.at(domain);
    for (int trial = 0; trial < 50; ++trial) {
      FullState s = fixtures::random_constrained_state(*model, set, gen);
      const Vec u = oracle::random_vec(model->nu(), -30, 30);
      const auto full = constrained_dynamics(*model, s, u, set);

      // Subsystem solve with the interaction wrench as measurable input.
      const Vec3 Ff = full.wrench.interaction();
      FullState sb;
      sb.q = model->sub_coords(s.q);
      sb.qdot = model->sub_coords(s.qdot);
      sb.t = s.t;
      Vec u_s(2);
      u_s << u[4], u[5];  // subsystem torque columns
      Mat Jf;
      const Kinematics kin = kinematics(sub, sb.q);
      point_jacobian_into(sub, kin, 0, Vec2::Zero(), Jf);
      const Vec extra = Jf.transpose() * Ff;
      const auto part =
          constrained_dynamics(sub, sb, u_s, sub_set, nullptr, &extra);

      for (int i = 0; i < sub.nq; ++i)
        CHECK(std::abs(part.qdd[i] - full.qdd[model->sub_to_full[i]]) < 1e-8);
      if (part.wrench.lambda.size() > 0) {
        const Vec lam_full_contact =
            full.wrench.lambda.tail(part.wrench.lambda.size());
        CHECK((part.wrench.lambda - lam_full_contact).cwiseAbs().maxCoeff() <
              1e-8);
      }
    }
  }
}

TEST_CASE("separable structure: subsystem acceleration ignores human torque") {
  auto model = fixtures::paper_model();
  std::mt19937_64 gen(17);
  for (const char* domain : {"prosthesis_stance", "prosthesis_nonstance"}) {
    const HolonomicSet& set = model->constraint_sets.at(domain);
    // Same contacts with the weld treated as a measured force instead of a
    // constraint.
    HolonomicSet contacts_only = set;
    contacts_only.include_fixed_joint = false;
    for (int trial = 0; trial < 20; ++trial) {
      FullState s = fixtures::random_constrained_state(*model, set, gen);
      Vec u = oracle::random_vec(model->nu(), -30, 30);
      const auto full = constrained_dynamics(*model, s, u, set);
      const Vec3 Ff = full.wrench.interaction();

      const auto cj = constraint_jacobians(*model, s.q, s.qdot, set);
      const Vec weld_force = cj.J.topRows<3>().transpose() * Ff;

      const Vec qdd_a =
          constrained_dynamics(*model, s, u, contacts_only, nullptr, &weld_force)
              .qdd;
      Vec u2 = u;
      u2.head<4>() += oracle::random_vec(4, -25, 25);  // perturb u_r only
      const Vec qdd_b =
          constrained_dynamics(*model, s, u2, contacts_only, nullptr,
                               &weld_force)
              .qdd;
      for (int idx : model->part_s)
        CHECK(std::abs(qdd_a[idx] - qdd_b[idx]) < 1e-10);
      CHECK((qdd_a - qdd_b).cwiseAbs().maxCoeff() > 1e-3);
    }
  }
}

TEST_CASE("impact map: projection properties on random states") {
  auto model = fixtures::paper_model();
  const HolonomicSet& set = model->constraint_sets.at("prosthesis_nonstance");
  std::mt19937_64 gen(13);
  std::uniform_real_distribution<double> vel(-2, 2);
  for (int trial = 0; trial < 1000; ++trial) {
    FullState s = fixtures::random_constrained_state(
        *model, model->constraint_sets.at("prosthesis_stance"), gen);
    for (int i = 0; i < model->nq; ++i) s.qdot[i] = vel(gen);
    const FullState post = impact_map(*model, s, set);
    CHECK((post.q - s.q).cwiseAbs().maxCoeff() == 0.0);

    const auto cj = constraint_jacobians(*model, post.q, post.qdot, set);
    CHECK((cj.J * post.qdot).cwiseAbs().maxCoeff() <= 1e-10);

    const double ke_pre = energies(*model, s.q, s.qdot).kinetic;
    const double ke_post = energies(*model, post.q, post.qdot).kinetic;
    CHECK(ke_post <= ke_pre + 1e-12);

    const FullState again = impact_map(*model, post, set);
    CHECK((again.qdot - post.qdot).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("velocity already satisfying the constraints is unchanged") {
  auto model = fixtures::paper_model();
  const HolonomicSet& set = model->constraint_sets.at("prosthesis_stance");
  std::mt19937_64 gen(29);
  FullState s = fixtures::random_constrained_state(*model, set, gen);
  const FullState post = impact_map(*model, s, set);
  CHECK((post.qdot - s.qdot).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("tilted falling rod: closed-form plastic impact at the tip") {
  const double m = 1.5, l = 0.9, v = 1.3, th = 0.6;
  RobotModel rod = fixtures::free_rod(m, l);
  FullState s{Vec::Zero(3), Vec::Zero(3), 0};
  s.q[2] = th;
  s.qdot[1] = -v;

  HolonomicSet tip;
  tip.include_fixed_joint = false;
  ConstraintSpec c;
  c.name = "tip";
  c.body = 0;
  c.point = Vec2(0, -l);
  c.rows = {true, true, false};
  tip.contacts.push_back(c);

  const FullState post = impact_map(rod, s, tip);
  // Angular momentum about the pinned tip is conserved through the impact.
  const double omega = 3.0 * v * std::sin(th) / (2.0 * l);
  CHECK(post.qdot[2] == doctest::Approx(omega).epsilon(1e-10));
  CHECK(post.qdot[0] ==
        doctest::Approx(-omega * l * std::cos(th)).epsilon(1e-10));
  CHECK(post.qdot[1] ==
        doctest::Approx(-omega * l * std::sin(th)).epsilon(1e-10));
  const Kinematics kin = kinematics(rod, post.q, post.qdot);
  CHECK(point_velocity(rod, kin, 0, Vec2(0, -l)).norm() < 1e-12);
}

TEST_CASE("baumgarte stabilization pulls a drifted constraint back") {
  RobotModel model = fixtures::double_pendulum();
  HolonomicSet set = pin_base();
  set.baumgarte = true;
  set.bg_omega = 20.0;
  FullState s{Vec::Zero(5), Vec::Zero(5), 0};
  s.q[0] = 1e-3;  // drifted pin
  const std::vector<Vec3> targets = {Vec3::Zero()};
  const Vec qdd_on =
      constrained_dynamics(model, s, Vec::Zero(2), set, &targets).qdd;
  set.baumgarte = false;
  const Vec qdd_off =
      constrained_dynamics(model, s, Vec::Zero(2), set, &targets).qdd;
  CHECK(qdd_on[0] < qdd_off[0] - 1e-4);
}
