#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "prosim/constraints.hpp"
#include "prosim/estimate.hpp"
#include "prosim/model.hpp"
#include "prosim/sim.hpp"

using namespace prosim;

TEST_CASE("acceleration estimate: basics") {
  Vec a = Vec::Constant(3, 1.5), b = Vec::Constant(3, 1.5);
  CHECK(accel_estimate(a, b, 1.0, 0.9).cwiseAbs().maxCoeff() == 0.0);

  // Linear ramp is recovered exactly.
  Vec v0(2), v1(2);
  v0 << 0.2, -0.4;
  const Vec slope = (Vec(2) << 3.0, -1.0).finished();
  v1 = v0 + 1e-3 * slope;
  CHECK((accel_estimate(v1, v0, 1e-3, 0.0) - slope).cwiseAbs().maxCoeff() <
        1e-12);

  CHECK_THROWS_AS(accel_estimate(a, b, 1.0, 1.0), TimingError);
  CHECK_THROWS_AS(accel_estimate(a, b, 0.9, 1.0), TimingError);
}

TEST_CASE("sinusoidal velocity: first-order accuracy in dt") {
  const double w = 7.0, dt = 1e-3;
  auto qd_of = [&](double t) { return Vec(Vec::Constant(1, std::sin(w * t))); };
  const double t = 0.42;
  const Vec est = accel_estimate(qd_of(t), qd_of(t - dt), t, t - dt);
  const double exact = w * std::cos(w * (t - dt));
  CHECK(std::abs(est[0] - exact) < 0.5 * w * w * dt + 1e-9);
}

TEST_CASE("residual recovers an applied base wrench from a rollout") {
  auto model = fixtures::paper_model();
  const RobotModel& sub = *model->subsystem;
  const HolonomicSet& stance = sub.constraint_sets.at("prosthesis_stance");

  // Stand the subsystem on its foot and push on the base with a known
  // wrench while integrating the truth.
  Vec q(5);
  q << 0.02, 0.68, 0.05, -0.1, 0.05;
  FullState s{q, Vec::Zero(5), 0.0};
  const Vec3 Ff(14.0, -260.0, 3.5);
  Mat Jf;
  const Kinematics kin0 = kinematics(sub, s.q);
  point_jacobian_into(sub, kin0, 0, Vec2::Zero(), Jf);
  // Jf is constant in the base block, so reuse is exact.
  const Vec push = Jf.transpose() * Ff;

  const Vec u = Vec::Zero(2);
  const double dt = 1e-4;
  EstimatorState est;
  est.window = 1;

  // Integrate with the wrench applied and run the estimator on samples.
  FullState prev = s;
  Vec prev_lambda;
  {
    const auto cd = constrained_dynamics(sub, s, u, stance, nullptr, &push);
    prev_lambda = cd.wrench.lambda;
  }
  int checked = 0;
  for (int k = 1; k <= 400; ++k) {
    // RK4 substep with the extra force folded in by hand.
    auto deriv = [&](const FullState& x) {
      const Vec qdd = constrained_dynamics(sub, x, u, stance, nullptr, &push).qdd;
      Vec dx(10);
      dx.head(5) = x.qdot;
      dx.tail(5) = qdd;
      return dx;
    };
    auto step = [&](const FullState& x) {
      const Vec k1 = deriv(x);
      FullState x2 = x;
      x2.q += dt / 2 * k1.head(5);
      x2.qdot += dt / 2 * k1.tail(5);
      const Vec k2 = deriv(x2);
      FullState x3 = x;
      x3.q += dt / 2 * k2.head(5);
      x3.qdot += dt / 2 * k2.tail(5);
      const Vec k3 = deriv(x3);
      FullState x4 = x;
      x4.q += dt * k3.head(5);
      x4.qdot += dt * k3.tail(5);
      const Vec k4 = deriv(x4);
      FullState out = x;
      out.q += dt / 6 * (k1.head(5) + 2 * k2.head(5) + 2 * k3.head(5) + k4.head(5));
      out.qdot +=
          dt / 6 * (k1.tail(5) + 2 * k2.tail(5) + 2 * k3.tail(5) + k4.tail(5));
      out.t += dt;
      return out;
    };
    const FullState next = step(prev);

    const Vec qdd_est = accel_estimate(next.qdot, prev.qdot, next.t, prev.t);
    const Mat D = inertia_matrix(sub, prev.q);
    const Vec H = bias_forces(sub, prev.q, prev.qdot);
    const auto cj = constraint_jacobians(sub, prev.q, prev.qdot, stance);
    const Vec f = residual_dynamics(D, H, sub.actuation_matrix(), cj.J,
                                    qdd_est, u, prev_lambda);
    if (k > 2) {
      // One-step finite differencing leaves an O(dt) bias that grows with
      // the motion's speed; on this 260 N push it stays well under 1%.
      CHECK((f - push).cwiseAbs().maxCoeff() < 3.0);
      CHECK((f - push).norm() / push.norm() < 1e-2);
      ++checked;
    }
    prev = next;
    prev_lambda = constrained_dynamics(sub, next, u, stance, nullptr, &push)
                      .wrench.lambda;
  }
  CHECK(checked > 300);
}

TEST_CASE("residual is near zero without an interaction force") {
  auto model = fixtures::paper_model();
  const RobotModel& sub = *model->subsystem;
  const HolonomicSet& stance = sub.constraint_sets.at("prosthesis_stance");
  Vec q(5);
  q << 0.0, 0.69, 0.0, -0.05, 0.05;
  FullState s{q, Vec::Zero(5), 0.0};
  const Vec u = Vec::Zero(2);
  const double dt = 1e-4;

  FullState prev = s;
  Vec prev_lambda =
      constrained_dynamics(sub, prev, u, stance).wrench.lambda;
  FullState next = integrate_step(sub, prev, u, stance, dt);
  const Vec qdd_est = accel_estimate(next.qdot, prev.qdot, next.t, prev.t);
  const Mat D = inertia_matrix(sub, prev.q);
  const Vec H = bias_forces(sub, prev.q, prev.qdot);
  const auto cj = constraint_jacobians(sub, prev.q, prev.qdot, stance);
  const Vec f = residual_dynamics(D, H, sub.actuation_matrix(), cj.J, qdd_est,
                                  u, prev_lambda);
  CHECK(f.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("model mismatch shows up as a lumped residual") {
  auto model = fixtures::paper_model();
  const RobotModel& sub = *model->subsystem;
  const HolonomicSet& stance = sub.constraint_sets.at("prosthesis_stance");
  Vec q(5);
  q << 0.0, 0.69, 0.0, -0.05, 0.05;
  FullState s{q, Vec::Zero(5), 0.0};
  const Vec u = Vec::Zero(2);
  const double dt = 1e-4;

  // Truth integrates the real model; the estimator believes in a calf 10%
  // heavier than reality.
  RobotModel wrong = sub;
  wrong.links[1].params.mass *= 1.1;
  wrong.finalize();

  FullState prev = s;
  const Vec prev_lambda =
      constrained_dynamics(sub, prev, u, stance).wrench.lambda;
  FullState next = integrate_step(sub, prev, u, stance, dt);
  const Vec qdd_est = accel_estimate(next.qdot, prev.qdot, next.t, prev.t);
  const Mat D = inertia_matrix(wrong, prev.q);
  const Vec H = bias_forces(wrong, prev.q, prev.qdot);
  const auto cj = constraint_jacobians(wrong, prev.q, prev.qdot, stance);
  const Vec f = residual_dynamics(D, H, wrong.actuation_matrix(), cj.J,
                                  qdd_est, u, prev_lambda);
  CHECK(f.cwiseAbs().maxCoeff() > 0.1);
}

TEST_CASE("window averaging: passthrough, constants, readiness") {
  EstimatorState st;
  st.window = 1;
  CHECK(!average_residual(st).has_value());

  push_residual(st, Vec::Constant(3, 2.0));
  CHECK((*average_residual(st) - Vec::Constant(3, 2.0)).cwiseAbs().maxCoeff() ==
        0.0);
  push_residual(st, Vec::Constant(3, -1.0));
  // N = 1: latest sample only.
  CHECK((*average_residual(st))[0] == -1.0);

  st.window = 10;
  st.ring.clear();
  for (int i = 0; i < 25; ++i) push_residual(st, Vec::Constant(2, 3.25));
  CHECK(st.ring.size() == 10);
  CHECK((*average_residual(st))[1] == doctest::Approx(3.25));
}

TEST_CASE("averaging reduces variance like 1/N for independent samples") {
  // Independent white velocity noise per residual sample (fresh pair each
  // time, so consecutive residuals do not share a measurement).
  auto model = fixtures::paper_model();
  const RobotModel& sub = *model->subsystem;
  const HolonomicSet& stance = sub.constraint_sets.at("prosthesis_stance");
  Vec q(5);
  q << 0.0, 0.69, 0.0, -0.05, 0.05;
  const Vec qd = Vec::Zero(5);
  const Vec u = Vec::Zero(2);
  const double dt = 1e-3, sigma = 1e-3;

  const Mat D = inertia_matrix(sub, q);
  const Vec H = bias_forces(sub, q, qd);
  const auto cj = constraint_jacobians(sub, q, qd, stance);
  const Vec lambda = constrained_dynamics(sub, {q, qd, 0}, u, stance)
                         .wrench.lambda;
  std::mt19937_64 gen(5);
  std::normal_distribution<double> noise(0.0, sigma);

  auto sample_residual = [&]() {
    Vec n1(5), n2(5);
    for (int i = 0; i < 5; ++i) {
      n1[i] = noise(gen);
      n2[i] = noise(gen);
    }
    const Vec qdd_est = accel_estimate(Vec(qd + n1), Vec(qd + n2), dt, 0.0);
    return residual_dynamics(D, H, sub.actuation_matrix(), cj.J, qdd_est, u,
                             lambda);
  };

  const int N = 10, trials = 4000;
  auto variance_of = [&](int navg) {
    double mean = 0, m2 = 0;
    int count = 0;
    for (int t = 0; t < trials; ++t) {
      EstimatorState st;
      st.window = navg;
      for (int i = 0; i < navg; ++i) push_residual(st, sample_residual());
      const double v = (*average_residual(st))[3];  // knee row
      ++count;
      const double d = v - mean;
      mean += d / count;
      m2 += d * (v - mean);
    }
    return m2 / (count - 1);
  };
  const double v1 = variance_of(1);
  const double vN = variance_of(N);
  CHECK(vN == doctest::Approx(v1 / N).epsilon(0.2));
}
