#include <doctest.h>

#include <Eigen/LU>

#include <optional>
#include <random>
#include <sstream>

#include "prosim/qpsolve.hpp"

using namespace prosim;

namespace {

// Brute-force oracle: solve the equality-constrained problem for every
// subset of active inequalities, keep the feasible KKT points, return the
// best objective.
std::optional<Vec> enumerate_qp(const QPProblem& p) {
  const int n = p.nvars();
  const int q = int(p.A_in.rows());
  std::optional<Vec> best;
  double best_obj = 0;
  for (int mask = 0; mask < (1 << q); ++mask) {
    std::vector<int> active;
    for (int j = 0; j < q; ++j)
      if (mask & (1 << j)) active.push_back(j);
    const int pe = int(p.A_eq.rows());
    const int k = pe + int(active.size());
    Mat K = Mat::Zero(n + k, n + k);
    Vec rhs(n + k);
    K.topLeftCorner(n, n) = p.hess;
    rhs.head(n) = -p.grad;
    Mat A(k, n);
    if (pe > 0) A.topRows(pe) = p.A_eq;
    for (size_t i = 0; i < active.size(); ++i)
      A.row(pe + int(i)) = p.A_in.row(active[i]);
    if (k > 0) {
      K.topRightCorner(n, k) = A.transpose();
      K.bottomLeftCorner(k, n) = A;
      rhs.segment(n, pe) = p.b_eq;
      for (size_t i = 0; i < active.size(); ++i)
        rhs[n + pe + int(i)] = p.b_in[active[i]];
    }
    Eigen::FullPivLU<Mat> lu(K);
    if (!lu.isInvertible()) continue;
    const Vec sol = lu.solve(rhs);
    const Vec x = sol.head(n);
    bool ok = true;
    for (int j = 0; j < q && ok; ++j)
      if (p.A_in.row(j).dot(x) > p.b_in[j] + 1e-9) ok = false;
    for (size_t i = 0; i < active.size() && ok; ++i)
      if (sol[n + pe + int(i)] < -1e-9) ok = false;  // multiplier sign
    if (!ok) continue;
    const double obj = p.objective(x);
    if (!best || obj < best_obj - 1e-12) {
      best = x;
      best_obj = obj;
    }
  }
  return best;
}

QPProblem random_qp(std::mt19937_64& gen) {
  std::uniform_real_distribution<double> d(-1, 1);
  std::uniform_int_distribution<int> nd(4, 8), ed(0, 2), id(1, 3);
  const int n = nd(gen);
  QPProblem p;
  Mat A(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = d(gen);
  p.hess = A.transpose() * A + 0.3 * Mat::Identity(n, n);
  p.grad.resize(n);
  for (int i = 0; i < n; ++i) p.grad[i] = 2.0 * d(gen);

  Vec x0(n);
  for (int i = 0; i < n; ++i) x0[i] = d(gen);
  const int pe = ed(gen), qi = id(gen);
  p.A_eq.resize(pe, n);
  p.b_eq.resize(pe);
  for (int r = 0; r < pe; ++r) {
    for (int j = 0; j < n; ++j) p.A_eq(r, j) = d(gen);
    p.b_eq[r] = p.A_eq.row(r).dot(x0);
  }
  p.A_in.resize(qi, n);
  p.b_in.resize(qi);
  std::uniform_real_distribution<double> sd(0.0, 0.8);
  for (int r = 0; r < qi; ++r) {
    for (int j = 0; j < n; ++j) p.A_in(r, j) = d(gen);
    p.b_in[r] = p.A_in.row(r).dot(x0) + sd(gen);  // x0 stays feasible
  }
  return p;
}

}  // namespace

TEST_CASE("projection onto a single equality") {
  QPProblem p;
  p.hess = 2.0 * Mat::Identity(3, 3);
  p.grad = Vec::Zero(3);
  p.A_eq = Mat::Zero(1, 3);
  p.A_eq(0, 0) = 1.0;
  p.b_eq = Vec::Constant(1, 1.0);
  p.A_in.resize(0, 3);
  p.b_in.resize(0);
  const QPResult r = solve_qp(p);
  REQUIRE(r.ok());
  CHECK((r.x - Vec::Unit(3, 0)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(r.kkt_stationarity <= 1e-6);
}

TEST_CASE("componentwise clipping against the nonpositive orthant") {
  Vec c(4);
  c << 0.7, -1.3, 2.2, -0.1;
  QPProblem p;
  p.hess = 2.0 * Mat::Identity(4, 4);
  p.grad = -2.0 * c;
  p.A_eq.resize(0, 4);
  p.b_eq.resize(0);
  p.A_in = Mat::Identity(4, 4);
  p.b_in = Vec::Zero(4);
  const QPResult r = solve_qp(p);
  REQUIRE(r.ok());
  for (int i = 0; i < 4; ++i)
    CHECK(r.x[i] == doctest::Approx(std::min(c[i], 0.0)).epsilon(1e-12));
}

TEST_CASE("random problems match the active-set enumeration oracle") {
  std::mt19937_64 gen(0xabcdef);
  int solved = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const QPProblem p = random_qp(gen);
    const auto oracle_x = enumerate_qp(p);
    REQUIRE(oracle_x);
    const QPResult r = solve_qp(p);
    REQUIRE(r.ok());
    CHECK((r.x - *oracle_x).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(r.kkt_stationarity <= 1e-6);
    CHECK(r.kkt_primal <= 1e-6);
    CHECK(r.kkt_complementarity <= 1e-6);
    ++solved;
  }
  CHECK(solved == 200);
}

TEST_CASE("solution is invariant under equality row scaling") {
  std::mt19937_64 gen(99);
  for (int trial = 0; trial < 20; ++trial) {
    QPProblem p = random_qp(gen);
    if (p.A_eq.rows() == 0) continue;
    const QPResult r1 = solve_qp(p);
    QPProblem scaled = p;
    scaled.A_eq.row(0) *= 1734.5;
    scaled.b_eq[0] *= 1734.5;
    const QPResult r2 = solve_qp(scaled);
    REQUIRE(r1.ok());
    REQUIRE(r2.ok());
    CHECK((r1.x - r2.x).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("objective at the solution beats sampled feasible points") {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> d(-1, 1);
  for (int trial = 0; trial < 20; ++trial) {
    const QPProblem p = random_qp(gen);
    const QPResult r = solve_qp(p);
    REQUIRE(r.ok());
    const int n = p.nvars();
    // Sample feasible points: project random points onto the equalities,
    // keep those that satisfy the inequalities.
    for (int s = 0; s < 50; ++s) {
      Vec x(n);
      for (int i = 0; i < n; ++i) x[i] = 2.0 * d(gen);
      if (p.A_eq.rows() > 0) {
        const Mat AAt = p.A_eq * p.A_eq.transpose();
        x -= p.A_eq.transpose() *
             AAt.ldlt().solve(p.A_eq * x - p.b_eq);
      }
      bool feas = true;
      for (int j = 0; j < p.A_in.rows() && feas; ++j)
        if (p.A_in.row(j).dot(x) > p.b_in[j]) feas = false;
      if (feas) CHECK(p.objective(r.x) <= p.objective(x) + 1e-9);
    }
  }
}

TEST_CASE("warm-started resolve returns the identical solution") {
  std::mt19937_64 gen(123);
  for (int trial = 0; trial < 30; ++trial) {
    const QPProblem p = random_qp(gen);
    const QPResult cold = solve_qp(p);
    REQUIRE(cold.ok());
    QPOptions opt;
    opt.warm_active = cold.active_set;
    const QPResult warm = solve_qp(p, opt);
    REQUIRE(warm.ok());
    CHECK((cold.x - warm.x).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("deterministic: identical inputs give bit-identical solutions") {
  std::mt19937_64 gen(31);
  const QPProblem p = random_qp(gen);
  const QPResult a = solve_qp(p);
  const QPResult b = solve_qp(p);
  CHECK((a.x - b.x).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.iterations == b.iterations);
}

TEST_CASE("infeasible boxes are detected") {
  QPProblem p;
  p.hess = Mat::Identity(2, 2);
  p.grad = Vec::Zero(2);
  p.A_eq.resize(0, 2);
  p.b_eq.resize(0);
  p.A_in.resize(2, 2);
  p.A_in << 1, 0, -1, 0;  // x0 <= 0 and -x0 <= -1
  p.b_in.resize(2);
  p.b_in << 0.0, -1.0;
  const QPResult r = solve_qp(p);
  CHECK(r.status == QPStatus::Infeasible);
}

TEST_CASE("inconsistent equalities are infeasible") {
  QPProblem p;
  p.hess = Mat::Identity(2, 2);
  p.grad = Vec::Zero(2);
  p.A_eq.resize(2, 2);
  p.A_eq << 1, 1, 1, 1;
  p.b_eq.resize(2);
  p.b_eq << 1.0, 2.0;
  p.A_in.resize(0, 2);
  p.b_in.resize(0);
  const QPResult r = solve_qp(p);
  CHECK(r.status == QPStatus::Infeasible);
}

TEST_CASE("iteration cap reports best iterate and residuals") {
  std::mt19937_64 gen(55);
  QPProblem p = random_qp(gen);
  QPOptions opt;
  opt.max_iterations = 1;
  const QPResult r = solve_qp(p, opt);
  if (r.status == QPStatus::MaxIterations) {
    CHECK(r.x.size() == p.nvars());
    CHECK(std::isfinite(r.kkt_stationarity));
    CHECK(std::isfinite(r.kkt_primal));
  }
}

TEST_CASE("indefinite or broken hessians are flagged") {
  QPProblem p;
  p.hess = -Mat::Identity(2, 2);
  p.grad = Vec::Zero(2);
  p.A_eq.resize(0, 2);
  p.b_eq.resize(0);
  p.A_in.resize(0, 2);
  p.b_in.resize(0);
  const QPResult r = solve_qp(p);
  CHECK(r.status == QPStatus::IllConditioned);
}

TEST_CASE("dump and reload round-trips exactly") {
  std::mt19937_64 gen(77);
  const QPProblem p = random_qp(gen);
  std::stringstream ss;
  dump_qp(p, ss);
  const QPProblem q = load_qp_dump(ss);
  CHECK((p.hess - q.hess).cwiseAbs().maxCoeff() == 0.0);
  CHECK((p.grad - q.grad).cwiseAbs().maxCoeff() == 0.0);
  CHECK((p.A_eq - q.A_eq).cwiseAbs().maxCoeff() == 0.0);
  CHECK((p.b_eq - q.b_eq).cwiseAbs().maxCoeff() == 0.0);
  CHECK((p.A_in - q.A_in).cwiseAbs().maxCoeff() == 0.0);
  CHECK((p.b_in - q.b_in).cwiseAbs().maxCoeff() == 0.0);
  const QPResult a = solve_qp(p), b = solve_qp(q);
  CHECK((a.x - b.x).cwiseAbs().maxCoeff() == 0.0);
}
