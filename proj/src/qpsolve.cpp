#include "prosim/qpsolve.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace prosim {

double QPProblem::objective(RefVec x) const {
  return 0.5 * x.dot(hess * x) + grad.dot(x);
}

void QPProblem::validate() const {
  const int n = nvars();
  if (hess.cols() != n || grad.size() != n)
    throw SolverError("qp: hessian/gradient dimension mismatch");
  if (A_eq.rows() != b_eq.size() || (A_eq.rows() > 0 && A_eq.cols() != n))
    throw SolverError("qp: equality block dimension mismatch");
  if (A_in.rows() != b_in.size() || (A_in.rows() > 0 && A_in.cols() != n))
    throw SolverError("qp: inequality block dimension mismatch");
  if ((hess - hess.transpose()).cwiseAbs().maxCoeff() > 1e-9)
    throw SolverError("qp: hessian must be symmetric");
  if (layout.size() != 0 && layout.size() != n)
    throw SolverError("qp: layout size mismatch");
}

const char* to_string(QPStatus s) {
  switch (s) {
    case QPStatus::Optimal: return "optimal";
    case QPStatus::Infeasible: return "infeasible";
    case QPStatus::MaxIterations: return "max_iterations";
    case QPStatus::IllConditioned: return "ill_conditioned";
  }
  return "?";
}

namespace {

// Internal constraint view: n'x >= b, equalities first (never dropped).
struct ConstraintTable {
  Mat N;          // n x (p + q), one column per constraint
  Vec b;
  Vec scale;      // row equilibration factor applied
  int n_eq = 0;
  int total() const { return int(N.cols()); }
};

ConstraintTable build_table(const QPProblem& p) {
  const int n = p.nvars();
  const int pe = int(p.A_eq.rows()), qi = int(p.A_in.rows());
  ConstraintTable t;
  t.n_eq = pe;
  t.N.resize(n, pe + qi);
  t.b.resize(pe + qi);
  t.scale.resize(pe + qi);
  for (int i = 0; i < pe; ++i) {
    double s = p.A_eq.row(i).cwiseAbs().maxCoeff();
    if (s <= 0) s = 1.0;
    t.N.col(i) = p.A_eq.row(i).transpose() / s;
    t.b[i] = p.b_eq[i] / s;
    t.scale[i] = s;
  }
  for (int j = 0; j < qi; ++j) {
    double s = p.A_in.row(j).cwiseAbs().maxCoeff();
    if (s <= 0) s = 1.0;
    // A_in x <= b_in  ->  (-A_in) x >= -b_in.
    t.N.col(pe + j) = -p.A_in.row(j).transpose() / s;
    t.b[pe + j] = -p.b_in[j] / s;
    t.scale[pe + j] = s;
  }
  return t;
}

struct Residuals {
  double stat = 0, primal = 0, comp = 0;
};

Residuals kkt_residuals(const QPProblem& p, const Vec& x, const Vec& y_eq,
                        const Vec& y_in) {
  Residuals r;
  Vec stat = p.hess * x + p.grad;
  if (p.A_eq.rows() > 0) stat += p.A_eq.transpose() * y_eq;
  if (p.A_in.rows() > 0) stat += p.A_in.transpose() * y_in;
  r.stat = stat.size() ? stat.cwiseAbs().maxCoeff() : 0.0;
  if (p.A_eq.rows() > 0)
    r.primal = (p.A_eq * x - p.b_eq).cwiseAbs().maxCoeff();
  if (p.A_in.rows() > 0) {
    const Vec s = p.A_in * x - p.b_in;
    r.primal = std::max(r.primal, s.cwiseMax(0.0).maxCoeff());
    r.comp = (y_in.array() * s.array()).abs().maxCoeff();
  }
  return r;
}

}  // namespace

QPResult solve_qp(const QPProblem& p, const QPOptions& opt) {
  p.validate();
  const int n = p.nvars();
  const int n_in = int(p.A_in.rows());
  const double inf = std::numeric_limits<double>::infinity();

  QPResult res;
  res.x = Vec::Zero(n);
  res.dual_eq = Vec::Zero(p.A_eq.rows());
  res.dual_in = Vec::Zero(n_in);

  Eigen::LDLT<Mat> hfac(p.hess);
  if (hfac.info() != Eigen::Success || hfac.isNegative() ||
      (hfac.vectorD().array() <= 0).any()) {
    res.status = QPStatus::IllConditioned;
    return res;
  }

  ConstraintTable tab = build_table(p);

  // Active set state. Equalities occupy the front and never leave.
  std::vector<int> active;       // constraint table indices
  std::vector<double> dual;      // internal multipliers (>= 0 for ineq)
  std::vector<int> flipped;      // sign flips applied to equality normals
  flipped.assign(tab.total(), 1);

  Vec x = -hfac.solve(p.grad);  // unconstrained minimum

  // Equality-constrained solve on a fixed active set; used to polish the
  // final iterate and to verify warm starts, so both paths produce the
  // same bits.
  auto eqp_on = [&](const std::vector<int>& act, Vec& x_out,
                    Vec& u_out) -> bool {
    const int k = int(act.size());
    Mat N(n, k);
    Vec bb(k);
    for (int i = 0; i < k; ++i) {
      N.col(i) = tab.N.col(act[i]);
      bb[i] = tab.b[act[i]];
    }
    Mat K = Mat::Zero(n + k, n + k);
    K.topLeftCorner(n, n) = p.hess;
    if (k > 0) {
      K.topRightCorner(n, k) = -N;
      K.bottomLeftCorner(k, n) = N.transpose();
    }
    Vec rhs(n + k);
    rhs.head(n) = -p.grad;
    rhs.tail(k) = bb;
    Eigen::FullPivLU<Mat> lu(K);
    if (!lu.isInvertible()) return false;
    const Vec sol = lu.solve(rhs);
    x_out = sol.head(n);
    u_out = sol.tail(k);
    return true;
  };

  auto finish = [&](QPStatus status, int iters) {
    if (status == QPStatus::Optimal && !active.empty()) {
      // Canonical order so any route to the same active set produces the
      // same bits.
      std::vector<int> sorted = active;
      std::sort(sorted.begin(), sorted.end());
      Vec xp, up;
      if (eqp_on(sorted, xp, up)) {
        x = xp;
        active = sorted;
        dual.assign(sorted.size(), 0.0);
        for (size_t a = 0; a < sorted.size(); ++a)
          dual[a] = (sorted[a] < tab.n_eq) ? up[int(a)]
                                           : std::max(0.0, up[int(a)]);
      }
    } else if (status == QPStatus::Optimal && active.empty()) {
      x = -hfac.solve(p.grad);
    }
    res.status = status;
    res.iterations = iters;
    res.x = x;
    res.dual_eq.setZero();
    res.dual_in.setZero();
    res.active_set.clear();
    for (size_t a = 0; a < active.size(); ++a) {
      const int c = active[a];
      const double u_orig = dual[a] * double(flipped[c]) / tab.scale[c];
      if (c < tab.n_eq)
        res.dual_eq[c] = -u_orig;  // n = +A_eq row in the >= convention
      else {
        res.dual_in[c - tab.n_eq] = dual[a] / tab.scale[c];
        res.active_set.push_back(c - tab.n_eq);
      }
    }
    std::sort(res.active_set.begin(), res.active_set.end());
    const Residuals r = kkt_residuals(p, x, res.dual_eq, res.dual_in);
    res.kkt_stationarity = r.stat;
    res.kkt_primal = r.primal;
    res.kkt_complementarity = r.comp;
    return res;
  };

  // Optional verified warm start: equality-constrained solve on the
  // hinted active set; accepted only if it is already KKT-optimal. The
  // final cold iterate is polished through the same solve, so a resolve
  // of an identical problem reproduces the answer exactly.
  if (!opt.warm_active.empty()) {
    std::vector<int> hint;
    for (int i = 0; i < tab.n_eq; ++i) hint.push_back(i);
    for (int j : opt.warm_active)
      if (j >= 0 && j < n_in) hint.push_back(tab.n_eq + j);
    std::sort(hint.begin() + tab.n_eq, hint.end());
    hint.erase(std::unique(hint.begin(), hint.end()), hint.end());
    Vec xw, uw;
    if (eqp_on(hint, xw, uw)) {
      bool good = true;
      for (size_t i = tab.n_eq; i < hint.size() && good; ++i)
        if (uw[int(i)] < -opt.tol) good = false;
      for (int c = tab.n_eq; c < tab.total() && good; ++c)
        if (tab.N.col(c).dot(xw) - tab.b[c] < -1e-9) good = false;
      if (good) {
        x = xw;
        active = hint;
        dual.assign(hint.size(), 0.0);
        for (size_t i = 0; i < hint.size(); ++i)
          dual[i] = (int(i) < tab.n_eq) ? uw[int(i)]
                                        : std::max(0.0, uw[int(i)]);
        return finish(QPStatus::Optimal, 0);
      }
    }
  }

  // Dense step computation against the current active set:
  //   z = H^-1 (I - N (N'H^-1 N)^-1 N'H^-1) n+   (primal direction)
  //   r = (N'H^-1 N)^-1 N'H^-1 n+                (dual direction)
  auto step_directions = [&](const Vec& nplus, Vec& z, Vec& r) -> bool {
    const int k = int(active.size());
    const Vec hin = hfac.solve(nplus);
    if (k == 0) {
      z = hin;
      r.resize(0);
      return true;
    }
    Mat N(n, k);
    for (int i = 0; i < k; ++i) N.col(i) = tab.N.col(active[i]);
    const Mat HiN = hfac.solve(N);
    const Mat S = N.transpose() * HiN;
    Eigen::LDLT<Mat> sf(S);
    if (sf.info() != Eigen::Success) return false;
    r = sf.solve(N.transpose() * hin);
    z = hin - HiN * r;
    return true;
  };

  int iter = 0;
  const int max_iter = std::max(opt.max_iterations, 1);

  // Phase 1: install equality constraints.
  for (int c = 0; c < tab.n_eq; ++c) {
    double s = tab.N.col(c).dot(x) - tab.b[c];
    if (s > 0) {
      tab.N.col(c) = -tab.N.col(c);
      tab.b[c] = -tab.b[c];
      flipped[c] = -1;
      s = -s;
    }
    Vec z, r;
    if (!step_directions(tab.N.col(c), z, r))
      return finish(QPStatus::IllConditioned, iter);
    const double zn = z.dot(tab.N.col(c));
    if (zn <= opt.tol * std::max(1.0, tab.N.col(c).norm())) {
      if (std::abs(s) <= 1e-9) continue;  // redundant but consistent
      return finish(QPStatus::Infeasible, iter);
    }
    const double t = -s / zn;
    x += t * z;
    for (size_t a = 0; a < active.size(); ++a) dual[a] -= t * r[int(a)];
    active.push_back(c);
    dual.push_back(t);
  }

  // Phase 2: dual active-set iterations over the inequalities.
  while (iter++ < max_iter) {
    // Most violated inactive inequality (smallest index on ties).
    int pick = -1;
    double worst = -opt.tol * 10 - 1e-12;
    for (int c = tab.n_eq; c < tab.total(); ++c) {
      if (std::find(active.begin(), active.end(), c) != active.end()) continue;
      const double s = tab.N.col(c).dot(x) - tab.b[c];
      if (s < worst) {
        worst = s;
        pick = c;
      }
    }
    if (pick < 0) return finish(QPStatus::Optimal, iter);

    const Vec nplus = tab.N.col(pick);
    double u_plus = 0.0;
    double s_pick = worst;

    // Inner loop: take steps until `pick` becomes active or infeasibility
    // is proven.
    for (;;) {
      if (iter++ >= max_iter) return finish(QPStatus::MaxIterations, iter);
      Vec z, r;
      if (!step_directions(nplus, z, r))
        return finish(QPStatus::IllConditioned, iter);
      const double zn = z.dot(nplus);
      const bool z_zero = zn <= opt.tol * std::max(1.0, nplus.squaredNorm());

      // Blocking (partial) step over active inequalities with r > 0.
      double t1 = inf;
      int block = -1;
      for (size_t a = 0; a < active.size(); ++a) {
        if (active[a] < tab.n_eq) continue;
        if (r[int(a)] > opt.tol) {
          const double cand = dual[a] / r[int(a)];
          if (cand < t1 - 1e-14) {
            t1 = cand;
            block = int(a);
          }
        }
      }
      const double t2 = z_zero ? inf : -s_pick / zn;
      const double t = std::min(t1, t2);
      if (t >= inf) return finish(QPStatus::Infeasible, iter);

      if (t2 >= inf) {
        // Dual-only step.
        for (size_t a = 0; a < active.size(); ++a) dual[a] -= t * r[int(a)];
        u_plus += t;
        active.erase(active.begin() + block);
        dual.erase(dual.begin() + block);
        continue;
      }
      x += t * z;
      for (size_t a = 0; a < active.size(); ++a) dual[a] -= t * r[int(a)];
      u_plus += t;
      s_pick = nplus.dot(x) - tab.b[pick];
      if (t2 <= t1) {
        active.push_back(pick);
        dual.push_back(u_plus);
        break;
      }
      active.erase(active.begin() + block);
      dual.erase(dual.begin() + block);
    }
  }
  return finish(QPStatus::MaxIterations, iter);
}

// --- problem dump -----------------------------------------------------------

static void write_array(std::ostream& os, const std::string& name,
                        const Mat& m) {
  os << "%%MatrixMarket matrix array real general\n";
  os << "% section " << name << "\n";
  os << m.rows() << " " << m.cols() << "\n";
  char buf[64];
  for (int j = 0; j < m.cols(); ++j)
    for (int i = 0; i < m.rows(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g\n", m(i, j));
      os << buf;
    }
}

void dump_qp(const QPProblem& p, std::ostream& os) {
  os << "% qp dump; sections: hess grad a_eq b_eq a_in b_in\n";
  os << "% layout qdd=" << p.layout.nq << " u=" << p.layout.nu
     << " lambda=" << p.layout.nlam << " delta=" << (p.layout.has_delta ? 1 : 0)
     << "\n";
  write_array(os, "hess", p.hess);
  write_array(os, "grad", p.grad);
  write_array(os, "a_eq", p.A_eq);
  write_array(os, "b_eq", p.b_eq);
  write_array(os, "a_in", p.A_in);
  write_array(os, "b_in", p.b_in);
}

static Mat read_array(std::istream& is) {
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line[0] != '%') break;
  }
  std::istringstream hdr(line);
  int rows = 0, cols = 0;
  hdr >> rows >> cols;
  Mat m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) is >> m(i, j);
  is.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
  return m;
}

QPProblem load_qp_dump(std::istream& is) {
  std::string line;
  std::getline(is, line);  // banner
  std::getline(is, line);  // layout
  QPProblem p;
  std::istringstream ls(line);
  std::string tok;
  while (ls >> tok) {
    auto eq = tok.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = tok.substr(0, eq);
    const int val = std::stoi(tok.substr(eq + 1));
    if (key == "qdd") p.layout.nq = val;
    if (key == "u") p.layout.nu = val;
    if (key == "lambda") p.layout.nlam = val;
    if (key == "delta") p.layout.has_delta = (val != 0);
  }
  p.hess = read_array(is);
  p.grad = read_array(is);
  p.A_eq = read_array(is);
  p.b_eq = read_array(is);
  p.A_in = read_array(is);
  p.b_in = read_array(is);
  return p;
}

}  // namespace prosim
