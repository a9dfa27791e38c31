#include "prosim/clf.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <complex>
#include <sstream>

namespace prosim {

static Mat double_integrator_F(int m) {
  Mat F = Mat::Zero(2 * m, 2 * m);
  F.topRightCorner(m, m).setIdentity();
  return F;
}

static Mat double_integrator_G(int m) {
  Mat G = Mat::Zero(2 * m, m);
  G.bottomRows(m).setIdentity();
  return G;
}

static double care_residual(const Mat& F, const Mat& G, const Mat& Q,
                            const Mat& P) {
  const Mat R = F.transpose() * P + P * F - P * G * G.transpose() * P + Q;
  return R.cwiseAbs().maxCoeff();
}

// One Lyapunov solve A'X + XA = -C via the Kronecker system; sizes here
// are tiny (n = 2m).
static Mat lyapunov(const Mat& A, const Mat& C) {
  const int n = int(A.rows());
  Mat K = Mat::Zero(n * n, n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        K(i * n + j, k * n + j) += A(k, i);  // (A' X)_{ij}
        K(i * n + j, i * n + k) += A(k, j);  // (X A)_{ij}
      }
  Vec rhs(n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) rhs[i * n + j] = -C(i, j);
  const Vec x = K.fullPivLu().solve(rhs);
  Mat X(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) X(i, j) = x[i * n + j];
  return 0.5 * (X + X.transpose());
}

Mat solve_care(int m, const Mat& Q) {
  if (m < 1) throw SolverError("care: output count must be >= 1");
  const int n = 2 * m;
  if (Q.rows() != n || Q.cols() != n)
    throw SolverError("care: Q must be 2m x 2m");
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw SolverError("care: Q must be symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> qe(Q);
  if (qe.eigenvalues().minCoeff() <= 0)
    throw SolverError("care: Q must be positive definite");

  const Mat F = double_integrator_F(m);
  const Mat G = double_integrator_G(m);

  // Stable invariant subspace of the Hamiltonian.
  Mat Ham(2 * n, 2 * n);
  Ham.topLeftCorner(n, n) = F;
  Ham.topRightCorner(n, n) = -G * G.transpose();
  Ham.bottomLeftCorner(n, n) = -Q;
  Ham.bottomRightCorner(n, n) = -F.transpose();

  Mat P;
  bool have_init = false;
  Eigen::EigenSolver<Mat> es(Ham);
  if (es.info() == Eigen::Success) {
    Eigen::MatrixXcd basis(2 * n, n);
    int got = 0;
    for (int i = 0; i < 2 * n && got < n; ++i) {
      if (es.eigenvalues()[i].real() < 0)
        basis.col(got++) = es.eigenvectors().col(i);
    }
    if (got == n) {
      const Eigen::MatrixXcd X1 = basis.topRows(n);
      const Eigen::MatrixXcd X2 = basis.bottomRows(n);
      Eigen::FullPivLU<Eigen::MatrixXcd> lu(X1);
      if (lu.isInvertible()) {
        P = (X2 * lu.inverse()).real();
        P = 0.5 * (P + P.transpose());
        have_init = true;
      }
    }
  }
  if (!have_init) {
    // Fallback start: P0 = [2I I; I 2I] makes F - GG'P0 Hurwitz.
    P = Mat::Identity(n, n) * 2.0;
    P.topRightCorner(m, m).setIdentity();
    P.bottomLeftCorner(m, m).setIdentity();
  }

  // Newton refinement: A_k = F - GG'P_k, solve A_k'P+ + P+A_k = -Q - P_k GG'P_k.
  double res = care_residual(F, G, Q, P);
  for (int it = 0; it < 30 && res > 1e-12; ++it) {
    const Mat A = F - G * G.transpose() * P;
    const Mat C = Q + P * G * G.transpose() * P;
    P = lyapunov(A, C);
    const double next = care_residual(F, G, Q, P);
    if (!std::isfinite(next)) break;
    res = next;
  }
  if (res > 1e-10) {
    std::ostringstream os;
    os << "care solver did not converge; residual " << res;
    throw SolverError(os.str());
  }
  Eigen::SelfAdjointEigenSolver<Mat> pe(P);
  if (pe.eigenvalues().minCoeff() <= 0)
    throw SolverError("care produced a non positive definite P");
  return P;
}

double CLFData::c1() const {
  return Eigen::SelfAdjointEigenSolver<Mat>(P).eigenvalues().minCoeff();
}

double CLFData::c2() const {
  return Eigen::SelfAdjointEigenSolver<Mat>(P).eigenvalues().maxCoeff();
}

CLFData make_clf(int m, const Mat& Q, double eps) {
  if (!(eps > 0 && eps <= 1)) throw ConfigError("clf: eps must be in (0, 1]");
  CLFData clf;
  clf.m = m;
  clf.Q = Q;
  clf.eps = eps;
  clf.P = solve_care(m, Q);
  Mat E = Mat::Identity(2 * m, 2 * m);
  E.topLeftCorner(m, m) *= 1.0 / eps;
  clf.P_eps = E * clf.P * E;
  Eigen::SelfAdjointEigenSolver<Mat> qe(Q), pe(clf.P);
  clf.gamma = qe.eigenvalues().minCoeff() / pe.eigenvalues().maxCoeff();
  return clf;
}

double clf_value(const CLFData& clf, RefVec xi) {
  if (xi.size() != 2 * clf.m) throw ModelError("clf: xi dimension mismatch");
  return xi.dot(clf.P_eps * xi);
}

CLFDerivatives clf_derivative_terms(const CLFData& clf, RefVec xi) {
  if (xi.size() != 2 * clf.m) throw ModelError("clf: xi dimension mismatch");
  const Mat F = double_integrator_F(clf.m);
  const Mat G = double_integrator_G(clf.m);
  CLFDerivatives out;
  out.LFV = xi.dot((F.transpose() * clf.P_eps + clf.P_eps * F) * xi);
  out.LGV = 2.0 * (xi.transpose() * clf.P_eps * G);
  return out;
}

}  // namespace prosim
