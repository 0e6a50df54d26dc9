#include "otf/linalg.hpp"

#include <cmath>

namespace otf {

SymMatrix::SymMatrix(const MatrixXd& m) {
  if (m.rows() != m.cols()) {
    throw InvalidMatrix("SymMatrix requires a square matrix");
  }
  if (!m.allFinite()) {
    throw InvalidMatrix("SymMatrix requires finite entries");
  }
  double scale = m.cwiseAbs().maxCoeff();
  double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (scale > 0.0 && asym > 1e-8 * scale) {
    throw InvalidMatrix("matrix is not symmetric within tolerance");
  }
  m_ = 0.5 * (m + m.transpose());
}

EigDecomposition eig_sym(const SymMatrix& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(m.mat());
  if (solver.info() != Eigen::Success) {
    throw InvalidMatrix("symmetric eigendecomposition failed");
  }
  return {solver.eigenvalues(), solver.eigenvectors()};
}

namespace {

// Applies f to eigenvalues after zeroing those within tol of zero.
// A strictly negative eigenvalue below -tol raises NotPSD.
SymMatrix spectral_apply(const SymMatrix& m, double rank_tol, double (*f)(double)) {
  EigDecomposition ed = eig_sym(m);
  double lmax = ed.eigenvalues.size() ? std::max(0.0, ed.eigenvalues.maxCoeff()) : 0.0;
  double tol = rank_tol * lmax;
  VectorXd w = ed.eigenvalues;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w(i) < -tol) {
      throw NotPSD("matrix has eigenvalue " + std::to_string(w(i)) +
                   " below -" + std::to_string(tol));
    }
    w(i) = (w(i) <= tol) ? 0.0 : f(w(i));
  }
  MatrixXd out = ed.eigenvectors * w.asDiagonal() * ed.eigenvectors.transpose();
  return SymMatrix(out);
}

}  // namespace

SymMatrix sqrt_psd(const SymMatrix& m, double rank_tol) {
  return spectral_apply(m, rank_tol, [](double x) { return std::sqrt(x); });
}

SymMatrix pinv_psd(const SymMatrix& m, double rank_tol) {
  return spectral_apply(m, rank_tol, [](double x) { return 1.0 / x; });
}

SymMatrix pinv_sqrt_psd(const SymMatrix& m, double rank_tol) {
  return spectral_apply(m, rank_tol, [](double x) { return 1.0 / std::sqrt(x); });
}

Eigen::Index rank_psd(const SymMatrix& m, double rank_tol) {
  EigDecomposition ed = eig_sym(m);
  double lmax = ed.eigenvalues.size() ? std::max(0.0, ed.eigenvalues.maxCoeff()) : 0.0;
  double tol = rank_tol * lmax;
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < ed.eigenvalues.size(); ++i) {
    if (ed.eigenvalues(i) > tol) ++r;
  }
  return r;
}

bool spectral_radius_lt_one(const MatrixXd& c) {
  if (c.rows() != c.cols()) throw ShapeError("spectral_radius_lt_one: square matrix required");
  if (c.size() == 0) return true;
  if (!c.allFinite()) return false;
  MatrixXd p = c;
  // ||C^(2^i)||_F < 1 certifies rho < 1; norms >= 1 after many squarings
  // indicate a root on or outside the unit circle at working precision.
  for (int i = 0; i < 24; ++i) {
    double norm = p.norm();
    if (norm < 1.0) return true;
    if (!std::isfinite(norm) || norm > 1e100) return false;
    p = (p * p).eval();
  }
  return false;
}

SymMatrix solve_lyapunov(const MatrixXd& c, const SymMatrix& q, int max_iter, double tol) {
  if (c.rows() != q.dim() || c.cols() != q.dim()) {
    throw ShapeError("solve_lyapunov: dimension mismatch");
  }
  if (!spectral_radius_lt_one(c)) {
    throw NonStationary("solve_lyapunov: spectral radius of C is not below 1");
  }
  MatrixXd x = q.mat();
  for (int it = 0; it < max_iter; ++it) {
    MatrixXd next = c * x * c.transpose() + q.mat();
    next = 0.5 * (next + next.transpose()).eval();
    double resid = (next - x).norm();
    x = next;
    if (resid <= tol * (1.0 + x.norm())) {
      return SymMatrix(x);
    }
  }
  throw RiccatiDivergence("solve_lyapunov: fixed point did not converge");
}

}  // namespace otf
