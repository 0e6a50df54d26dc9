#ifndef OTF_LINALG_HPP
#define OTF_LINALG_HPP

#include <Eigen/Dense>

#include "otf/errors.hpp"

namespace otf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Dense symmetric matrix. Symmetrized on construction; entries must be finite.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(const MatrixXd& m);

  Eigen::Index dim() const { return m_.rows(); }
  const MatrixXd& mat() const { return m_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

  static SymMatrix identity(Eigen::Index n) { return SymMatrix(MatrixXd::Identity(n, n)); }

 private:
  MatrixXd m_;
};

struct EigDecomposition {
  VectorXd eigenvalues;   // ascending
  MatrixXd eigenvectors;  // orthonormal columns, m = Q diag(w) Q'
};

// Default relative rank tolerance: eigenvalues within rank_tol * lambda_max of
// zero are treated as structural zeros.
inline constexpr double kDefaultRankTol = 1e-10;

// Spectral decomposition of a symmetric matrix.
EigDecomposition eig_sym(const SymMatrix& m);

// PSD square root by spectral truncation. Eigenvalues in [-tol, tol] with
// tol = rank_tol * lambda_max are set to zero; an eigenvalue below -tol raises NotPSD.
SymMatrix sqrt_psd(const SymMatrix& m, double rank_tol = kDefaultRankTol);

// Moore-Penrose pseudo-inverse of a PSD matrix (spectral truncation at rank_tol).
SymMatrix pinv_psd(const SymMatrix& m, double rank_tol = kDefaultRankTol);

// Pseudo-inverse square root: pinv_psd(sqrt_psd(m)).
SymMatrix pinv_sqrt_psd(const SymMatrix& m, double rank_tol = kDefaultRankTol);

// Rank at tolerance rank_tol * lambda_max.
Eigen::Index rank_psd(const SymMatrix& m, double rank_tol = kDefaultRankTol);

// Upper bound check on the spectral radius of a (generally nonsymmetric) square
// matrix by repeated squaring: returns true iff some power ||C^(2^i)|| < 1,
// which certifies rho(C) < 1. Unit roots and explosive matrices return false.
bool spectral_radius_lt_one(const MatrixXd& c);

// Solves X = C X C' + Q by fixed-point iteration. Requires rho(C) < 1.
SymMatrix solve_lyapunov(const MatrixXd& c, const SymMatrix& q,
                         int max_iter = 100000, double tol = 1e-12);

}  // namespace otf

#endif  // OTF_LINALG_HPP
