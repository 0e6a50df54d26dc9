#ifndef OTF_KALMAN_HPP
#define OTF_KALMAN_HPP

#include <vector>
#include <Eigen/Dense>

#include "otf/dataset.hpp"
#include "otf/linalg.hpp"
#include "otf/model.hpp"

namespace otf {

// Stationary filtering quantities for y_t = mu + A z_t + B v_t,
// z_t = C z_{t-1} + D v_t. Fixed point of
//   Vbar  = C V C' + D D'
//   Sigma = A C V C' A' + (B + A D)(B + A D)'
//   K     = Vbar A' Sigma^+
//   V     = (I - K A) Vbar
// with Sigma^+ the Moore-Penrose inverse when Sigma is singular.
struct SteadyKF {
  SymMatrix V;      // filtered state variance
  SymMatrix Vbar;   // predicted state variance
  Eigen::MatrixXd K;  // d_z x d_y Kalman gain
  SymMatrix Sigma;  // innovation variance, possibly singular
  std::vector<Eigen::MatrixXd> lambda;  // VMA coefficients Lambda_1..Lambda_J = A C^j K

  // Residuals of the four fixed-point equations (diagnostic).
  Eigen::Vector4d residuals(const ModelMatrices& m) const;
};

struct SteadyKFOptions {
  int max_iter = 50000;
  double tol = 1e-12;
  double rank_tol = kDefaultRankTol;
  int vma_horizon = 0;       // 0: use max(50, 10*k_hint) extended until decay
  int vma_k_hint = 4;
  int vma_max_horizon = 2000;
  double vma_decay_tol = 1e-10;
  // Initialization of Vbar for unit-root systems (stable systems start from
  // the Lyapunov solution of the state equation).
  double unitroot_init_scale = 1e4;
};

SteadyKF solve_steady_kf(const ModelMatrices& m, const SteadyKFOptions& opts = {});

// One step of the time-varying covariance recursion used both as the
// independent oracle for the steady solve and for unit-root filtering.
struct KFStepMatrices {
  SymMatrix Vbar;
  SymMatrix Sigma;
  Eigen::MatrixXd K;
  SymMatrix V;
};

KFStepMatrices kf_covariance_step(const ModelMatrices& m, const SymMatrix& v_prev,
                                  double rank_tol = kDefaultRankTol);

// Simulation of the state-space model with v_t iid N(0, I).
struct SimulateOptions {
  enum class Init { stationary, zero, given };
  Init init = Init::stationary;
  Eigen::VectorXd z0;  // used when init == given
};

DataSet simulate(const ModelMatrices& m, Eigen::Index n, std::uint64_t seed,
                 const SimulateOptions& opts = {},
                 const std::vector<std::string>& names = {});

}  // namespace otf

#endif  // OTF_KALMAN_HPP
