#ifndef OTF_TRANSPORT_HPP
#define OTF_TRANSPORT_HPP

#include <functional>
#include <string>
#include <vector>
#include <Eigen/Dense>

#include "otf/kalman.hpp"
#include "otf/linalg.hpp"
#include "otf/model.hpp"
#include "otf/varsieve.hpp"

namespace otf {

// Gaussian optimal transport map between one-step predictive distributions:
//   P = Sigma_data^{-1/2} [Sigma_data^{1/2} Sigma_model Sigma_data^{1/2}]^{1/2} Sigma_data^{-1/2}
// P is symmetric PSD and satisfies P Sigma_data P = Sigma_model.
struct TransportMap {
  Eigen::MatrixXd P;
  SymMatrix sigma_model;
  SymMatrix sigma_data;
};

// sigma_data must be full rank; a rank-deficient sigma_data raises
// DataVarianceSingular unless allow_singular_data is set, in which case the
// inverse square root is taken on the support (pseudo-inverse) and the map is
// restricted to it. sigma_model may be singular (constant-rank models).
TransportMap transport_map(const SymMatrix& sigma_model, const SymMatrix& sigma_data,
                           double rank_tol = kDefaultRankTol,
                           bool allow_singular_data = false);

// Model-consistent sample and filtered states from the coupled recursion:
//   nu_{t|t-1} = C nu_{t-1|t-1};   mu_{t|t-1} = mu + A nu_{t|t-1}
//   y_t = mu_{t|t-1} + P e_t;      nu_{t|t} = nu_{t|t-1} + K P e_t
struct CoupledOutput {
  Eigen::MatrixXd y;             // n x d_y coupled series
  Eigen::MatrixXd nu_filtered;   // n x d_z
  Eigen::MatrixXd nu_predicted;  // n x d_z
  Eigen::MatrixXd mu_predicted;  // n x d_y
  Eigen::VectorXd r2;            // per-variable fit
  std::vector<std::string> warnings;
};

// R^2_j = 1 - sum_t (y_tj - data_tj)^2 / sum_t (data_tj - mean_j)^2.
Eigen::VectorXd coupled_r2(const Eigen::MatrixXd& coupled, const Eigen::MatrixXd& data);

struct RunOtfOptions {
  double rank_tol = kDefaultRankTol;
  bool allow_singular_data = false;
  Eigen::VectorXd nu0;  // empty: zeros
};

// Steady-state variant: residuals come from the fitted VAR, the map is
// constant across periods.
CoupledOutput run_otf(const SteadyKF& steady, const ModelMatrices& m, const VarFit& fit,
                      const RunOtfOptions& opts = {});

// Same recursion with externally supplied residuals and innovation variance
// (used by the sensitivity machinery, which perturbs both).
CoupledOutput run_otf_with(const SteadyKF& steady, const ModelMatrices& m,
                           const Eigen::MatrixXd& residuals, const SymMatrix& sigma_data,
                           const Eigen::MatrixXd& data_values, const RunOtfOptions& opts = {});

// Unit-root (filtering-only) variant: the covariance recursion runs
// time-varying from V0 = kappa * I (zero on a pinned constant state), and the
// per-period transport map is built from Sigma_t and the constant auxiliary
// variance.
struct UnitRootOptions {
  double kappa_scale = 1e4;  // times the data variance
  double rank_tol = kDefaultRankTol;
  bool allow_singular_data = false;
  Eigen::VectorXd nu0;           // empty: zeros
  Eigen::Index constant_state = -1;
  // When true the recursion updates with the data prediction error instead of
  // the transported auxiliary residual: the plain Kalman filter baseline.
  bool plain_kf = false;
};

CoupledOutput run_otf_unitroot(const ModelMatrices& m, const VarFit& fit,
                               const UnitRootOptions& opts = {});

// Conditionally heteroskedastic extension with observable conditioning:
//   y_t = mu(x_t; theta) + Sigma^{1/2}(x_t; theta) v_t
// where x_t is measurable at t-1. Callbacks receive the period (1-based) and
// the full data history; they must only look at rows before t.
struct ConditionalMomentModel {
  std::function<Eigen::VectorXd(Eigen::Index t, const Eigen::MatrixXd& data)> mean;
  std::function<Eigen::MatrixXd(Eigen::Index t, const Eigen::MatrixXd& data)> variance;
};

CoupledOutput run_otf_timevarying(const ConditionalMomentModel& model, const VarFit& fit,
                                  double rank_tol = kDefaultRankTol);

// One-step prediction errors of the plain Kalman filter run on the data
// itself (P = I, updates from the data). Feeding these back through run_otf
// with sigma_data = Sigma reproduces the data exactly.
Eigen::MatrixXd plain_kf_innovations(const SteadyKF& steady, const ModelMatrices& m,
                                     const Eigen::MatrixXd& data_values,
                                     const Eigen::VectorXd& nu0 = {});

// CoupledOutput CSV: period, per-variable data value, coupled value, then
// filtered states.
void write_coupled_csv(const std::string& path, const CoupledOutput& out,
                       const DataSet& data, const std::vector<std::string>& state_names = {});

}  // namespace otf

#endif  // OTF_TRANSPORT_HPP
