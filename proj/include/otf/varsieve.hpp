#ifndef OTF_VARSIEVE_HPP
#define OTF_VARSIEVE_HPP

#include <string>
#include <vector>
#include <Eigen/Dense>

#include "otf/dataset.hpp"
#include "otf/linalg.hpp"

namespace otf {

// Reduced-form VAR(k) fitted by OLS with all pre-sample lags set to the
// sample mean, so residuals exist for every t = 1..n.
//
//   y_t = mu + sum_j Psi_j (y_{t-j} - mu) + e_t
//
// The regression includes an intercept; mu is the implied unconditional mean
// (I - sum Psi)^{-1} applied to it. Residuals therefore have exact zero mean.
struct VarFit {
  int k = 0;
  Eigen::VectorXd mu_tilde;            // d
  std::vector<Eigen::MatrixXd> psi;    // k matrices, d x d
  Eigen::MatrixXd residuals;           // n x d, one row per period
  SymMatrix sigma_tilde;               // (1/n) sum e_t e_t'
  DataSet data;                        // the fitted sample
  Eigen::VectorXd presample;           // value used for lags at t <= 0 (= sample mean)

  Eigen::Index d() const { return mu_tilde.size(); }
  Eigen::Index n() const { return residuals.rows(); }

  // Sum of the lag matrices, I - Psi(1).
  Eigen::MatrixXd i_minus_psi_sum() const;

  // One-step predictive mean mu_{t|t-1} for t in 1..n (equals y_t - e_t).
  Eigen::VectorXd predictive_mean(Eigen::Index t) const;

  // Companion-form stationarity of the fitted lag polynomial.
  bool stationary() const;
};

VarFit fit_var(const DataSet& data, int k);

// Recomputes residuals for all t = 1..n at arbitrary (mu, Psi_1..Psi_k),
// holding the data and the pre-sample constant fixed. Matches VarFit.residuals
// exactly at the fitted values. Used by the sensitivity machinery.
Eigen::MatrixXd var_residuals_at(const DataSet& data,
                                 const Eigen::VectorXd& presample,
                                 const Eigen::VectorXd& mu,
                                 const std::vector<Eigen::MatrixXd>& psi);

enum class LagCriterion { aic, bic };

// argmin over k in 1..k_max of log det Sigma(k) + penalty * (k d^2)/n,
// penalty 2 (aic) or log n (bic). Ties break toward smaller k.
int select_lags(const DataSet& data, int k_max, LagCriterion criterion);

// Data-side VMA coefficients by VAR inversion, Lambda_0 = I implicit.
struct DataVMA {
  std::vector<Eigen::MatrixXd> lambda_tilde;  // Lambda_1..Lambda_J
};

DataVMA vma_from_var(const VarFit& fit, int horizon);

// OLS projection on {1, t, cos(2 pi j t / n) : j = 1..n_cosines}; returns the
// fitted trend and the residual data set for subsequent AR fitting.
struct DetrendResult {
  Eigen::MatrixXd trend;  // n x d
  DataSet residual;
};

DetrendResult detrend_flexible(const DataSet& data, int n_cosines);

}  // namespace otf

#endif  // OTF_VARSIEVE_HPP
