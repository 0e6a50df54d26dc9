#include "otf/varsieve.hpp"

#include <cmath>

#include "otf/errors.hpp"

namespace otf {

namespace {

// Lag value with the pre-sample convention: y_s = presample for s <= 0.
inline Eigen::VectorXd lag_value(const Eigen::MatrixXd& y,
                                 const Eigen::VectorXd& presample,
                                 Eigen::Index t /* 1-based */) {
  if (t <= 0) return presample;
  return y.row(t - 1).transpose();
}

}  // namespace

Eigen::MatrixXd VarFit::i_minus_psi_sum() const {
  Eigen::MatrixXd s = Eigen::MatrixXd::Identity(d(), d());
  for (const auto& p : psi) s -= p;
  return s;
}

Eigen::VectorXd VarFit::predictive_mean(Eigen::Index t) const {
  return data.values.row(t - 1).transpose() - residuals.row(t - 1).transpose();
}

bool VarFit::stationary() const {
  const Eigen::Index dd = d();
  Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(dd * k, dd * k);
  for (int j = 0; j < k; ++j) comp.block(0, j * dd, dd, dd) = psi[static_cast<std::size_t>(j)];
  if (k > 1) {
    comp.block(dd, 0, dd * (k - 1), dd * (k - 1)) =
        Eigen::MatrixXd::Identity(dd * (k - 1), dd * (k - 1));
  }
  return spectral_radius_lt_one(comp);
}

VarFit fit_var(const DataSet& data, int k) {
  data.validate();
  const Eigen::Index n = data.n();
  const Eigen::Index d = data.d();
  if (k < 1) throw InsufficientData("fit_var: k must be >= 1");
  if (n <= static_cast<Eigen::Index>(d) * k + 1) {
    throw InsufficientData("fit_var: need n > d*k + 1");
  }

  // A zero-variance column makes the lagged regressors collinear with the
  // intercept regardless of jitter.
  Eigen::VectorXd vars = data.column_variances();
  double scale = data.values.cwiseAbs().maxCoeff();
  for (Eigen::Index j = 0; j < d; ++j) {
    if (vars(j) <= 1e-24 * (1.0 + scale * scale)) {
      throw CollinearRegressors("fit_var: column " + std::to_string(j) +
                                " is constant");
    }
  }

  const Eigen::VectorXd ybar = data.column_means();
  const Eigen::Index p = 1 + d * k;  // intercept + k lags

  // Regressors on the raw data with pre-sample lags at the sample mean.
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index t = 1; t <= n; ++t) {
    x(t - 1, 0) = 1.0;
    for (int j = 1; j <= k; ++j) {
      x.block(t - 1, 1 + (j - 1) * d, 1, d) =
          lag_value(data.values, ybar, t - j).transpose();
    }
  }

  Eigen::MatrixXd gram = x.transpose() * x;
  Eigen::MatrixXd xty = x.transpose() * data.values;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  bool bad = (ldlt.info() != Eigen::Success) || ldlt.rcond() < 1e-13;
  if (!bad) {
    Eigen::MatrixXd beta_try = ldlt.solve(xty);
    bad = !beta_try.allFinite() ||
          (gram * beta_try - xty).norm() > 1e-6 * (1.0 + xty.norm());
  }
  Eigen::MatrixXd beta;  // p x d
  if (!bad) {
    beta = ldlt.solve(xty);
  } else {
    double jitter = 1e-10 * gram.trace();
    if (!(jitter > 0.0)) jitter = 1e-10;
    Eigen::LDLT<Eigen::MatrixXd> ldlt2(
        gram + jitter * Eigen::MatrixXd::Identity(p, p));
    beta = ldlt2.solve(xty);
    if (ldlt2.info() != Eigen::Success || !beta.allFinite()) {
      throw CollinearRegressors("fit_var: singular regressor Gram matrix");
    }
  }

  VarFit fit;
  fit.k = k;
  fit.data = data;
  fit.presample = ybar;
  fit.psi.reserve(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    fit.psi.push_back(beta.block(1 + j * d, 0, d, d).transpose());
  }
  Eigen::VectorXd intercept = beta.row(0).transpose();
  Eigen::MatrixXd imp = fit.i_minus_psi_sum();
  fit.mu_tilde = imp.fullPivLu().solve(intercept);
  if (!fit.mu_tilde.allFinite()) fit.mu_tilde = ybar;  // unit-root fits

  fit.residuals = data.values - x * beta;
  fit.sigma_tilde =
      SymMatrix(fit.residuals.transpose() * fit.residuals / static_cast<double>(n));
  return fit;
}

Eigen::MatrixXd var_residuals_at(const DataSet& data,
                                 const Eigen::VectorXd& presample,
                                 const Eigen::VectorXd& mu,
                                 const std::vector<Eigen::MatrixXd>& psi) {
  const Eigen::Index n = data.n();
  const Eigen::Index d = data.d();
  const int k = static_cast<int>(psi.size());
  Eigen::MatrixXd resid(n, d);
  for (Eigen::Index t = 1; t <= n; ++t) {
    Eigen::VectorXd e = data.values.row(t - 1).transpose() - mu;
    for (int j = 1; j <= k; ++j) {
      e -= psi[static_cast<std::size_t>(j - 1)] *
           (lag_value(data.values, presample, t - j) - mu);
    }
    resid.row(t - 1) = e.transpose();
  }
  return resid;
}

int select_lags(const DataSet& data, int k_max, LagCriterion criterion) {
  if (k_max < 1) throw InsufficientData("select_lags: k_max must be >= 1");
  const double n = static_cast<double>(data.n());
  const double d = static_cast<double>(data.d());
  double penalty = (criterion == LagCriterion::aic) ? 2.0 : std::log(n);
  int best_k = -1;
  double best = 0.0;
  for (int k = 1; k <= k_max; ++k) {
    VarFit fit = fit_var(data, k);
    double logdet = std::log(fit.sigma_tilde.mat().determinant());
    double crit = logdet + penalty * (k * d * d) / n;
    if (best_k < 0 || crit < best - 1e-12) {
      best_k = k;
      best = crit;
    }
  }
  return best_k;
}

DataVMA vma_from_var(const VarFit& fit, int horizon) {
  if (!fit.stationary()) {
    throw NonStationary("vma_from_var: fitted VAR is not stationary");
  }
  const Eigen::Index d = fit.d();
  DataVMA out;
  out.lambda_tilde.reserve(static_cast<std::size_t>(horizon));
  std::vector<Eigen::MatrixXd> lam;  // lam[0] = Lambda_0 = I
  lam.push_back(Eigen::MatrixXd::Identity(d, d));
  for (int j = 1; j <= horizon; ++j) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(d, d);
    for (int i = 1; i <= std::min(j, fit.k); ++i) {
      m += fit.psi[static_cast<std::size_t>(i - 1)] * lam[static_cast<std::size_t>(j - i)];
    }
    lam.push_back(m);
    out.lambda_tilde.push_back(m);
  }
  return out;
}

DetrendResult detrend_flexible(const DataSet& data, int n_cosines) {
  data.validate();
  if (n_cosines < 0) throw InsufficientData("detrend_flexible: n_cosines must be >= 0");
  const Eigen::Index n = data.n();
  const Eigen::Index p = 2 + n_cosines;
  if (n <= p) throw InsufficientData("detrend_flexible: sample too short for the basis");
  Eigen::MatrixXd x(n, p);
  const double pi2 = 6.283185307179586476925286766559;
  for (Eigen::Index t = 1; t <= n; ++t) {
    x(t - 1, 0) = 1.0;
    x(t - 1, 1) = static_cast<double>(t);
    for (int j = 1; j <= n_cosines; ++j) {
      x(t - 1, 1 + j) = std::cos(pi2 * j * static_cast<double>(t) / static_cast<double>(n));
    }
  }
  Eigen::MatrixXd beta = (x.transpose() * x).ldlt().solve(x.transpose() * data.values);
  DetrendResult out;
  out.trend = x * beta;
  out.residual = make_dataset(data.values - out.trend, data.names);
  return out;
}

}  // namespace otf
