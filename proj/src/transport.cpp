#include "otf/transport.hpp"

#include <cmath>
#include <fstream>

#include "otf/errors.hpp"

namespace otf {

TransportMap transport_map(const SymMatrix& sigma_model, const SymMatrix& sigma_data,
                           double rank_tol, bool allow_singular_data) {
  if (sigma_model.dim() != sigma_data.dim()) {
    throw ShapeError("transport_map: dimension mismatch");
  }
  const Eigen::Index d = sigma_data.dim();
  if (rank_psd(sigma_data, rank_tol) < d && !allow_singular_data) {
    throw DataVarianceSingular("transport_map: data innovation variance is rank-deficient");
  }
  Eigen::MatrixXd s_half = sqrt_psd(sigma_data, rank_tol).mat();
  Eigen::MatrixXd s_half_inv = pinv_sqrt_psd(sigma_data, rank_tol).mat();
  SymMatrix middle(s_half * sigma_model.mat() * s_half);
  Eigen::MatrixXd inner = sqrt_psd(middle, rank_tol).mat();
  TransportMap map;
  map.P = s_half_inv * inner * s_half_inv;
  map.P = 0.5 * (map.P + map.P.transpose()).eval();
  map.sigma_model = sigma_model;
  map.sigma_data = sigma_data;
  return map;
}

Eigen::VectorXd coupled_r2(const Eigen::MatrixXd& coupled, const Eigen::MatrixXd& data) {
  if (coupled.rows() != data.rows() || coupled.cols() != data.cols()) {
    throw ShapeError("coupled_r2: shape mismatch");
  }
  Eigen::VectorXd mean = data.colwise().mean();
  Eigen::VectorXd r2(data.cols());
  for (Eigen::Index j = 0; j < data.cols(); ++j) {
    double sse = (coupled.col(j) - data.col(j)).squaredNorm();
    double sst = (data.col(j).array() - mean(j)).square().sum();
    r2(j) = 1.0 - sse / sst;
  }
  return r2;
}

namespace {

CoupledOutput coupled_recursion(const ModelMatrices& m, const Eigen::MatrixXd& K,
                                const Eigen::MatrixXd& P, const Eigen::MatrixXd& residuals,
                                const Eigen::MatrixXd& data_values,
                                const Eigen::VectorXd& nu0) {
  const Eigen::Index n = residuals.rows();
  const Eigen::Index dy = m.dy();
  const Eigen::Index dz = m.dz();
  CoupledOutput out;
  out.y.resize(n, dy);
  out.nu_filtered.resize(n, dz);
  out.nu_predicted.resize(n, dz);
  out.mu_predicted.resize(n, dy);
  Eigen::VectorXd nu = nu0.size() ? nu0 : Eigen::VectorXd::Zero(dz);
  if (nu.size() != dz) throw ShapeError("coupled recursion: nu0 has wrong length");
  for (Eigen::Index t = 0; t < n; ++t) {
    Eigen::VectorXd nu_pred = m.C * nu;
    Eigen::VectorXd mu_pred = m.mu + m.A * nu_pred;
    Eigen::VectorXd pe = P * residuals.row(t).transpose();
    Eigen::VectorXd y = mu_pred + pe;
    nu = nu_pred + K * pe;
    out.nu_predicted.row(t) = nu_pred.transpose();
    out.mu_predicted.row(t) = mu_pred.transpose();
    out.y.row(t) = y.transpose();
    out.nu_filtered.row(t) = nu.transpose();
  }
  if (data_values.rows() == n && data_values.cols() == dy) {
    out.r2 = coupled_r2(out.y, data_values);
  }
  return out;
}

}  // namespace

CoupledOutput run_otf(const SteadyKF& steady, const ModelMatrices& m, const VarFit& fit,
                      const RunOtfOptions& opts) {
  return run_otf_with(steady, m, fit.residuals, fit.sigma_tilde, fit.data.values, opts);
}

CoupledOutput run_otf_with(const SteadyKF& steady, const ModelMatrices& m,
                           const Eigen::MatrixXd& residuals, const SymMatrix& sigma_data,
                           const Eigen::MatrixXd& data_values, const RunOtfOptions& opts) {
  if (residuals.cols() != m.dy()) {
    throw ShapeError("run_otf: residual dimension does not match the model");
  }
  bool singular_data = rank_psd(sigma_data, opts.rank_tol) < sigma_data.dim();
  TransportMap map = transport_map(steady.Sigma, sigma_data, opts.rank_tol,
                                   opts.allow_singular_data || singular_data);
  CoupledOutput out =
      coupled_recursion(m, steady.K, map.P, residuals, data_values, opts.nu0);
  if (singular_data) {
    out.warnings.push_back(
        "data innovation variance is rank-deficient; transport restricted to its support");
  }
  return out;
}

CoupledOutput run_otf_unitroot(const ModelMatrices& m, const VarFit& fit,
                               const UnitRootOptions& opts) {
  if (fit.d() != m.dy()) throw ShapeError("run_otf_unitroot: dimension mismatch");
  const Eigen::Index n = fit.n();
  const Eigen::Index dz = m.dz();
  const Eigen::Index dy = m.dy();

  double data_var = fit.data.column_variances().mean();
  double kappa = opts.kappa_scale * (data_var > 0 ? data_var : 1.0);
  Eigen::MatrixXd v0 = kappa * Eigen::MatrixXd::Identity(dz, dz);
  if (opts.constant_state >= 0 && opts.constant_state < dz) {
    v0(opts.constant_state, opts.constant_state) = 0.0;
  }
  SymMatrix v(v0);

  bool singular_data = rank_psd(fit.sigma_tilde, opts.rank_tol) < fit.sigma_tilde.dim();
  if (singular_data && !opts.allow_singular_data) {
    throw DataVarianceSingular("run_otf_unitroot: data innovation variance is rank-deficient");
  }

  CoupledOutput out;
  out.y.resize(n, dy);
  out.nu_filtered.resize(n, dz);
  out.nu_predicted.resize(n, dz);
  out.mu_predicted.resize(n, dy);
  Eigen::VectorXd nu = opts.nu0.size() ? opts.nu0 : Eigen::VectorXd::Zero(dz);
  if (nu.size() != dz) throw ShapeError("run_otf_unitroot: nu0 has wrong length");

  for (Eigen::Index t = 0; t < n; ++t) {
    KFStepMatrices step = kf_covariance_step(m, v, opts.rank_tol);
    v = step.V;
    Eigen::VectorXd nu_pred = m.C * nu;
    Eigen::VectorXd mu_pred = m.mu + m.A * nu_pred;
    Eigen::VectorXd innov;
    if (opts.plain_kf) {
      innov = fit.data.values.row(t).transpose() - mu_pred;
    } else {
      TransportMap map = transport_map(step.Sigma, fit.sigma_tilde, opts.rank_tol, true);
      innov = map.P * fit.residuals.row(t).transpose();
    }
    Eigen::VectorXd y = mu_pred + innov;
    nu = nu_pred + step.K * innov;
    out.nu_predicted.row(t) = nu_pred.transpose();
    out.mu_predicted.row(t) = mu_pred.transpose();
    out.y.row(t) = y.transpose();
    out.nu_filtered.row(t) = nu.transpose();
  }
  out.r2 = coupled_r2(out.y, fit.data.values);
  if (singular_data) {
    out.warnings.push_back(
        "data innovation variance is rank-deficient; transport restricted to its support");
  }
  return out;
}

CoupledOutput run_otf_timevarying(const ConditionalMomentModel& model, const VarFit& fit,
                                  double rank_tol) {
  const Eigen::Index n = fit.n();
  const Eigen::Index d = fit.d();
  CoupledOutput out;
  out.y.resize(n, d);
  out.nu_filtered.resize(n, 0);
  out.nu_predicted.resize(n, 0);
  out.mu_predicted.resize(n, d);
  for (Eigen::Index t = 1; t <= n; ++t) {
    Eigen::VectorXd mu_t = model.mean(t, fit.data.values);
    Eigen::MatrixXd sig_t = model.variance(t, fit.data.values);
    if (mu_t.size() != d || sig_t.rows() != d || sig_t.cols() != d) {
      throw ShapeError("run_otf_timevarying: callback returned wrong dimensions");
    }
    SymMatrix sigma_t;
    try {
      sigma_t = SymMatrix(sig_t);
    } catch (const InvalidMatrix&) {
      throw ModelVarianceInvalid("conditional variance is not a valid symmetric matrix", t);
    }
    TransportMap map;
    try {
      map = transport_map(sigma_t, fit.sigma_tilde, rank_tol, false);
    } catch (const NotPSD&) {
      throw ModelVarianceInvalid("conditional variance is not PSD", t);
    }
    Eigen::VectorXd y = mu_t + map.P * fit.residuals.row(t - 1).transpose();
    out.mu_predicted.row(t - 1) = mu_t.transpose();
    out.y.row(t - 1) = y.transpose();
  }
  out.r2 = coupled_r2(out.y, fit.data.values);
  return out;
}

Eigen::MatrixXd plain_kf_innovations(const SteadyKF& steady, const ModelMatrices& m,
                                     const Eigen::MatrixXd& data_values,
                                     const Eigen::VectorXd& nu0) {
  const Eigen::Index n = data_values.rows();
  Eigen::MatrixXd innov(n, m.dy());
  Eigen::VectorXd nu = nu0.size() ? nu0 : Eigen::VectorXd::Zero(m.dz());
  for (Eigen::Index t = 0; t < n; ++t) {
    Eigen::VectorXd nu_pred = m.C * nu;
    Eigen::VectorXd eps = data_values.row(t).transpose() - (m.mu + m.A * nu_pred);
    nu = nu_pred + steady.K * eps;
    innov.row(t) = eps.transpose();
  }
  return innov;
}

void write_coupled_csv(const std::string& path, const CoupledOutput& out,
                       const DataSet& data, const std::vector<std::string>& state_names) {
  std::vector<std::string> header;
  header.push_back("period");
  for (Eigen::Index j = 0; j < data.d(); ++j) {
    header.push_back(data.names[static_cast<std::size_t>(j)] + "_data");
    header.push_back(data.names[static_cast<std::size_t>(j)] + "_coupled");
  }
  for (Eigen::Index s = 0; s < out.nu_filtered.cols(); ++s) {
    header.push_back(s < static_cast<Eigen::Index>(state_names.size())
                         ? state_names[static_cast<std::size_t>(s)]
                         : "state" + std::to_string(s + 1));
  }
  std::vector<std::vector<std::string>> rows;
  for (Eigen::Index t = 0; t < out.y.rows(); ++t) {
    std::vector<std::string> row;
    row.push_back(std::to_string(t + 1));
    for (Eigen::Index j = 0; j < data.d(); ++j) {
      row.push_back(format_double(data.values(t, j)));
      row.push_back(format_double(out.y(t, j)));
    }
    for (Eigen::Index s = 0; s < out.nu_filtered.cols(); ++s) {
      row.push_back(format_double(out.nu_filtered(t, s)));
    }
    rows.push_back(std::move(row));
  }
  write_table_csv(path, header, rows);
}

}  // namespace otf
