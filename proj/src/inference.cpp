#include "otf/inference.hpp"

#include <algorithm>
#include <cmath>

#include "otf/errors.hpp"
#include "otf/rng.hpp"
#include "otf/transport.hpp"

namespace otf {

// ---- psi layout -------------------------------------------------------------

Eigen::Index psi_dim(Eigen::Index d, int k) {
  return d + d * (d + 1) / 2 + static_cast<Eigen::Index>(k) * d * d;
}

Eigen::VectorXd psi_pack(const VarFit& fit) {
  const Eigen::Index d = fit.d();
  const int k = fit.k;
  Eigen::VectorXd psi(psi_dim(d, k));
  Eigen::Index pos = 0;
  psi.segment(pos, d) = fit.mu_tilde;
  pos += d;
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = j; i < d; ++i) psi(pos++) = fit.sigma_tilde(i, j);
  }
  for (int l = 0; l < k; ++l) {
    const Eigen::MatrixXd& m = fit.psi[static_cast<std::size_t>(l)];
    for (Eigen::Index j = 0; j < d; ++j) {
      for (Eigen::Index i = 0; i < d; ++i) psi(pos++) = m(i, j);
    }
  }
  return psi;
}

PsiView psi_unpack(const Eigen::VectorXd& psi, Eigen::Index d, int k) {
  if (psi.size() != psi_dim(d, k)) throw ShapeError("psi vector has wrong length");
  PsiView v;
  Eigen::Index pos = 0;
  v.mu = psi.segment(pos, d);
  pos += d;
  Eigen::MatrixXd sigma(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = j; i < d; ++i) {
      sigma(i, j) = psi(pos);
      sigma(j, i) = psi(pos);
      ++pos;
    }
  }
  v.sigma = SymMatrix(sigma);
  v.psi.reserve(static_cast<std::size_t>(k));
  for (int l = 0; l < k; ++l) {
    Eigen::MatrixXd m(d, d);
    for (Eigen::Index j = 0; j < d; ++j) {
      for (Eigen::Index i = 0; i < d; ++i) m(i, j) = psi(pos++);
    }
    v.psi.push_back(m);
  }
  return v;
}

// ---- finite-difference sensitivities ---------------------------------------

namespace {

struct ThetaPoint {
  ModelMatrices m;
  SteadyKF steady;
};

ThetaPoint make_theta_point(const ModelSpec& spec, const Eigen::VectorXd& theta,
                            const LossConfig& cfg) {
  ThetaPoint p;
  p.m = eval_model(spec, theta);
  SteadyKFOptions so;
  so.rank_tol = cfg.rank_tol;
  so.vma_k_hint = cfg.k;
  p.steady = solve_steady_kf(p.m, so);
  return p;
}

Eigen::MatrixXd coupled_series(const ThetaPoint& tp, const VarFit& fit,
                               const PsiView& view, const LossConfig& cfg) {
  Eigen::MatrixXd resid = var_residuals_at(fit.data, fit.presample, view.mu, view.psi);
  RunOtfOptions ro;
  ro.rank_tol = cfg.rank_tol;
  ro.allow_singular_data = true;
  return run_otf_with(tp.steady, tp.m, resid, view.sigma, fit.data.values, ro).y;
}

// Steps respecting the parameter box: shrink once if a bound is within h.
double theta_step(const ParamSpec& p, double value, double scale) {
  double h = scale * std::max(1.0, std::abs(value));
  if (value + h > p.upper || value - h < p.lower) {
    h /= 10.0;
    if (value + h > p.upper || value - h < p.lower) {
      throw BoundaryTooClose("parameter " + p.name + " too close to its bounds for differencing");
    }
  }
  return h;
}

// d_theta y as a per-period stack, by central differences around theta.
std::vector<Eigen::MatrixXd> theta_jacobian(const ModelSpec& spec,
                                            const Eigen::VectorXd& theta,
                                            const VarFit& fit, const PsiView& view,
                                            const LossConfig& cfg, double scale) {
  const Eigen::Index n = fit.n();
  const Eigen::Index d = fit.d();
  const Eigen::Index dt = theta.size();
  std::vector<Eigen::MatrixXd> out(static_cast<std::size_t>(n),
                                   Eigen::MatrixXd(d, dt));
  for (Eigen::Index i = 0; i < dt; ++i) {
    double h = theta_step(spec.params[static_cast<std::size_t>(i)], theta(i), scale);
    Eigen::VectorXd tp = theta, tm = theta;
    tp(i) += h;
    tm(i) -= h;
    Eigen::MatrixXd yp = coupled_series(make_theta_point(spec, tp, cfg), fit, view, cfg);
    Eigen::MatrixXd ym = coupled_series(make_theta_point(spec, tm, cfg), fit, view, cfg);
    Eigen::MatrixXd diff = (yp - ym) / (2.0 * h);
    for (Eigen::Index t = 0; t < n; ++t) out[static_cast<std::size_t>(t)].col(i) = diff.row(t).transpose();
  }
  return out;
}

}  // namespace

SensitivityBundle numeric_sensitivities(const ModelSpec& spec,
                                        const Eigen::VectorXd& theta_hat,
                                        const VarFit& fit, const LossConfig& cfg,
                                        bool robust, double step_scale) {
  const Eigen::Index n = fit.n();
  const Eigen::Index d = fit.d();
  const Eigen::Index dt = theta_hat.size();
  const int k = fit.k;
  const Eigen::Index dp = psi_dim(d, k);

  SensitivityBundle bundle;
  bundle.d = d;
  bundle.d_theta = dt;
  bundle.d_psi = dp;
  bundle.k = k;

  Eigen::VectorXd psi0 = psi_pack(fit);
  PsiView view0 = psi_unpack(psi0, d, k);
  ThetaPoint tp0 = make_theta_point(spec, theta_hat, cfg);
  bundle.coupled = coupled_series(tp0, fit, view0, cfg);

  // d_theta y
  bundle.d_theta_y = theta_jacobian(spec, theta_hat, fit, view0, cfg, step_scale);

  // d_psi y: the steady filter is unchanged, only residuals and the map move.
  bundle.d_psi_y.assign(static_cast<std::size_t>(n), Eigen::MatrixXd(d, dp));
  for (Eigen::Index c = 0; c < dp; ++c) {
    double h = step_scale * std::max(1.0, std::abs(psi0(c)));
    Eigen::VectorXd pp = psi0, pm = psi0;
    pp(c) += h;
    pm(c) -= h;
    Eigen::MatrixXd yp = coupled_series(tp0, fit, psi_unpack(pp, d, k), cfg);
    Eigen::MatrixXd ym = coupled_series(tp0, fit, psi_unpack(pm, d, k), cfg);
    Eigen::MatrixXd diff = (yp - ym) / (2.0 * h);
    for (Eigen::Index t = 0; t < n; ++t) bundle.d_psi_y[static_cast<std::size_t>(t)].col(c) = diff.row(t).transpose();
  }

  if (!robust) return bundle;

  // G_t = vec[d_theta y_t'] stacked per period as one n x (d*dt) matrix; the
  // second derivatives difference the whole stack again.
  auto g_stack = [&](const Eigen::VectorXd& theta, const PsiView& view) {
    std::vector<Eigen::MatrixXd> jac = theta_jacobian(spec, theta, fit, view, cfg, step_scale);
    Eigen::MatrixXd g(n, d * dt);
    for (Eigen::Index t = 0; t < n; ++t) {
      // vec of the dt x d matrix (d_theta y_t)': column j holds the gradient
      // of output j, so block j of G is that gradient.
      const Eigen::MatrixXd& m = jac[static_cast<std::size_t>(t)];  // d x dt
      for (Eigen::Index j = 0; j < d; ++j) {
        g.block(t, j * dt, 1, dt) = m.row(j);
      }
    }
    return g;
  };

  bundle.d_theta_G.assign(static_cast<std::size_t>(n), Eigen::MatrixXd(d * dt, dt));
  for (Eigen::Index i = 0; i < dt; ++i) {
    double h = theta_step(spec.params[static_cast<std::size_t>(i)], theta_hat(i), step_scale);
    Eigen::VectorXd tp = theta_hat, tm = theta_hat;
    tp(i) += h;
    tm(i) -= h;
    Eigen::MatrixXd gp = g_stack(tp, view0);
    Eigen::MatrixXd gm = g_stack(tm, view0);
    Eigen::MatrixXd diff = (gp - gm) / (2.0 * h);
    for (Eigen::Index t = 0; t < n; ++t) {
      bundle.d_theta_G[static_cast<std::size_t>(t)].col(i) = diff.row(t).transpose();
    }
  }

  bundle.d_psi_G.assign(static_cast<std::size_t>(n), Eigen::MatrixXd(d * dt, dp));
  for (Eigen::Index c = 0; c < dp; ++c) {
    double h = step_scale * std::max(1.0, std::abs(psi0(c)));
    Eigen::VectorXd pp = psi0, pm = psi0;
    pp(c) += h;
    pm(c) -= h;
    Eigen::MatrixXd gp = g_stack(theta_hat, psi_unpack(pp, d, k));
    Eigen::MatrixXd gm = g_stack(theta_hat, psi_unpack(pm, d, k));
    Eigen::MatrixXd diff = (gp - gm) / (2.0 * h);
    for (Eigen::Index t = 0; t < n; ++t) {
      bundle.d_psi_G[static_cast<std::size_t>(t)].col(c) = diff.row(t).transpose();
    }
  }
  return bundle;
}

// ---- HAC --------------------------------------------------------------------

int hac_auto_bandwidth(Eigen::Index n) {
  return static_cast<int>(std::floor(1.3 * std::cbrt(static_cast<double>(n))));
}

SymMatrix hac_lrv(const Eigen::MatrixXd& series, int bandwidth) {
  const Eigen::Index n = series.rows();
  const Eigen::Index p = series.cols();
  if (n < 2) throw InsufficientData("hac_lrv: need at least two observations");
  int L = bandwidth >= 0 ? bandwidth : hac_auto_bandwidth(n);
  if (n <= 2 * static_cast<Eigen::Index>(L)) {
    throw InsufficientData("hac_lrv: bandwidth too large for the sample");
  }
  Eigen::MatrixXd x = series.rowwise() - series.colwise().mean();
  Eigen::MatrixXd lrv = x.transpose() * x / static_cast<double>(n);
  for (int l = 1; l <= L; ++l) {
    double w = 1.0 - static_cast<double>(l) / (L + 1.0);
    Eigen::MatrixXd gamma =
        x.bottomRows(n - l).transpose() * x.topRows(n - l) / static_cast<double>(n);
    lrv += w * (gamma + gamma.transpose());
  }
  return SymMatrix(lrv);
}

// ---- Gaussian VAR quasi-likelihood ------------------------------------------

namespace {

// log f(y_t | lags; psi) = -d/2 log 2pi - 1/2 log|Sigma| - 1/2 e' Sigma^{-1} e
struct ScoreWorkspace {
  Eigen::MatrixXd resid;     // n x d residuals at psi
  Eigen::MatrixXd r;         // Sigma^{-1}
  Eigen::MatrixXd j;         // I - sum Psi
};

ScoreWorkspace make_workspace(const DataSet& data, const Eigen::VectorXd& presample,
                              const PsiView& view) {
  ScoreWorkspace w;
  w.resid = var_residuals_at(data, presample, view.mu, view.psi);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(view.sigma.mat());
  if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-14) {
    throw NotPSD("VAR innovation variance is not invertible");
  }
  w.r = ldlt.solve(Eigen::MatrixXd::Identity(view.d(), view.d()));
  w.j = Eigen::MatrixXd::Identity(view.d(), view.d());
  for (const auto& m : view.psi) w.j -= m;
  return w;
}

Eigen::VectorXd score_at(const DataSet& data, const Eigen::VectorXd& presample,
                         const PsiView& view, const ScoreWorkspace& w,
                         Eigen::Index t) {
  const Eigen::Index d = view.d();
  const int k = view.k();
  Eigen::VectorXd e = w.resid.row(t - 1).transpose();
  Eigen::VectorXd re = w.r * e;
  Eigen::VectorXd s(psi_dim(d, k));
  Eigen::Index pos = 0;
  s.segment(pos, d) = w.j.transpose() * re;
  pos += d;
  // dL/dSigma as a free symmetric matrix, mapped to vech coordinates with the
  // off-diagonal doubling that ties sigma_ij = sigma_ji.
  Eigen::MatrixXd mfree = 0.5 * (re * re.transpose() - w.r);
  for (Eigen::Index jcol = 0; jcol < d; ++jcol) {
    for (Eigen::Index irow = jcol; irow < d; ++irow) {
      s(pos++) = (irow == jcol) ? mfree(irow, jcol) : 2.0 * mfree(irow, jcol);
    }
  }
  for (int l = 1; l <= k; ++l) {
    Eigen::VectorXd x = (t - l >= 1)
                            ? (data.values.row(t - l - 1).transpose() - view.mu).eval()
                            : (presample - view.mu).eval();
    for (Eigen::Index jcol = 0; jcol < d; ++jcol) {
      s.segment(pos + jcol * d, d) = x(jcol) * re;
    }
    pos += d * d;
  }
  return s;
}

}  // namespace

Eigen::VectorXd var_loglik_score(const DataSet& data, const Eigen::VectorXd& presample,
                                 const PsiView& view, Eigen::Index t) {
  ScoreWorkspace w = make_workspace(data, presample, view);
  return score_at(data, presample, view, w, t);
}

Eigen::MatrixXd var_loglik_score_matrix(const DataSet& data,
                                        const Eigen::VectorXd& presample,
                                        const PsiView& view) {
  ScoreWorkspace w = make_workspace(data, presample, view);
  const Eigen::Index n = data.n();
  Eigen::MatrixXd out(n, psi_dim(view.d(), view.k()));
  for (Eigen::Index t = 1; t <= n; ++t) {
    out.row(t - 1) = score_at(data, presample, view, w, t).transpose();
  }
  return out;
}

Eigen::MatrixXd var_loglik_hessian(const DataSet& data, const Eigen::VectorXd& presample,
                                   const Eigen::VectorXd& psi, Eigen::Index d, int k,
                                   double step_scale) {
  const Eigen::Index dp = psi.size();
  auto mean_score = [&](const Eigen::VectorXd& p) {
    PsiView v = psi_unpack(p, d, k);
    return var_loglik_score_matrix(data, presample, v).colwise().mean().transpose().eval();
  };
  Eigen::MatrixXd h(dp, dp);
  for (Eigen::Index c = 0; c < dp; ++c) {
    double step = step_scale * std::max(1.0, std::abs(psi(c)));
    Eigen::VectorXd pp = psi, pm = psi;
    pp(c) += step;
    pm(c) -= step;
    h.col(c) = (mean_score(pp) - mean_score(pm)) / (2.0 * step);
  }
  return 0.5 * (h + h.transpose());
}

// ---- standard errors ---------------------------------------------------------

namespace {

struct SEInputs {
  SensitivityBundle bundle;
  Eigen::MatrixXd w;
  Eigen::MatrixXd m_hat;       // correct-spec M
  Eigen::MatrixXd d_hat;       // correct-spec D
  Eigen::MatrixXd influence;   // n x d_psi, (-Hbar)^{-1} score_t
  Eigen::MatrixXd u;           // n x d residuals of the coupling
};

SEInputs se_inputs(const ModelSpec& spec, const Eigen::VectorXd& theta_hat,
                   const VarFit& fit, const LossConfig& cfg, bool robust) {
  SEInputs si;
  si.bundle = numeric_sensitivities(spec, theta_hat, fit, cfg, robust);
  si.w = cfg.weight_matrix(fit.data);
  const Eigen::Index n = fit.n();
  const Eigen::Index dt = si.bundle.d_theta;
  const Eigen::Index dp = si.bundle.d_psi;

  si.m_hat = Eigen::MatrixXd::Zero(dt, dt);
  si.d_hat = Eigen::MatrixXd::Zero(dt, dp);
  for (Eigen::Index t = 0; t < n; ++t) {
    const Eigen::MatrixXd& jt = si.bundle.d_theta_y[static_cast<std::size_t>(t)];
    si.m_hat += jt.transpose() * si.w * jt;
    si.d_hat += jt.transpose() * si.w * si.bundle.d_psi_y[static_cast<std::size_t>(t)];
  }
  si.m_hat /= static_cast<double>(n);
  si.d_hat /= static_cast<double>(n);

  Eigen::VectorXd psi0 = psi_pack(fit);
  PsiView view = psi_unpack(psi0, fit.d(), fit.k);
  Eigen::MatrixXd scores = var_loglik_score_matrix(fit.data, fit.presample, view);
  Eigen::MatrixXd hbar =
      var_loglik_hessian(fit.data, fit.presample, psi0, fit.d(), fit.k);
  Eigen::MatrixXd neg_h = -hbar;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(neg_h);
  if (ldlt.info() != Eigen::Success) {
    throw LocalIdentificationFailure("VAR quasi-likelihood Hessian is not invertible");
  }
  si.influence = ldlt.solve(scores.transpose()).transpose();
  si.u = si.bundle.coupled - fit.data.values;
  return si;
}

double condition_number(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  double smin = svd.singularValues().minCoeff();
  double smax = svd.singularValues().maxCoeff();
  return smin > 0 ? smax / smin : std::numeric_limits<double>::infinity();
}

SEResult assemble_se(const SEInputs& si, SEMode mode, Eigen::Index n) {
  const Eigen::Index dt = si.bundle.d_theta;
  Eigen::MatrixXd m_use = si.m_hat;
  Eigen::MatrixXd d_use = si.d_hat;
  if (mode == SEMode::robust) {
    Eigen::MatrixXd m_corr = Eigen::MatrixXd::Zero(dt, dt);
    Eigen::MatrixXd d_corr = Eigen::MatrixXd::Zero(dt, si.bundle.d_psi);
    for (Eigen::Index t = 0; t < n; ++t) {
      Eigen::VectorXd wu = si.w * si.u.row(t).transpose();
      // [u'W (x) I_dt] contracts the output-variable blocks of the G arrays
      const Eigen::MatrixXd& gt = si.bundle.d_theta_G[static_cast<std::size_t>(t)];
      const Eigen::MatrixXd& gp = si.bundle.d_psi_G[static_cast<std::size_t>(t)];
      for (Eigen::Index j = 0; j < si.bundle.d; ++j) {
        m_corr += wu(j) * gt.middleRows(j * dt, dt);
        d_corr += wu(j) * gp.middleRows(j * dt, dt);
      }
    }
    m_use += m_corr / static_cast<double>(n);
    d_use += d_corr / static_cast<double>(n);
  }

  SEResult res;
  res.mode = mode;
  res.m_condition = condition_number(m_use);
  if (!(res.m_condition < 1e10)) {
    throw LocalIdentificationFailure("M_hat is numerically singular");
  }
  Eigen::MatrixXd m_inv = m_use.fullPivLu().inverse();

  Eigen::MatrixXd s(n, dt);
  for (Eigen::Index t = 0; t < n; ++t) {
    Eigen::VectorXd term =
        d_use * si.influence.row(t).transpose();
    if (mode == SEMode::robust) {
      term += si.bundle.d_theta_y[static_cast<std::size_t>(t)].transpose() * si.w *
              si.u.row(t).transpose();
    }
    s.row(t) = (m_inv * term).transpose();
  }
  int bw = hac_auto_bandwidth(n);
  SymMatrix v = hac_lrv(s, bw);
  Eigen::MatrixXd vcov = v.mat() / static_cast<double>(n);
  // guard tiny negative diagonals from the kernel sum
  Eigen::VectorXd diag = vcov.diagonal().cwiseMax(0.0);
  res.vcov = SymMatrix(vcov);
  res.se = diag.cwiseSqrt();
  res.hac_bandwidth = bw;
  return res;
}

}  // namespace

SEResult se_correct(const ModelSpec& spec, const Eigen::VectorXd& theta_hat,
                    const VarFit& fit, const LossConfig& cfg) {
  SEInputs si = se_inputs(spec, theta_hat, fit, cfg, false);
  return assemble_se(si, SEMode::correct, fit.n());
}

SEResult se_robust(const ModelSpec& spec, const Eigen::VectorXd& theta_hat,
                   const VarFit& fit, const LossConfig& cfg) {
  SEInputs si = se_inputs(spec, theta_hat, fit, cfg, true);
  return assemble_se(si, SEMode::robust, fit.n());
}

SEPair se_both(const ModelSpec& spec, const Eigen::VectorXd& theta_hat,
               const VarFit& fit, const LossConfig& cfg) {
  SEInputs si = se_inputs(spec, theta_hat, fit, cfg, true);
  SEPair pair;
  pair.correct = assemble_se(si, SEMode::correct, fit.n());
  pair.robust = assemble_se(si, SEMode::robust, fit.n());
  return pair;
}

// ---- specification test -------------------------------------------------------

namespace {

// Z_{k,t} in the psi layout: mean block, vech block, lag blocks
// vec[e_t Ytilde' Gamma^{-1}].
Eigen::MatrixXd build_z(const VarFit& fit) {
  const Eigen::Index n = fit.n();
  const Eigen::Index d = fit.d();
  const int k = fit.k;
  const Eigen::Index dk = d * k;

  Eigen::MatrixXd ylag(n, dk);  // Ytilde_{t-1,k}' rows
  for (Eigen::Index t = 1; t <= n; ++t) {
    for (int j = 1; j <= k; ++j) {
      Eigen::VectorXd x = (t - j >= 1)
                              ? (fit.data.values.row(t - j - 1).transpose() - fit.mu_tilde).eval()
                              : (fit.presample - fit.mu_tilde).eval();
      ylag.block(t - 1, (j - 1) * d, 1, d) = x.transpose();
    }
  }
  Eigen::MatrixXd gamma = ylag.transpose() * ylag / static_cast<double>(n);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gamma);
  if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-13) {
    throw CollinearRegressors("spec_test: lag Gram matrix is singular");
  }

  Eigen::MatrixXd z(n, psi_dim(d, k));
  for (Eigen::Index t = 1; t <= n; ++t) {
    Eigen::Index pos = 0;
    z.block(t - 1, pos, 1, d) =
        (fit.data.values.row(t - 1).transpose() - fit.mu_tilde).transpose();
    pos += d;
    Eigen::VectorXd e = fit.residuals.row(t - 1).transpose();
    Eigen::MatrixXd dev = e * e.transpose() - fit.sigma_tilde.mat();
    for (Eigen::Index jc = 0; jc < d; ++jc) {
      for (Eigen::Index ir = jc; ir < d; ++ir) z(t - 1, pos++) = dev(ir, jc);
    }
    // vec[e_t Ytilde' Gamma^{-1}]: solve Gamma row-wise
    Eigen::VectorXd yrow = ylag.row(t - 1).transpose();
    Eigen::VectorXd g = ldlt.solve(yrow);
    for (int j = 0; j < k; ++j) {
      for (Eigen::Index jc = 0; jc < d; ++jc) {
        for (Eigen::Index ir = 0; ir < d; ++ir) {
          z(t - 1, pos++) = e(ir) * g(j * d + jc);
        }
      }
    }
  }
  return z;
}

}  // namespace

namespace {

std::vector<double> wchi2_sorted_draws(const Eigen::VectorXd& weights, int n_draws,
                                       std::uint64_t seed) {
  if (weights.size() == 0 || weights.maxCoeff() <= 0.0) {
    throw DegenerateDistribution("weighted chi-square: weights must include a positive entry");
  }
  if (weights.minCoeff() < 0.0) {
    throw DegenerateDistribution("weighted chi-square: negative weight");
  }
  Rng rng(seed);
  std::vector<double> draws(static_cast<std::size_t>(n_draws));
  for (auto& v : draws) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < weights.size(); ++i) {
      double z = rng.normal();
      s += weights(i) * z * z;
    }
    v = s;
  }
  std::sort(draws.begin(), draws.end());
  return draws;
}

double draws_quantile(const std::vector<double>& sorted, double alpha) {
  double idx = (1.0 - alpha) * (static_cast<double>(sorted.size()) - 1.0);
  auto lo = static_cast<std::size_t>(std::floor(idx));
  auto hi = std::min(lo + 1, sorted.size() - 1);
  double frac = idx - std::floor(idx);
  return (1.0 - frac) * sorted[lo] + frac * sorted[hi];
}

double draws_pvalue(const std::vector<double>& sorted, double stat) {
  auto it = std::lower_bound(sorted.begin(), sorted.end(), stat);
  return static_cast<double>(sorted.end() - it) / static_cast<double>(sorted.size());
}

}  // namespace

double wchi2_quantile(const Eigen::VectorXd& weights, double alpha, int n_draws,
                      std::uint64_t seed) {
  return draws_quantile(wchi2_sorted_draws(weights, n_draws, seed), alpha);
}

double wchi2_pvalue(const Eigen::VectorXd& weights, double stat, int n_draws,
                    std::uint64_t seed) {
  return draws_pvalue(wchi2_sorted_draws(weights, n_draws, seed), stat);
}

namespace {

SpecTestResult one_spec_test(const SensitivityBundle& bundle, const Eigen::MatrixXd& w_full,
                             const Eigen::MatrixXd& m_hat_full, const SymMatrix& s_lrv,
                             const Eigen::MatrixXd& u, Eigen::Index n,
                             std::optional<int> variable, const SpecTestOptions& opts) {
  const Eigen::Index d = bundle.d;
  const Eigen::Index dt = bundle.d_theta;
  const Eigen::Index dp = bundle.d_psi;

  Eigen::MatrixXd w = w_full;
  if (variable) {
    int j = *variable;
    if (j < 0 || j >= d) throw ShapeError("spec_test: variable index out of range");
    Eigen::MatrixXd dj = Eigen::MatrixXd::Zero(d, d);
    dj(j, j) = 1.0;
    w = dj * w_full * dj;
  }

  SpecTestResult res;
  res.variable = variable;
  res.stat = (u * w).cwiseProduct(u).sum();  // n * Q_n = sum_t u_t' W u_t

  Eigen::MatrixXd e_k = Eigen::MatrixXd::Zero(dt, dp);
  for (Eigen::Index t = 0; t < n; ++t) {
    e_k -= bundle.d_theta_y[static_cast<std::size_t>(t)].transpose() * w *
           bundle.d_psi_y[static_cast<std::size_t>(t)];
  }
  e_k /= static_cast<double>(n);

  Eigen::MatrixXd m_inv_e = m_hat_full.fullPivLu().solve(-e_k);
  // columns of (d_psi y + d_theta y M^{-1} E_k); note M^{-1}E_k = -m_inv_e
  Eigen::MatrixXd mk = Eigen::MatrixXd::Zero(dp, dp);
  for (Eigen::Index t = 0; t < n; ++t) {
    Eigen::MatrixXd a = bundle.d_psi_y[static_cast<std::size_t>(t)] -
                        bundle.d_theta_y[static_cast<std::size_t>(t)] * m_inv_e;
    mk += a.transpose() * w * a;
  }
  mk /= static_cast<double>(n);

  Eigen::MatrixXd sm = s_lrv.mat() * mk;
  res.trace_sm = sm.trace();
  res.trace_sm2 = (sm * sm).trace();

  Eigen::MatrixXd s_half = sqrt_psd(s_lrv).mat();
  SymMatrix quad(s_half * mk * s_half);
  EigDecomposition ed = eig_sym(quad);
  Eigen::VectorXd weights = ed.eigenvalues;
  double wmax = weights.size() ? std::max(0.0, weights.maxCoeff()) : 0.0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    if (weights(i) < -1e-8 * wmax) {
      res.warnings.push_back("clipped a negative eigenweight " + std::to_string(weights(i)));
    }
    if (weights(i) < 0.0) weights(i) = 0.0;
  }
  res.weights = weights;

  res.crit_10 = wchi2_quantile(weights, opts.alpha_1, opts.n_draws, opts.seed);
  res.crit_05 = wchi2_quantile(weights, opts.alpha_2, opts.n_draws, opts.seed);
  res.p_value = wchi2_pvalue(weights, res.stat, opts.n_draws, opts.seed);
  return res;
}

}  // namespace

std::vector<SpecTestResult> spec_test_all(const ModelSpec& spec,
                                          const Eigen::VectorXd& theta_hat,
                                          const VarFit& fit, const LossConfig& cfg,
                                          const SpecTestOptions& opts) {
  SensitivityBundle bundle = numeric_sensitivities(spec, theta_hat, fit, cfg, false);
  Eigen::MatrixXd w = cfg.weight_matrix(fit.data);
  const Eigen::Index n = fit.n();
  const Eigen::Index dt = bundle.d_theta;

  Eigen::MatrixXd m_hat = Eigen::MatrixXd::Zero(dt, dt);
  for (Eigen::Index t = 0; t < n; ++t) {
    const Eigen::MatrixXd& jt = bundle.d_theta_y[static_cast<std::size_t>(t)];
    m_hat += jt.transpose() * w * jt;
  }
  m_hat /= static_cast<double>(n);

  Eigen::MatrixXd z = build_z(fit);
  SymMatrix s_lrv = hac_lrv(z, opts.hac_bandwidth);
  Eigen::MatrixXd u = bundle.coupled - fit.data.values;

  std::vector<SpecTestResult> out;
  out.push_back(one_spec_test(bundle, w, m_hat, s_lrv, u, n, std::nullopt, opts));
  for (int j = 0; j < bundle.d; ++j) {
    out.push_back(one_spec_test(bundle, w, m_hat, s_lrv, u, n, j, opts));
  }
  return out;
}

SpecTestResult spec_test(const ModelSpec& spec, const Eigen::VectorXd& theta_hat,
                         const VarFit& fit, const LossConfig& cfg,
                         const SpecTestOptions& opts) {
  SensitivityBundle bundle = numeric_sensitivities(spec, theta_hat, fit, cfg, false);
  Eigen::MatrixXd w = cfg.weight_matrix(fit.data);
  const Eigen::Index n = fit.n();
  const Eigen::Index dt = bundle.d_theta;

  Eigen::MatrixXd m_hat = Eigen::MatrixXd::Zero(dt, dt);
  for (Eigen::Index t = 0; t < n; ++t) {
    const Eigen::MatrixXd& jt = bundle.d_theta_y[static_cast<std::size_t>(t)];
    m_hat += jt.transpose() * w * jt;
  }
  m_hat /= static_cast<double>(n);

  Eigen::MatrixXd z = build_z(fit);
  SymMatrix s_lrv = hac_lrv(z, opts.hac_bandwidth);
  Eigen::MatrixXd u = bundle.coupled - fit.data.values;
  return one_spec_test(bundle, w, m_hat, s_lrv, u, n, opts.variable, opts);
}

}  // namespace otf
