#include "otf/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>

#include "otf/errors.hpp"
#include "otf/rng.hpp"

namespace otf {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

Eigen::MatrixXd LossConfig::weight_matrix(const DataSet& data) const {
  switch (weighting) {
    case Weighting::identity:
      return Eigen::MatrixXd::Identity(data.d(), data.d());
    case Weighting::user: {
      if (user_w.rows() != data.d() || user_w.cols() != data.d()) {
        throw ShapeError("user weighting matrix has wrong dimensions");
      }
      SymMatrix check(user_w);  // validates symmetry and finiteness
      Eigen::LLT<Eigen::MatrixXd> llt(check.mat());
      if (llt.info() != Eigen::Success) {
        throw NotPSD("user weighting matrix must be positive definite");
      }
      return check.mat();
    }
    case Weighting::inverse_variance:
    default: {
      Eigen::VectorXd v = data.column_variances();
      for (Eigen::Index j = 0; j < v.size(); ++j) {
        if (!(v(j) > 0.0)) throw CollinearRegressors("constant column in weighting");
      }
      return v.cwiseInverse().asDiagonal();
    }
  }
}

namespace {

SteadyKFOptions steady_options(const LossConfig& cfg) {
  SteadyKFOptions o;
  o.rank_tol = cfg.rank_tol;
  o.vma_k_hint = cfg.k;
  return o;
}

}  // namespace

LossEval loss_qn_detail(const ModelSpec& spec, const Eigen::VectorXd& theta,
                        const VarFit& fit, const LossConfig& cfg) {
  ModelMatrices m = eval_model(spec, theta);
  if (!m.stationary) throw NonStationary("loss_qn: model not stationary at theta");
  SteadyKF steady = solve_steady_kf(m, steady_options(cfg));
  RunOtfOptions ro;
  ro.rank_tol = cfg.rank_tol;
  CoupledOutput out = run_otf(steady, m, fit, ro);
  Eigen::MatrixXd w = cfg.weight_matrix(fit.data);
  Eigen::MatrixXd diff = out.y - fit.data.values;
  double qn = (diff * w).cwiseProduct(diff).sum() / static_cast<double>(fit.n());
  return {qn, out.r2};
}

double loss_qn(const ModelSpec& spec, const Eigen::VectorXd& theta, const VarFit& fit,
               const LossConfig& cfg) {
  try {
    return loss_qn_detail(spec, theta, fit, cfg).qn;
  } catch (const NonStationary&) {
    return kInf;
  } catch (const EvalError&) {
    return kInf;
  } catch (const RiccatiDivergence&) {
    return kInf;
  } catch (const NotPSD&) {
    return kInf;
  }
}

double population_loss(const ModelSpec& spec, const Eigen::VectorXd& theta,
                       const Eigen::VectorXd& mu_dgp, const DataVMA& dgp_vma,
                       const SymMatrix& sigma_data, const Eigen::MatrixXd& w, int horizon) {
  ModelMatrices m = eval_model(spec, theta);
  if (!m.stationary) throw NonStationary("population_loss: model not stationary");
  SteadyKFOptions so;
  so.vma_horizon = horizon;
  so.vma_max_horizon = std::max(horizon, 50);
  SteadyKF steady = solve_steady_kf(m, so);
  TransportMap map = transport_map(steady.Sigma, sigma_data);

  const Eigen::Index d = m.dy();
  Eigen::MatrixXd s_half = sqrt_psd(sigma_data).mat();
  Eigen::VectorXd dmu = mu_dgp - m.mu;
  double total = dmu.dot(w * dmu);
  for (int j = 0; j <= horizon; ++j) {
    Eigen::MatrixXd lt = (j == 0) ? Eigen::MatrixXd::Identity(d, d)
                                  : (static_cast<std::size_t>(j) <= dgp_vma.lambda_tilde.size()
                                         ? dgp_vma.lambda_tilde[static_cast<std::size_t>(j - 1)]
                                         : Eigen::MatrixXd::Zero(d, d));
    Eigen::MatrixXd lm = (j == 0) ? Eigen::MatrixXd::Identity(d, d)
                                  : (static_cast<std::size_t>(j) <= steady.lambda.size()
                                         ? steady.lambda[static_cast<std::size_t>(j - 1)]
                                         : Eigen::MatrixXd::Zero(d, d));
    Eigen::MatrixXd gap = lt - lm * map.P;
    total += (s_half * gap.transpose() * w * gap * s_half).trace();
  }
  return total;
}

double penalized_loss(const ModelSpec& spec, const Eigen::VectorXd& theta,
                      const VarFit& fit, const LossConfig& cfg) {
  double base = loss_qn(spec, theta, fit, cfg);
  if (!std::isfinite(base)) return kInf;
  double logp = 0.0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    logp += log_prior(spec.params[static_cast<std::size_t>(i)], theta(i));
  }
  if (!std::isfinite(logp)) return kInf;
  return base - logp / static_cast<double>(fit.n());
}

NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& x0, double initial_step,
                             double tol, int max_evals) {
  const int n = static_cast<int>(x0.size());
  long evals = 0;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++evals;
    double v = f(x);
    return std::isfinite(v) ? v : kInf;
  };

  std::vector<Eigen::VectorXd> pts(static_cast<std::size_t>(n + 1), x0);
  std::vector<double> vals(static_cast<std::size_t>(n + 1));
  for (int i = 1; i <= n; ++i) pts[static_cast<std::size_t>(i)](i - 1) += initial_step;
  for (int i = 0; i <= n; ++i) vals[static_cast<std::size_t>(i)] = eval(pts[static_cast<std::size_t>(i)]);

  auto order = [&]() {
    std::vector<int> idx(static_cast<std::size_t>(n + 1));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int a, int b) { return vals[static_cast<std::size_t>(a)] < vals[static_cast<std::size_t>(b)]; });
    std::vector<Eigen::VectorXd> p2;
    std::vector<double> v2;
    for (int i : idx) {
      p2.push_back(pts[static_cast<std::size_t>(i)]);
      v2.push_back(vals[static_cast<std::size_t>(i)]);
    }
    pts.swap(p2);
    vals.swap(v2);
  };

  NelderMeadResult res;
  while (evals < max_evals) {
    order();
    double diameter = 0.0;
    for (int i = 1; i <= n; ++i) {
      diameter = std::max(diameter, (pts[static_cast<std::size_t>(i)] - pts[0]).norm());
    }
    if (diameter < tol) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) centroid += pts[static_cast<std::size_t>(i)];
    centroid /= static_cast<double>(n);
    const Eigen::VectorXd& worst = pts[static_cast<std::size_t>(n)];
    double f_best = vals[0], f_second = vals[static_cast<std::size_t>(n - 1)],
           f_worst = vals[static_cast<std::size_t>(n)];

    Eigen::VectorXd xr = centroid + (centroid - worst);
    double fr = eval(xr);
    if (fr < f_best) {
      Eigen::VectorXd xe = centroid + 2.0 * (centroid - worst);
      double fe = eval(xe);
      if (fe < fr) {
        pts[static_cast<std::size_t>(n)] = xe;
        vals[static_cast<std::size_t>(n)] = fe;
      } else {
        pts[static_cast<std::size_t>(n)] = xr;
        vals[static_cast<std::size_t>(n)] = fr;
      }
    } else if (fr < f_second) {
      pts[static_cast<std::size_t>(n)] = xr;
      vals[static_cast<std::size_t>(n)] = fr;
    } else {
      Eigen::VectorXd xc = (fr < f_worst) ? (centroid + 0.5 * (xr - centroid)).eval()
                                          : (centroid + 0.5 * (worst - centroid)).eval();
      double fc = eval(xc);
      if (fc < std::min(fr, f_worst)) {
        pts[static_cast<std::size_t>(n)] = xc;
        vals[static_cast<std::size_t>(n)] = fc;
      } else {
        for (int i = 1; i <= n; ++i) {
          pts[static_cast<std::size_t>(i)] = pts[0] + 0.5 * (pts[static_cast<std::size_t>(i)] - pts[0]);
          vals[static_cast<std::size_t>(i)] = eval(pts[static_cast<std::size_t>(i)]);
        }
      }
    }
  }
  order();
  res.x = pts[0];
  res.value = vals[0];
  res.n_evals = evals;
  return res;
}

namespace {

// Box <-> unconstrained coordinates via the logistic transform.
struct BoxTransform {
  Eigen::VectorXd lo, hi;

  Eigen::VectorXd to_box(const Eigen::VectorXd& x) const {
    Eigen::VectorXd th(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      double s = 1.0 / (1.0 + std::exp(-x(i)));
      th(i) = lo(i) + (hi(i) - lo(i)) * s;
    }
    return th;
  }
  Eigen::VectorXd from_box(const Eigen::VectorXd& th) const {
    Eigen::VectorXd x(th.size());
    for (Eigen::Index i = 0; i < th.size(); ++i) {
      double u = (th(i) - lo(i)) / (hi(i) - lo(i));
      u = std::min(std::max(u, 1e-9), 1.0 - 1e-9);
      x(i) = std::log(u / (1.0 - u));
    }
    return x;
  }
};

// Low-discrepancy points in (0,1)^dim: Halton sequence with a seeded digital
// scramble (deterministic given the seed).
double halton(int index, int base, std::uint64_t scramble) {
  double f = 1.0, r = 0.0;
  int i = index;
  while (i > 0) {
    f /= base;
    int digit = i % base;
    digit = static_cast<int>((digit + scramble) % static_cast<std::uint64_t>(base));
    r += f * digit;
    i /= base;
  }
  return r;
}

const int kHaltonBases[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};

}  // namespace

EstimationResult optimize(const ModelSpec& spec, const VarFit& fit, const LossConfig& cfg,
                          const OptimizerOptions& opts) {
  spec.validate();
  std::vector<int> free_idx;
  for (std::size_t i = 0; i < spec.params.size(); ++i) {
    if (spec.params[i].lower < spec.params[i].upper) free_idx.push_back(static_cast<int>(i));
  }
  const int nf = static_cast<int>(free_idx.size());
  if (nf < 1) throw ConfigError("optimize: no free parameters");

  BoxTransform box;
  box.lo.resize(nf);
  box.hi.resize(nf);
  Eigen::VectorXd full(spec.n_params());
  for (Eigen::Index i = 0; i < spec.n_params(); ++i) {
    full(i) = spec.params[static_cast<std::size_t>(i)].lower;  // fixed params sit at lower==upper
  }
  for (int j = 0; j < nf; ++j) {
    box.lo(j) = spec.params[static_cast<std::size_t>(free_idx[static_cast<std::size_t>(j)])].lower;
    box.hi(j) = spec.params[static_cast<std::size_t>(free_idx[static_cast<std::size_t>(j)])].upper;
  }

  auto expand = [&](const Eigen::VectorXd& th_free) {
    Eigen::VectorXd th = full;
    for (int j = 0; j < nf; ++j) th(free_idx[static_cast<std::size_t>(j)]) = th_free(j);
    return th;
  };

  std::atomic<long> total_evals{0};
  auto objective = [&](const Eigen::VectorXd& x) {
    ++total_evals;
    Eigen::VectorXd th = expand(box.to_box(x));
    return cfg.prior_penalty ? penalized_loss(spec, th, fit, cfg)
                             : loss_qn(spec, th, fit, cfg);
  };

  // Start set: prior mean (or midpoint), then quasi-random perturbations of it.
  Eigen::VectorXd center(nf);
  for (int j = 0; j < nf; ++j) {
    const ParamSpec& p = spec.params[static_cast<std::size_t>(free_idx[static_cast<std::size_t>(j)])];
    double c = 0.5 * (p.lower + p.upper);
    if (p.prior.family != PriorFamily::none && p.prior.family != PriorFamily::uniform) {
      c = std::min(std::max(p.prior.mean, p.lower + 0.05 * (p.upper - p.lower)),
                   p.upper - 0.05 * (p.upper - p.lower));
    }
    center(j) = c;
  }

  std::vector<Eigen::VectorXd> starts;
  starts.push_back(center);
  for (int s = 1; s < opts.starts; ++s) {
    Eigen::VectorXd th(nf);
    for (int j = 0; j < nf; ++j) {
      const ParamSpec& p = spec.params[static_cast<std::size_t>(free_idx[static_cast<std::size_t>(j)])];
      double width = p.upper - p.lower;
      double u = halton(s, kHaltonBases[j % 12],
                        Rng::derive_seed(opts.seed, static_cast<std::uint64_t>(j)));
      double cand = center(j) + opts.perturb_scale * width * (2.0 * u - 1.0);
      th(j) = std::min(std::max(cand, p.lower + 1e-6 * width), p.upper - 1e-6 * width);
    }
    starts.push_back(th);
  }

  struct StartOutcome {
    Eigen::VectorXd theta;
    double value = kInf;
    bool converged = false;
    long evals = 0;
  };

  auto run_start = [&](const Eigen::VectorXd& th0) {
    StartOutcome o;
    NelderMeadResult nm = nelder_mead(objective, box.from_box(th0), 0.25,
                                      opts.simplex_tol, opts.max_evals_per_start);
    o.theta = expand(box.to_box(nm.x));
    o.value = nm.value;
    o.converged = nm.converged;
    o.evals = nm.n_evals;
    return o;
  };

  std::vector<std::future<StartOutcome>> futures;
  futures.reserve(starts.size());
  for (const auto& s : starts) {
    futures.push_back(std::async(std::launch::async, run_start, s));
  }
  std::vector<StartOutcome> outcomes;
  outcomes.reserve(starts.size());
  for (auto& f : futures) outcomes.push_back(f.get());

  // deterministic argmin: best value, then lexicographically smallest theta
  const StartOutcome* best = nullptr;
  for (const auto& o : outcomes) {
    if (!std::isfinite(o.value)) continue;
    if (!best || o.value < best->value - 1e-15) {
      best = &o;
    } else if (best && std::abs(o.value - best->value) <= 1e-15) {
      for (Eigen::Index j = 0; j < o.theta.size(); ++j) {
        if (o.theta(j) < best->theta(j) - 1e-15) {
          best = &o;
          break;
        }
        if (o.theta(j) > best->theta(j) + 1e-15) break;
      }
    }
  }
  if (!best) throw NoFeasibleStart("optimize: every start returned an infinite loss");

  EstimationResult res;
  res.theta_hat = best->theta;
  LossEval detail = loss_qn_detail(spec, best->theta, fit, cfg);
  res.qn = detail.qn;
  res.r2 = detail.r2;
  res.n_evals = total_evals.load();
  res.converged = best->converged;
  return res;
}

}  // namespace otf
