#include "otf/kalman.hpp"

#include <cmath>

#include "otf/errors.hpp"
#include "otf/rng.hpp"

namespace otf {

Eigen::Vector4d SteadyKF::residuals(const ModelMatrices& m) const {
  Eigen::MatrixXd bad = m.B + m.A * m.D;
  Eigen::MatrixXd r1 = Vbar.mat() - (m.C * V.mat() * m.C.transpose() + m.D * m.D.transpose());
  Eigen::MatrixXd r2 = Sigma.mat() - (m.A * m.C * V.mat() * m.C.transpose() * m.A.transpose() +
                                      bad * bad.transpose());
  Eigen::MatrixXd r3 = K - Vbar.mat() * m.A.transpose() * pinv_psd(Sigma).mat();
  Eigen::MatrixXd r4 = V.mat() - (Eigen::MatrixXd::Identity(V.dim(), V.dim()) - K * m.A) * Vbar.mat();
  Eigen::Vector4d out;
  out << r1.norm() / (1.0 + Vbar.mat().norm()),
      r2.norm() / (1.0 + Sigma.mat().norm()),
      r3.norm() / (1.0 + K.norm()),
      r4.norm() / (1.0 + V.mat().norm());
  return out;
}

KFStepMatrices kf_covariance_step(const ModelMatrices& m, const SymMatrix& v_prev,
                                  double rank_tol) {
  KFStepMatrices s;
  Eigen::MatrixXd cvc = m.C * v_prev.mat() * m.C.transpose();
  s.Vbar = SymMatrix(cvc + m.D * m.D.transpose());
  Eigen::MatrixXd bad = m.B + m.A * m.D;
  s.Sigma = SymMatrix(m.A * cvc * m.A.transpose() + bad * bad.transpose());
  s.K = s.Vbar.mat() * m.A.transpose() * pinv_psd(s.Sigma, rank_tol).mat();
  Eigen::MatrixXd v =
      (Eigen::MatrixXd::Identity(v_prev.dim(), v_prev.dim()) - s.K * m.A) * s.Vbar.mat();
  s.V = SymMatrix(0.5 * (v + v.transpose()));
  return s;
}

SteadyKF solve_steady_kf(const ModelMatrices& m, const SteadyKFOptions& opts) {
  const Eigen::Index dz = m.dz();

  SymMatrix v{Eigen::MatrixXd::Zero(dz, dz)};
  if (m.stationary) {
    // start the iteration from the unconditional state variance
    v = solve_lyapunov(m.C, SymMatrix(m.D * m.D.transpose()));
  } else {
    double scale = opts.unitroot_init_scale * (1.0 + (m.D * m.D.transpose()).norm());
    v = SymMatrix(scale * Eigen::MatrixXd::Identity(dz, dz));
  }

  KFStepMatrices step;
  bool converged = false;
  for (int it = 0; it < opts.max_iter; ++it) {
    step = kf_covariance_step(m, v, opts.rank_tol);
    double change = (step.V.mat() - v.mat()).norm();
    v = step.V;
    if (change <= opts.tol * (1.0 + v.mat().norm())) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw RiccatiDivergence("solve_steady_kf: covariance iteration did not converge");
  }
  // one more pass so all four matrices correspond to the same V
  step = kf_covariance_step(m, v, opts.rank_tol);

  SteadyKF out;
  out.V = step.V;
  out.Vbar = step.Vbar;
  out.Sigma = step.Sigma;
  out.K = step.K;

  // Lambda_j = A C^j K, extended until the tail is negligible.
  int horizon = opts.vma_horizon > 0 ? opts.vma_horizon
                                     : std::max(50, 10 * opts.vma_k_hint);
  Eigen::MatrixXd cj = m.C;  // C^1
  for (int j = 1; j <= opts.vma_max_horizon; ++j) {
    Eigen::MatrixXd lam = m.A * cj * out.K;
    out.lambda.push_back(lam);
    cj = (cj * m.C).eval();
    if (j >= horizon) {
      if (!m.stationary) break;  // fixed horizon for unit-root systems
      if (lam.norm() < opts.vma_decay_tol) break;
      if (j >= opts.vma_max_horizon) break;
    }
  }
  return out;
}

DataSet simulate(const ModelMatrices& m, Eigen::Index n, std::uint64_t seed,
                 const SimulateOptions& opts, const std::vector<std::string>& names) {
  if (n < 1) throw InsufficientData("simulate: need n >= 1");
  Rng rng(seed);
  Eigen::VectorXd z(m.dz());
  switch (opts.init) {
    case SimulateOptions::Init::stationary: {
      if (!m.stationary) {
        throw NonStationary("simulate: stationary initialization requested for a unit-root model");
      }
      SymMatrix var0 = solve_lyapunov(m.C, SymMatrix(m.D * m.D.transpose()));
      Eigen::MatrixXd root = sqrt_psd(var0).mat();
      z = root * rng.normal_vector(m.dz());
      break;
    }
    case SimulateOptions::Init::zero:
      z.setZero();
      break;
    case SimulateOptions::Init::given:
      if (opts.z0.size() != m.dz()) throw ShapeError("simulate: z0 has wrong length");
      z = opts.z0;
      break;
  }
  Eigen::MatrixXd y(n, m.dy());
  for (Eigen::Index t = 0; t < n; ++t) {
    Eigen::VectorXd v = rng.normal_vector(m.dv());
    z = m.C * z + m.D * v;
    y.row(t) = (m.mu + m.A * z + m.B * v).transpose();
  }
  return make_dataset(y, names);
}

}  // namespace otf
