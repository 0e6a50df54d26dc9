#ifndef OTF_ESTIMATOR_HPP
#define OTF_ESTIMATOR_HPP

#include <optional>
#include <string>
#include <vector>
#include <Eigen/Dense>

#include "otf/model.hpp"
#include "otf/transport.hpp"
#include "otf/varsieve.hpp"

namespace otf {

enum class Weighting { inverse_variance, identity, user };

struct LossConfig {
  Weighting weighting = Weighting::inverse_variance;
  Eigen::MatrixXd user_w;  // used when weighting == user; symmetric positive definite
  bool prior_penalty = false;
  int k = 4;  // VAR lag order (recorded; the VarFit passed in governs)
  double rank_tol = kDefaultRankTol;

  // Weight matrix for a given sample.
  Eigen::MatrixXd weight_matrix(const DataSet& data) const;
};

// Q_n(theta; psi_hat) = (1/n) sum_t || y_t(theta) - data_t ||^2_W.
// Nonstationary theta returns +infinity (the optimizer routes around it).
double loss_qn(const ModelSpec& spec, const Eigen::VectorXd& theta, const VarFit& fit,
               const LossConfig& cfg);

// Loss plus the R^2 vector and coupled output for reporting.
struct LossEval {
  double qn = 0.0;
  Eigen::VectorXd r2;
};
LossEval loss_qn_detail(const ModelSpec& spec, const Eigen::VectorXd& theta,
                        const VarFit& fit, const LossConfig& cfg);

// Truncated population loss between the model VMA and a DGP VMA:
//   ||mu_dgp - mu(theta)||^2_W
//   + sum_{j=0}^{J} trace(S^{1/2} {L_j - Lambda_j(theta) P}' W {L_j - Lambda_j(theta) P} S^{1/2})
// with L_0 = Lambda_0 = I and S the DGP innovation variance.
double population_loss(const ModelSpec& spec, const Eigen::VectorXd& theta,
                       const Eigen::VectorXd& mu_dgp, const DataVMA& dgp_vma,
                       const SymMatrix& sigma_data, const Eigen::MatrixXd& w, int horizon);

// Q_n - (1/n) sum_i log prior_i(theta_i); +infinity outside the bounds.
double penalized_loss(const ModelSpec& spec, const Eigen::VectorXd& theta,
                      const VarFit& fit, const LossConfig& cfg);

struct OptimizerOptions {
  int starts = 8;
  int max_evals_per_start = 4000;
  double simplex_tol = 1e-8;       // simplex diameter in transformed space
  double perturb_scale = 0.25;     // of the box width, for quasi-random starts
  std::uint64_t seed = 12345;      // scrambles the low-discrepancy start set
  bool trace = false;
};

struct EstimationResult {
  Eigen::VectorXd theta_hat;
  double qn = 0.0;
  Eigen::VectorXd r2;
  long n_evals = 0;
  bool converged = false;
  std::vector<std::pair<Eigen::VectorXd, double>> trace;
};

// Nelder-Mead over the logit transform of the box bounds, multistart from the
// prior means/midpoints plus quasi-random perturbations; deterministic argmin
// with lexicographic tie-break on theta.
EstimationResult optimize(const ModelSpec& spec, const VarFit& fit, const LossConfig& cfg,
                          const OptimizerOptions& opts = {});

// Generic Nelder-Mead used by optimize and directly testable on plain
// objectives. Works in unconstrained coordinates.
struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0.0;
  long n_evals = 0;
  bool converged = false;
};
NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& x0, double initial_step,
                             double tol, int max_evals);

}  // namespace otf

#endif  // OTF_ESTIMATOR_HPP
