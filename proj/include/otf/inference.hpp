#ifndef OTF_INFERENCE_HPP
#define OTF_INFERENCE_HPP

#include <optional>
#include <string>
#include <vector>
#include <Eigen/Dense>

#include "otf/estimator.hpp"
#include "otf/linalg.hpp"
#include "otf/model.hpp"
#include "otf/varsieve.hpp"

namespace otf {

// Auxiliary parameter vector layout:
//   psi = (mu', vech(Sigma)', vec(Psi_1)', ..., vec(Psi_k)')'
// vech stacks the lower triangle column-major; vec is column-major.
struct PsiView {
  Eigen::VectorXd mu;
  SymMatrix sigma;
  std::vector<Eigen::MatrixXd> psi;

  Eigen::Index d() const { return mu.size(); }
  int k() const { return static_cast<int>(psi.size()); }
};

Eigen::Index psi_dim(Eigen::Index d, int k);
Eigen::VectorXd psi_pack(const VarFit& fit);
PsiView psi_unpack(const Eigen::VectorXd& psi, Eigen::Index d, int k);

// Per-period derivatives of the coupled series by central finite differences.
// psi perturbations re-run the residual construction and the transport map;
// theta perturbations re-run the model evaluation and the steady filter.
struct SensitivityBundle {
  std::vector<Eigen::MatrixXd> d_theta_y;  // n entries, d x d_theta
  std::vector<Eigen::MatrixXd> d_psi_y;    // n entries, d x d_psi
  // second-derivative arrays of G_t = vec[d_theta y_t'] (robust path only)
  std::vector<Eigen::MatrixXd> d_theta_G;  // n entries, (d*d_theta) x d_theta
  std::vector<Eigen::MatrixXd> d_psi_G;    // n entries, (d*d_theta) x d_psi
  Eigen::MatrixXd coupled;                 // baseline coupled series, n x d
  Eigen::Index d = 0, d_theta = 0, d_psi = 0;
  int k = 0;
};

SensitivityBundle numeric_sensitivities(const ModelSpec& spec,
                                        const Eigen::VectorXd& theta_hat,
                                        const VarFit& fit, const LossConfig& cfg,
                                        bool robust, double step_scale = 1e-5);

// Bartlett-kernel long-run variance; bandwidth < 0 selects floor(1.3 n^{1/3}).
SymMatrix hac_lrv(const Eigen::MatrixXd& series, int bandwidth = -1);
int hac_auto_bandwidth(Eigen::Index n);

// Gaussian VAR(k) quasi-likelihood pieces in the psi layout above.
Eigen::VectorXd var_loglik_score(const DataSet& data, const Eigen::VectorXd& presample,
                                 const PsiView& view, Eigen::Index t /* 1-based */);
Eigen::MatrixXd var_loglik_score_matrix(const DataSet& data,
                                        const Eigen::VectorXd& presample,
                                        const PsiView& view);  // n x d_psi
// Hessian of the average log-likelihood, by central differences of the score.
Eigen::MatrixXd var_loglik_hessian(const DataSet& data, const Eigen::VectorXd& presample,
                                   const Eigen::VectorXd& psi, Eigen::Index d, int k,
                                   double step_scale = 1e-5);

enum class SEMode { correct, robust };

struct SEResult {
  SEMode mode = SEMode::correct;
  SymMatrix vcov;        // V_hat / n
  Eigen::VectorXd se;
  int hac_bandwidth = 0;
  double m_condition = 0.0;  // condition number of M_hat (diagnostic)
  std::vector<std::string> warnings;
};

SEResult se_correct(const ModelSpec& spec, const Eigen::VectorXd& theta_hat,
                    const VarFit& fit, const LossConfig& cfg);
SEResult se_robust(const ModelSpec& spec, const Eigen::VectorXd& theta_hat,
                   const VarFit& fit, const LossConfig& cfg);

// Both modes from one sensitivity pass.
struct SEPair {
  SEResult correct;
  SEResult robust;
};
SEPair se_both(const ModelSpec& spec, const Eigen::VectorXd& theta_hat,
               const VarFit& fit, const LossConfig& cfg);

struct SpecTestOptions {
  std::optional<int> variable;  // 0-based index for the single-variable test
  double alpha_1 = 0.10;
  double alpha_2 = 0.05;
  int n_draws = 200000;
  std::uint64_t seed = 987654321;
  int hac_bandwidth = -1;  // auto
};

struct SpecTestResult {
  double stat = 0.0;             // n Q_n
  Eigen::VectorXd weights;       // eigenvalues of S^{1/2} M_k S^{1/2}, clipped at 0
  double crit_10 = 0.0;
  double crit_05 = 0.0;
  double p_value = 1.0;
  std::optional<int> variable;
  double trace_sm = 0.0;         // trace(S M_k), diagnostic
  double trace_sm2 = 0.0;        // trace((S M_k)^2), diagnostic
  std::vector<std::string> warnings;
};

SpecTestResult spec_test(const ModelSpec& spec, const Eigen::VectorXd& theta_hat,
                         const VarFit& fit, const LossConfig& cfg,
                         const SpecTestOptions& opts = {});

// All per-variable tests plus the full-vector test from one sensitivity pass.
std::vector<SpecTestResult> spec_test_all(const ModelSpec& spec,
                                          const Eigen::VectorXd& theta_hat,
                                          const VarFit& fit, const LossConfig& cfg,
                                          const SpecTestOptions& opts = {});

// Empirical 1-alpha quantile of sum_i weights_i * Chi2_1 over seeded draws.
double wchi2_quantile(const Eigen::VectorXd& weights, double alpha, int n_draws,
                      std::uint64_t seed);
double wchi2_pvalue(const Eigen::VectorXd& weights, double stat, int n_draws,
                    std::uint64_t seed);

}  // namespace otf

#endif  // OTF_INFERENCE_HPP
