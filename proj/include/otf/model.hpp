#ifndef OTF_MODEL_HPP
#define OTF_MODEL_HPP

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>
#include <Eigen/Dense>

#include "otf/expr.hpp"
#include "otf/prior.hpp"

namespace otf {

// Linear state-space system evaluated at a parameter point:
//   y_t = mu + A z_t + B v_t,   z_t = C z_{t-1} + D v_t,   v_t ~ (0, I).
struct ModelMatrices {
  Eigen::VectorXd mu;  // d_y
  Eigen::MatrixXd A;   // d_y x d_z
  Eigen::MatrixXd B;   // d_y x d_v
  Eigen::MatrixXd C;   // d_z x d_z
  Eigen::MatrixXd D;   // d_z x d_v
  bool stationary = true;

  Eigen::Index dy() const { return mu.size(); }
  Eigen::Index dz() const { return C.rows(); }
  Eigen::Index dv() const { return B.cols(); }
};

// Expression templates for each system matrix. Entries reference declared
// parameters only.
struct TemplateMatrices {
  std::vector<ExprPtr> mu;               // d_y
  std::vector<std::vector<ExprPtr>> A, B, C, D;
};

// Model specification: parameter list plus either expression templates or a
// native evaluator (used by builtins whose matrices are recursions, not
// closed-form expressions).
struct ModelSpec {
  std::string name;
  Eigen::Index d_y = 0, d_z = 0, d_v = 0;
  std::vector<ParamSpec> params;
  std::shared_ptr<const TemplateMatrices> templates;  // may be null
  std::function<ModelMatrices(const Eigen::VectorXd&)> native;  // may be empty

  // Unit-root systems are accepted for filtering only; estimation requires
  // stationarity.
  bool allow_unit_root = false;
  // Index of a deterministic state pinned at its initial value (no prior
  // variance assigned in the diffuse-ish initialization), or -1.
  Eigen::Index constant_state = -1;
  // Default initial state mean for filtering; empty means zeros.
  Eigen::VectorXd nu0_default;
  // When >= 0, nu0[state] is seeded with the first observation of this
  // data column (used by the unit-root trend-cycle model).
  Eigen::Index nu0_from_first_obs_state = -1;
  Eigen::Index nu0_from_first_obs_column = 0;

  Eigen::Index n_params() const { return static_cast<Eigen::Index>(params.size()); }
  int param_index(const std::string& pname) const;
  void validate() const;
};

// Evaluates the specification at theta. Checks bounds, finiteness, and
// stationarity (unless the spec allows unit roots, in which case the
// stationary flag on the result records the outcome).
ModelMatrices eval_model(const ModelSpec& spec, const Eigen::VectorXd& theta);

// ---- builtin registry ----------------------------------------------------

// Names: "ma1", "arma(p,q)", "local_level", "watson_trend_cycle",
// "atsm(d_f)" (maturities supplied separately or defaulted).
ModelSpec builtin_model(const std::string& name,
                        const std::vector<int>& atsm_maturities = {});

ModelSpec builtin_ma1();
ModelSpec builtin_arma(int p, int q);
ModelSpec builtin_local_level();
ModelSpec builtin_watson_trend_cycle();
ModelSpec builtin_atsm(int d_f, const std::vector<int>& maturities);

// ---- affine term-structure loadings ---------------------------------------

// Yield on an n-period pure-discount bond: y_t^n = a_n + b_n' F_t with
//   b_n = (1/n) (I + rhoQ' + ... + rhoQ'^{n-1}) delta1
//   a_n = delta0 + (1/n) sum_{j<n} j b_j' cQ - (1/2n) sum_{j<n} j^2 b_j' b_j.
struct AtsmLoadings {
  Eigen::VectorXd a;  // max_maturity
  Eigen::MatrixXd b;  // max_maturity x d_f
};

AtsmLoadings atsm_loadings(double delta0, const Eigen::VectorXd& delta1,
                           const Eigen::MatrixXd& rhoQ, const Eigen::VectorXd& cQ,
                           int max_maturity);

}  // namespace otf

#endif  // OTF_MODEL_HPP
