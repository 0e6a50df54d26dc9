#include "otf/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "otf/errors.hpp"
#include "otf/linalg.hpp"

namespace otf {

int ModelSpec::param_index(const std::string& pname) const {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name == pname) return static_cast<int>(i);
  }
  return -1;
}

void ModelSpec::validate() const {
  if (d_y < 1 || d_z < 1 || d_v < 1) throw ConfigError("model dimensions must be positive");
  std::set<std::string> declared;
  for (const auto& p : params) {
    p.validate();
    if (!declared.insert(p.name).second) {
      throw ConfigError("duplicate parameter name: " + p.name);
    }
  }
  if (templates) {
    auto check_names = [&](const ExprPtr& e) {
      for (const auto& nm : e->parameter_names()) {
        if (!declared.count(nm)) {
          throw ConfigError("template references undeclared parameter: " + nm);
        }
      }
    };
    auto check_matrix = [&](const std::vector<std::vector<ExprPtr>>& m,
                            Eigen::Index rows, Eigen::Index cols, const char* label) {
      if (static_cast<Eigen::Index>(m.size()) != rows) {
        throw ConfigError(std::string("template ") + label + ": wrong row count");
      }
      for (const auto& row : m) {
        if (static_cast<Eigen::Index>(row.size()) != cols) {
          throw ConfigError(std::string("template ") + label + ": wrong column count");
        }
        for (const auto& e : row) check_names(e);
      }
    };
    if (static_cast<Eigen::Index>(templates->mu.size()) != d_y) {
      throw ConfigError("template mu: wrong length");
    }
    for (const auto& e : templates->mu) check_names(e);
    check_matrix(templates->A, d_y, d_z, "A");
    check_matrix(templates->B, d_y, d_v, "B");
    check_matrix(templates->C, d_z, d_z, "C");
    check_matrix(templates->D, d_z, d_v, "D");
  } else if (!native) {
    throw ConfigError("model spec has neither templates nor a native evaluator");
  }
}

namespace {

Eigen::MatrixXd eval_matrix(const std::vector<std::vector<ExprPtr>>& tmpl,
                            const std::map<std::string, double>& values) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(tmpl.size()),
                    tmpl.empty() ? 0 : static_cast<Eigen::Index>(tmpl[0].size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      m(i, j) = tmpl[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]->eval(values);
    }
  }
  return m;
}

}  // namespace

ModelMatrices eval_model(const ModelSpec& spec, const Eigen::VectorXd& theta) {
  if (theta.size() != spec.n_params()) {
    throw ShapeError("eval_model: theta has wrong length");
  }
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const auto& p = spec.params[static_cast<std::size_t>(i)];
    if (theta(i) < p.lower || theta(i) > p.upper) {
      throw EvalError("parameter " + p.name + " out of bounds");
    }
  }
  ModelMatrices m;
  if (spec.native) {
    m = spec.native(theta);
  } else {
    std::map<std::string, double> values;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      values[spec.params[static_cast<std::size_t>(i)].name] = theta(i);
    }
    m.mu.resize(spec.d_y);
    for (Eigen::Index i = 0; i < spec.d_y; ++i) {
      m.mu(i) = spec.templates->mu[static_cast<std::size_t>(i)]->eval(values);
    }
    m.A = eval_matrix(spec.templates->A, values);
    m.B = eval_matrix(spec.templates->B, values);
    m.C = eval_matrix(spec.templates->C, values);
    m.D = eval_matrix(spec.templates->D, values);
  }
  if (!m.mu.allFinite() || !m.A.allFinite() || !m.B.allFinite() || !m.C.allFinite() ||
      !m.D.allFinite()) {
    throw EvalError("model matrices contain non-finite entries");
  }
  m.stationary = spectral_radius_lt_one(m.C);
  if (!m.stationary && !spec.allow_unit_root) {
    throw NonStationary("eval_model: spectral radius of C is not below 1");
  }
  return m;
}

// ---- builtins --------------------------------------------------------------

namespace {

ParamSpec param(std::string name, double lo, double hi,
                Prior prior = {PriorFamily::none, 0.0, 1.0}) {
  ParamSpec p;
  p.name = std::move(name);
  p.lower = lo;
  p.upper = hi;
  p.prior = prior;
  return p;
}

}  // namespace

ModelSpec builtin_ma1() {
  // y_t = mu + xi_t + lambda1 xi_{t-1};  states carry (xi_t, xi_{t-1}).
  ModelSpec s;
  s.name = "ma1";
  s.d_y = 1;
  s.d_z = 2;
  s.d_v = 1;
  s.params = {param("mu", -5.0, 5.0), param("lambda1", -0.95, 0.95),
              param("sigma", 0.05, 5.0)};
  s.native = [](const Eigen::VectorXd& th) {
    ModelMatrices m;
    double mu = th(0), lambda1 = th(1), sigma = th(2);
    m.mu = Eigen::VectorXd::Constant(1, mu);
    m.A = (Eigen::MatrixXd(1, 2) << 1.0, lambda1).finished();
    m.B = Eigen::MatrixXd::Zero(1, 1);
    m.C = (Eigen::MatrixXd(2, 2) << 0.0, 0.0, 1.0, 0.0).finished();
    m.D = (Eigen::MatrixXd(2, 1) << sigma, 0.0).finished();
    return m;
  };
  return s;
}

ModelSpec builtin_arma(int p, int q) {
  if (p < 0 || q < 0 || p + q == 0) throw ConfigError("arma(p,q): need p + q >= 1");
  int m_dim = std::max(p, q + 1);
  ModelSpec s;
  s.name = "arma(" + std::to_string(p) + "," + std::to_string(q) + ")";
  s.d_y = 1;
  s.d_z = m_dim;
  s.d_v = 1;
  s.params.push_back(param("mu", -10.0, 10.0));
  for (int i = 1; i <= p; ++i) s.params.push_back(param("phi" + std::to_string(i), -0.99, 0.99));
  for (int i = 1; i <= q; ++i) s.params.push_back(param("theta" + std::to_string(i), -0.99, 0.99));
  s.params.push_back(param("sigma", 1e-3, 10.0));
  s.native = [p, q, m_dim](const Eigen::VectorXd& th) {
    // companion ("Harvey") form: the first state equals y_t - mu,
    //   z_{i,t} = phi_i z_{1,t-1} + z_{i+1,t-1} + theta_{i-1} sigma v_t
    // with theta_0 = 1 and out-of-range coefficients zero.
    ModelMatrices m;
    double mu = th(0);
    Eigen::VectorXd phi = th.segment(1, p);
    Eigen::VectorXd theta = th.segment(1 + p, q);
    double sigma = th(1 + p + q);
    m.mu = Eigen::VectorXd::Constant(1, mu);
    m.A = Eigen::MatrixXd::Zero(1, m_dim);
    m.A(0, 0) = 1.0;
    m.B = Eigen::MatrixXd::Zero(1, 1);
    m.C = Eigen::MatrixXd::Zero(m_dim, m_dim);
    for (int i = 0; i < m_dim; ++i) {
      if (i < p) m.C(i, 0) = phi(i);
      if (i + 1 < m_dim) m.C(i, i + 1) = 1.0;
    }
    m.D = Eigen::MatrixXd::Zero(m_dim, 1);
    m.D(0, 0) = sigma;
    for (int i = 1; i < m_dim; ++i) m.D(i, 0) = (i - 1 < q) ? theta(i - 1) * sigma : 0.0;
    return m;
  };
  return s;
}

ModelSpec builtin_local_level() {
  // z_t = z_{t-1} + sigma_eta v1;  y_t = z_t + sigma_e v2. Unit root: filtering only.
  ModelSpec s;
  s.name = "local_level";
  s.d_y = 1;
  s.d_z = 1;
  s.d_v = 2;
  s.allow_unit_root = true;
  s.params = {param("sigma_eta", 1e-4, 10.0), param("sigma_e", 1e-4, 10.0)};
  s.native = [](const Eigen::VectorXd& th) {
    ModelMatrices m;
    m.mu = Eigen::VectorXd::Zero(1);
    m.A = Eigen::MatrixXd::Constant(1, 1, 1.0);
    m.B = (Eigen::MatrixXd(1, 2) << 0.0, th(1)).finished();
    m.C = Eigen::MatrixXd::Constant(1, 1, 1.0);
    m.D = (Eigen::MatrixXd(1, 2) << th(0), 0.0).finished();
    return m;
  };
  return s;
}

ModelSpec builtin_watson_trend_cycle() {
  // y_t = tau_t + c_t; tau_t = mu + tau_{t-1} + eta_t; c_t AR(2).
  // States (tau_t, c_t, c_{t-1}, 1); the drift rides on a pinned constant state.
  ModelSpec s;
  s.name = "watson_trend_cycle";
  s.d_y = 1;
  s.d_z = 4;
  s.d_v = 2;
  s.allow_unit_root = true;
  s.constant_state = 3;
  s.nu0_default = (Eigen::VectorXd(4) << 0.0, 0.0, 0.0, 1.0).finished();
  s.nu0_from_first_obs_state = 0;  // seed tau_0 with the first observation
  s.params = {param("mu", -10.0, 10.0), param("rho1", -2.0, 2.0),
              param("rho2", -1.0, 1.0), param("sigma_eta", 1e-6, 10.0),
              param("sigma_e", 1e-6, 10.0)};
  s.native = [](const Eigen::VectorXd& th) {
    ModelMatrices m;
    double mu = th(0), rho1 = th(1), rho2 = th(2), se = th(3), sc = th(4);
    m.mu = Eigen::VectorXd::Zero(1);
    m.A = (Eigen::MatrixXd(1, 4) << 1.0, 1.0, 0.0, 0.0).finished();
    m.B = Eigen::MatrixXd::Zero(1, 2);
    m.C = (Eigen::MatrixXd(4, 4) << 1, 0, 0, mu,
                                     0, rho1, rho2, 0,
                                     0, 1, 0, 0,
                                     0, 0, 0, 1).finished();
    m.D = (Eigen::MatrixXd(4, 2) << se, 0,
                                     0, sc,
                                     0, 0,
                                     0, 0).finished();
    return m;
  };
  return s;
}

ModelSpec builtin_atsm(int d_f, const std::vector<int>& maturities) {
  if (d_f < 1) throw ConfigError("atsm: d_f must be >= 1");
  if (maturities.empty()) throw ConfigError("atsm: maturities required");
  for (int n : maturities) {
    if (n < 1) throw ConfigError("atsm: maturities must be >= 1");
  }
  ModelSpec s;
  s.name = "atsm(" + std::to_string(d_f) + ")";
  s.d_y = static_cast<Eigen::Index>(maturities.size());
  s.d_z = d_f;
  s.d_v = d_f;
  // theta layout: delta0, delta1 (d_f), rhoQ lower triangle by rows
  // (d_f(d_f+1)/2), cQ (d_f), rho row-major (d_f^2)
  s.params.push_back(param("delta0", -2.0, 2.0, {PriorFamily::normal, 0.4, 0.2}));
  for (int i = 1; i <= d_f; ++i) {
    s.params.push_back(param("delta1_" + std::to_string(i), 0.0, 1.0,
                             {PriorFamily::normal, 0.01, 0.1}));
  }
  for (int i = 1; i <= d_f; ++i) {
    for (int j = 1; j <= i; ++j) {
      double mean = (i == j) ? 0.9 - 0.1 * (i - 1) : 0.0;
      s.params.push_back(param("rhoQ_" + std::to_string(i) + std::to_string(j), -1.2,
                               1.2, {PriorFamily::normal, mean, 0.2}));
    }
  }
  for (int i = 1; i <= d_f; ++i) {
    s.params.push_back(param("cQ_" + std::to_string(i), -5.0, 5.0,
                             {PriorFamily::normal, 0.0, 1.0}));
  }
  for (int i = 1; i <= d_f; ++i) {
    for (int j = 1; j <= d_f; ++j) {
      double mean = (i == j) ? 0.9 - 0.1 * (i - 1) : 0.0;
      s.params.push_back(param("rho_" + std::to_string(i) + std::to_string(j), -1.0,
                               1.0, {PriorFamily::normal, mean, 0.2}));
    }
  }
  int n_max = *std::max_element(maturities.begin(), maturities.end());
  s.native = [d_f, maturities, n_max](const Eigen::VectorXd& th) {
    int idx = 0;
    double delta0 = th(idx++);
    Eigen::VectorXd delta1(d_f);
    for (int i = 0; i < d_f; ++i) delta1(i) = th(idx++);
    Eigen::MatrixXd rhoQ = Eigen::MatrixXd::Zero(d_f, d_f);
    for (int i = 0; i < d_f; ++i)
      for (int j = 0; j <= i; ++j) rhoQ(i, j) = th(idx++);
    Eigen::VectorXd cQ(d_f);
    for (int i = 0; i < d_f; ++i) cQ(i) = th(idx++);
    Eigen::MatrixXd rho(d_f, d_f);
    for (int i = 0; i < d_f; ++i)
      for (int j = 0; j < d_f; ++j) rho(i, j) = th(idx++);

    AtsmLoadings L = atsm_loadings(delta0, delta1, rhoQ, cQ, n_max);
    ModelMatrices m;
    const Eigen::Index dy = static_cast<Eigen::Index>(maturities.size());
    m.mu.resize(dy);
    m.A.resize(dy, d_f);
    for (Eigen::Index r = 0; r < dy; ++r) {
      int n = maturities[static_cast<std::size_t>(r)];
      m.mu(r) = L.a(n - 1);
      m.A.row(r) = L.b.row(n - 1);
    }
    m.B = Eigen::MatrixXd::Zero(dy, d_f);  // stochastically singular: no measurement noise
    m.C = rho;
    m.D = Eigen::MatrixXd::Identity(d_f, d_f);
    return m;
  };
  return s;
}

ModelSpec builtin_model(const std::string& name, const std::vector<int>& atsm_maturities) {
  if (name == "ma1") return builtin_ma1();
  if (name == "local_level") return builtin_local_level();
  if (name == "watson_trend_cycle") return builtin_watson_trend_cycle();
  if (name.rfind("arma(", 0) == 0 && name.back() == ')') {
    std::string inner = name.substr(5, name.size() - 6);
    auto comma = inner.find(',');
    if (comma == std::string::npos) throw ConfigError("arma(p,q): bad name " + name);
    int p = std::stoi(inner.substr(0, comma));
    int q = std::stoi(inner.substr(comma + 1));
    return builtin_arma(p, q);
  }
  if (name.rfind("atsm(", 0) == 0 && name.back() == ')') {
    int d_f = std::stoi(name.substr(5, name.size() - 6));
    std::vector<int> mats = atsm_maturities;
    if (mats.empty()) mats = {1, 12, 24, 36, 48, 60};
    return builtin_atsm(d_f, mats);
  }
  throw ConfigError("unknown builtin model: " + name);
}

AtsmLoadings atsm_loadings(double delta0, const Eigen::VectorXd& delta1,
                           const Eigen::MatrixXd& rhoQ, const Eigen::VectorXd& cQ,
                           int max_maturity) {
  const Eigen::Index d_f = delta1.size();
  if (rhoQ.rows() != d_f || rhoQ.cols() != d_f || cQ.size() != d_f) {
    throw ShapeError("atsm_loadings: dimension mismatch");
  }
  if (max_maturity < 1) throw ShapeError("atsm_loadings: max_maturity must be >= 1");
  AtsmLoadings out;
  out.a.resize(max_maturity);
  out.b.resize(max_maturity, d_f);
  Eigen::MatrixXd rhoQt = rhoQ.transpose();
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(d_f, d_f);  // rhoQ'^0
  Eigen::MatrixXd cumulative = Eigen::MatrixXd::Zero(d_f, d_f);  // sum of powers
  double sum_j_bc = 0.0;   // sum j * b_j' cQ over j < n
  double sum_j2_bb = 0.0;  // sum j^2 * b_j' b_j over j < n
  for (int n = 1; n <= max_maturity; ++n) {
    cumulative += power;
    power = (power * rhoQt).eval();
    Eigen::VectorXd bn = cumulative * delta1 / static_cast<double>(n);
    out.b.row(n - 1) = bn.transpose();
    out.a(n - 1) = delta0 + sum_j_bc / n - 0.5 * sum_j2_bb / n;
    sum_j_bc += n * bn.dot(cQ);
    sum_j2_bb += static_cast<double>(n) * n * bn.dot(bn);
  }
  return out;
}

}  // namespace otf
