#include "otf/prior.hpp"

#include <cmath>
#include <limits>

#include "otf/errors.hpp"

namespace otf {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// (mean, sd) -> (shape, rate)
void gamma_params(const Prior& p, double& shape, double& rate) {
  shape = (p.mean / p.sd) * (p.mean / p.sd);
  rate = p.mean / (p.sd * p.sd);
}

// moment matching on (0,1)
void beta_params(const Prior& p, double& a, double& b) {
  double m = p.mean, v = p.sd * p.sd;
  double nu = m * (1.0 - m) / v - 1.0;
  a = m * nu;
  b = (1.0 - m) * nu;
}

// matched so the distribution has the stated mean and sd; requires shape > 2,
// which the matching shape = 2 + (mean/sd)^2 always satisfies
void invgamma_params(const Prior& p, double& shape, double& scale) {
  shape = 2.0 + (p.mean / p.sd) * (p.mean / p.sd);
  scale = p.mean * (shape - 1.0);
}

}  // namespace

void ParamSpec::validate() const {
  if (!(lower < upper)) {
    if (lower == upper) return;  // fixed parameter
    throw ConfigError("parameter " + name + ": lower bound must be below upper bound");
  }
  switch (prior.family) {
    case PriorFamily::none:
    case PriorFamily::uniform:
      return;
    case PriorFamily::normal:
      if (!(prior.sd > 0.0)) throw ConfigError("parameter " + name + ": prior sd must be > 0");
      return;
    case PriorFamily::gamma:
    case PriorFamily::invgamma:
      if (!(prior.sd > 0.0) || !(prior.mean > 0.0)) {
        throw ConfigError("parameter " + name + ": gamma-type prior needs mean > 0, sd > 0");
      }
      return;
    case PriorFamily::beta: {
      if (!(prior.sd > 0.0)) throw ConfigError("parameter " + name + ": prior sd must be > 0");
      if (!(prior.mean > 0.0 && prior.mean < 1.0)) {
        throw ConfigError("parameter " + name + ": beta prior mean must be in (0,1)");
      }
      double a, b;
      beta_params(prior, a, b);
      if (!(a > 0.0 && b > 0.0)) {
        throw ConfigError("parameter " + name + ": beta prior sd too large for its mean");
      }
      return;
    }
  }
}

std::string ParamSpec::warning() const {
  if (prior.family == PriorFamily::invgamma) {
    double shape, scale;
    invgamma_params(prior, shape, scale);
    if (shape <= 2.01) {
      return "parameter " + name + ": inverse-gamma shape " + std::to_string(shape) +
             " is near the finite-variance boundary (sd >> mean implies a very heavy tail)";
    }
  }
  return {};
}

double log_prior(const ParamSpec& spec, double value) {
  const double neg_inf = -std::numeric_limits<double>::infinity();
  if (spec.lower < spec.upper && (value < spec.lower || value > spec.upper)) {
    return neg_inf;
  }
  switch (spec.prior.family) {
    case PriorFamily::none:
    case PriorFamily::uniform:
      return 0.0;
    case PriorFamily::normal: {
      double z = (value - spec.prior.mean) / spec.prior.sd;
      return -0.5 * kLog2Pi - std::log(spec.prior.sd) - 0.5 * z * z;
    }
    case PriorFamily::gamma: {
      if (value <= 0.0) return neg_inf;
      double a, b;
      gamma_params(spec.prior, a, b);
      return a * std::log(b) - std::lgamma(a) + (a - 1.0) * std::log(value) - b * value;
    }
    case PriorFamily::beta: {
      if (value <= 0.0 || value >= 1.0) return neg_inf;
      double a, b;
      beta_params(spec.prior, a, b);
      return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
             (a - 1.0) * std::log(value) + (b - 1.0) * std::log(1.0 - value);
    }
    case PriorFamily::invgamma: {
      if (value <= 0.0) return neg_inf;
      double a, s;
      invgamma_params(spec.prior, a, s);
      return a * std::log(s) - std::lgamma(a) - (a + 1.0) * std::log(value) - s / value;
    }
  }
  return neg_inf;
}

}  // namespace otf
