#ifndef OTF_PRIOR_HPP
#define OTF_PRIOR_HPP

#include <string>

namespace otf {

// Prior families are parameterized by (mean, sd), as reported in estimation
// tables, and converted to natural parameters internally.
enum class PriorFamily { none, normal, gamma, beta, invgamma, uniform };

struct Prior {
  PriorFamily family = PriorFamily::none;
  double mean = 0.0;
  double sd = 1.0;
};

// Parameter declaration: box bounds plus an optional prior.
struct ParamSpec {
  std::string name;
  double lower = 0.0;
  double upper = 1.0;
  Prior prior;

  void validate() const;

  // Human-readable warning for admissible but fragile configurations
  // (e.g. a moment-matched inverse-gamma with near-boundary shape);
  // empty when there is nothing to flag.
  std::string warning() const;
};

// Log density of the prior family at value. Out-of-bounds values return
// -infinity (sentinel, not an exception). uniform and none return 0 in-bounds.
double log_prior(const ParamSpec& spec, double value);

}  // namespace otf

#endif  // OTF_PRIOR_HPP
