#ifndef OTF_ERRORS_HPP
#define OTF_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace otf {

// Numerical / domain failures raised by the library. Each maps to one
// failure mode named in the public API contracts.

struct InvalidMatrix : std::runtime_error {
  explicit InvalidMatrix(const std::string& msg) : std::runtime_error(msg) {}
};

struct NotPSD : std::runtime_error {
  explicit NotPSD(const std::string& msg) : std::runtime_error(msg) {}
};

struct NonStationary : std::runtime_error {
  explicit NonStationary(const std::string& msg) : std::runtime_error(msg) {}
};

struct CollinearRegressors : std::runtime_error {
  explicit CollinearRegressors(const std::string& msg) : std::runtime_error(msg) {}
};

struct InsufficientData : std::runtime_error {
  explicit InsufficientData(const std::string& msg) : std::runtime_error(msg) {}
};

struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, std::size_t position)
      : std::runtime_error(msg + " at position " + std::to_string(position)),
        pos(position) {}
  std::size_t pos;
};

struct UnboundParameter : std::runtime_error {
  explicit UnboundParameter(const std::string& name)
      : std::runtime_error("unbound parameter: " + name) {}
};

struct EvalError : std::runtime_error {
  explicit EvalError(const std::string& msg) : std::runtime_error(msg) {}
};

struct RiccatiDivergence : std::runtime_error {
  explicit RiccatiDivergence(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataVarianceSingular : std::runtime_error {
  explicit DataVarianceSingular(const std::string& msg) : std::runtime_error(msg) {}
};

struct ModelVarianceInvalid : std::runtime_error {
  ModelVarianceInvalid(const std::string& msg, long period)
      : std::runtime_error(msg + " at t=" + std::to_string(period)), t(period) {}
  long t;
};

struct LocalIdentificationFailure : std::runtime_error {
  explicit LocalIdentificationFailure(const std::string& msg) : std::runtime_error(msg) {}
};

struct BoundaryTooClose : std::runtime_error {
  explicit BoundaryTooClose(const std::string& msg) : std::runtime_error(msg) {}
};

struct DegenerateDistribution : std::runtime_error {
  explicit DegenerateDistribution(const std::string& msg) : std::runtime_error(msg) {}
};

struct NoFeasibleStart : std::runtime_error {
  explicit NoFeasibleStart(const std::string& msg) : std::runtime_error(msg) {}
};

struct ParticleDegeneracy : std::runtime_error {
  ParticleDegeneracy(const std::string& msg, long period)
      : std::runtime_error(msg + " at t=" + std::to_string(period)), t(period) {}
  long t;
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace otf

#endif  // OTF_ERRORS_HPP
