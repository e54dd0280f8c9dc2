#pragma once

#include <stdexcept>
#include <string>

namespace sim2real {

// Base for every error raised by the toolkit. `kind()` is the stable name
// written into reports and run manifests.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

  // Throws an error of the same dynamic type with `prefix` prepended.
  [[noreturn]] virtual void rethrow_with_context(const std::string& prefix) const {
    throw Error(kind_, prefix + what());
  }

 private:
  std::string kind_;
};

#define SIM2REAL_DECLARE_ERROR(Name)                                        \
  class Name : public Error {                                               \
   public:                                                                  \
    explicit Name(const std::string& message) : Error(#Name, message) {}    \
    [[noreturn]] void rethrow_with_context(const std::string& prefix) const \
        override {                                                          \
      throw Name(prefix + what());                                          \
    }                                                                       \
  };

SIM2REAL_DECLARE_ERROR(IoError)
SIM2REAL_DECLARE_ERROR(ParseError)
SIM2REAL_DECLARE_ERROR(ValidationError)
SIM2REAL_DECLARE_ERROR(MappingError)
SIM2REAL_DECLARE_ERROR(FormatError)
SIM2REAL_DECLARE_ERROR(DecodeError)
SIM2REAL_DECLARE_ERROR(DegenerateRowError)
SIM2REAL_DECLARE_ERROR(DimensionMismatch)
SIM2REAL_DECLARE_ERROR(InsufficientSamples)
SIM2REAL_DECLARE_ERROR(LabelOutOfRange)
SIM2REAL_DECLARE_ERROR(NoDefinedClasses)
SIM2REAL_DECLARE_ERROR(DegenerateBox)
SIM2REAL_DECLARE_ERROR(NoGroundTruth)
SIM2REAL_DECLARE_ERROR(EmptyInput)
SIM2REAL_DECLARE_ERROR(TransportError)
SIM2REAL_DECLARE_ERROR(ProtocolError)
SIM2REAL_DECLARE_ERROR(BackendUnavailable)
SIM2REAL_DECLARE_ERROR(DimensionChanged)
SIM2REAL_DECLARE_ERROR(UnknownDomain)
SIM2REAL_DECLARE_ERROR(ConfigError)
SIM2REAL_DECLARE_ERROR(PhaseError)
SIM2REAL_DECLARE_ERROR(ConflictingCell)

#undef SIM2REAL_DECLARE_ERROR

}  // namespace sim2real
