#pragma once

#include <stdexcept>
#include <string>

namespace headkd {

// Root of every exception thrown by the library. The CLI maps ConfigError to
// exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define HEADKD_DEFINE_ERROR(Name)        \
  class Name : public Error {            \
   public:                               \
    using Error::Error;                  \
  };

HEADKD_DEFINE_ERROR(DimensionError)
HEADKD_DEFINE_ERROR(IndexError)
HEADKD_DEFINE_ERROR(UsageError)
HEADKD_DEFINE_ERROR(ConfigError)
HEADKD_DEFINE_ERROR(ConstraintError)
HEADKD_DEFINE_ERROR(ContractError)
HEADKD_DEFINE_ERROR(RangeError)
HEADKD_DEFINE_ERROR(LengthError)
HEADKD_DEFINE_ERROR(CalibrationError)
HEADKD_DEFINE_ERROR(NumericError)
HEADKD_DEFINE_ERROR(DivergenceError)
HEADKD_DEFINE_ERROR(EvaluationError)
HEADKD_DEFINE_ERROR(ClassificationError)
HEADKD_DEFINE_ERROR(SplitError)
HEADKD_DEFINE_ERROR(FormatError)
HEADKD_DEFINE_ERROR(IoError)

#undef HEADKD_DEFINE_ERROR

}  // namespace headkd
