#pragma once

#include <stdexcept>
#include <string>

namespace rpf {

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class SyntaxError : public Error {
  public:
    SyntaxError(std::string const& what, int line, int column)
        : Error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what),
          line_(line),
          column_(column) {}

    int line() const noexcept { return line_; }
    int column() const noexcept { return column_; }

  private:
    int line_;
    int column_;
};

#define RPF_DEFINE_ERROR(Name)          \
    class Name : public Error {         \
      public:                           \
        using Error::Error;             \
    }

RPF_DEFINE_ERROR(MissingSection);
RPF_DEFINE_ERROR(ValidationError);
RPF_DEFINE_ERROR(DegenerateCycle);
RPF_DEFINE_ERROR(DegenerateVoltage);
RPF_DEFINE_ERROR(AngleInconsistency);
RPF_DEFINE_ERROR(GenerationError);
RPF_DEFINE_ERROR(FingerprintMismatch);
RPF_DEFINE_ERROR(FormatError);
RPF_DEFINE_ERROR(RankDeficient);
RPF_DEFINE_ERROR(NonFiniteLoss);
RPF_DEFINE_ERROR(LineSearchFailure);
RPF_DEFINE_ERROR(InfeasibleStart);
RPF_DEFINE_ERROR(NotConverged);
RPF_DEFINE_ERROR(InfeasibleRegion);
RPF_DEFINE_ERROR(NonDescent);

#undef RPF_DEFINE_ERROR

}  // namespace rpf
