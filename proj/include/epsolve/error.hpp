#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace epsolve {

enum class ErrorCode {
  InvalidArgument,
  HermiticityViolation,
  GridTooCoarse,
  WrongMode,
  ConvergenceFailure,
  NotNormalized,
  SupportTooSmall,
  PoleProximity,
  AboveTotalEnergy,
  IndexMismatch,
  ScanTooCoarse,
  PoleWindowLoss,
  WindowTooNarrow,
  IncompleteRealisation,
  InvalidCount,
  NotDistribution,
  EmptyWindow,
  DegenerateData,
  SchemaError,
  UnknownKey,
  IoError,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries one of the codes above so the
// CLI can emit structured error records.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string &what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

} // namespace epsolve
