#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fusionest {

enum class ErrorKind {
  // dataset
  MalformedHeader,
  MalformedRow,
  NonBinaryIndicator,
  NonBinaryOutcome,
  EmptyFile,
  BadFoldCount,
  IoError,
  // nuisance
  NonDiscreteCovariates,
  SingularDesign,
  NotBinaryOutcome,
  NoRctRows,
  NoObsRows,
  DimensionMismatch,
  EmptyStratum,
  // influence
  DegeneratePropensity,
  DegenerateSelection,
  SingularGram,
  ZeroSigma,
  MeanOnBoundary,
  ZeroD,
  // estimators
  RestrictionMismatch,
  MissingGamma,
  EmptyCells,
  SingularCovariance,
  // simulation
  SelectionStarved,
  UnsupportedScenario,
  // config
  UnknownFlag,
  MissingRequired,
  ConflictingOptions,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library carries one of the kinds above so that
/// callers (the CLI, the benchmark harness) can branch on it without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace fusionest
