#include "fusionest/error.hpp"

namespace fusionest {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::MalformedHeader: return "MalformedHeader";
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::NonBinaryIndicator: return "NonBinaryIndicator";
    case ErrorKind::NonBinaryOutcome: return "NonBinaryOutcome";
    case ErrorKind::EmptyFile: return "EmptyFile";
    case ErrorKind::BadFoldCount: return "BadFoldCount";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::NonDiscreteCovariates: return "NonDiscreteCovariates";
    case ErrorKind::SingularDesign: return "SingularDesign";
    case ErrorKind::NotBinaryOutcome: return "NotBinaryOutcome";
    case ErrorKind::NoRctRows: return "NoRctRows";
    case ErrorKind::NoObsRows: return "NoObsRows";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::EmptyStratum: return "EmptyStratum";
    case ErrorKind::DegeneratePropensity: return "DegeneratePropensity";
    case ErrorKind::DegenerateSelection: return "DegenerateSelection";
    case ErrorKind::SingularGram: return "SingularGram";
    case ErrorKind::ZeroSigma: return "ZeroSigma";
    case ErrorKind::MeanOnBoundary: return "MeanOnBoundary";
    case ErrorKind::ZeroD: return "ZeroD";
    case ErrorKind::RestrictionMismatch: return "RestrictionMismatch";
    case ErrorKind::MissingGamma: return "MissingGamma";
    case ErrorKind::EmptyCells: return "EmptyCells";
    case ErrorKind::SingularCovariance: return "SingularCovariance";
    case ErrorKind::SelectionStarved: return "SelectionStarved";
    case ErrorKind::UnsupportedScenario: return "UnsupportedScenario";
    case ErrorKind::UnknownFlag: return "UnknownFlag";
    case ErrorKind::MissingRequired: return "MissingRequired";
    case ErrorKind::ConflictingOptions: return "ConflictingOptions";
  }
  return "Unknown";
}

}  // namespace fusionest
