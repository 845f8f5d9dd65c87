#include "epifc/error.hpp"

namespace epifc {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedCsv: return "MalformedCsv";
    case ErrorCode::GapInDates: return "GapInDates";
    case ErrorCode::NegativeCumulative: return "NegativeCumulative";
    case ErrorCode::UnmappableHeader: return "UnmappableHeader";
    case ErrorCode::EmptyIntersection: return "EmptyIntersection";
    case ErrorCode::SeriesLengthMismatch: return "SeriesLengthMismatch";
    case ErrorCode::SeriesTooShort: return "SeriesTooShort";
    case ErrorCode::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::DegenerateTarget: return "DegenerateTarget";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::MaskMismatch: return "MaskMismatch";
    case ErrorCode::AllCellsFailed: return "AllCellsFailed";
    case ErrorCode::MissingCells: return "MissingCells";
    case ErrorCode::UnknownCountry: return "UnknownCountry";
    case ErrorCode::InsufficientHistory: return "InsufficientHistory";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace epifc
