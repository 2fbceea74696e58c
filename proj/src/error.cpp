#include "elp/error.hpp"

namespace elp {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::InvalidSeries: return "InvalidSeries";
    case ErrorKind::ShapeError: return "ShapeError";
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::InvalidParam: return "InvalidParam";
    case ErrorKind::PairingError: return "PairingError";
    case ErrorKind::NumericsError: return "NumericsError";
    case ErrorKind::InsufficientHistory: return "InsufficientHistory";
    case ErrorKind::InvalidDataset: return "InvalidDataset";
    case ErrorKind::DegenerateInput: return "DegenerateInput";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::GapError: return "GapError";
    case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

}  // namespace elp
