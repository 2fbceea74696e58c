#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace elp {

enum class ErrorKind {
    InvalidSeries,
    ShapeError,
    InvalidInput,
    InvalidParam,
    PairingError,
    NumericsError,
    InsufficientHistory,
    InvalidDataset,
    DegenerateInput,
    ParseError,
    GapError,
    IoError,
};

std::string_view to_string(ErrorKind kind);

// Every failure in the library surfaces as an Error carrying a machine-readable kind.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message);

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace elp
