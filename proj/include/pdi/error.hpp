#pragma once

#include <stdexcept>
#include <string>

namespace pdi {

enum class ErrorCode {
    DoseOutOfRange,
    DimensionMismatch,
    EmptyDataset,
    IndicatorMismatch,
    InvalidArgument,
    SingularDesign,
    DegenerateVariance,
    NonpositiveDose,
    Separation,
    SingleClass,
    InvalidInterval,
    NonpositiveEpsilon,
    MonotonicityViolated,
    SolveFailure,
    IterationCapWithoutDescent,
    TooFewRows,
    NoInterval,
    LengthMismatch,
    EmptyContingency,
    OracleUndefined,
    EmptyInput,
    SchemaError,
    VersionError,
    IoError,
};

const char* error_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace pdi
