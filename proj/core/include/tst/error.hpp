#pragma once

#include <stdexcept>
#include <string>

namespace tst {

// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shape or extent mismatch between operands.
class DimensionError : public Error {
public:
    using Error::Error;
};

// A caller broke an operation's precondition (non-scalar root, bad step, ...).
class ContractError : public Error {
public:
    using Error::Error;
};

// Invalid model / training configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Problems with input data: missing columns, unparseable cells, too few rows.
class DataError : public Error {
public:
    using Error::Error;
};

// NaN or Inf showed up where a finite value was required.
class NumericError : public Error {
public:
    using Error::Error;
};

// Checkpoint failures, split into I/O, format (magic/version/length) and checksum.
class CheckpointError : public Error {
public:
    using Error::Error;
};

class CheckpointIoError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

class CheckpointFormatError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

class CheckpointChecksumError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

}  // namespace tst
