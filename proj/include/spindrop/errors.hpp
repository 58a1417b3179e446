#pragma once

#include <stdexcept>
#include <string>

namespace spindrop {

// Base class for all library errors. The CLI maps subclasses onto its
// exit-code contract (1 = config/parameter, 2 = data format, 3 = divergence
// or equivalence failure).
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/weight dimension mismatch; message names both shapes.
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Invalid parameter value (rho out of range, T < 1, ...).
struct ParamError : Error {
    explicit ParamError(const std::string& msg) : Error(msg) {}
};

// Malformed input file; message carries the byte offset where parsing failed.
struct DataFormatError : Error {
    explicit DataFormatError(const std::string& msg) : Error(msg) {}
};

// Non-finite training loss; message names epoch and batch.
struct DivergedError : Error {
    explicit DivergedError(const std::string& msg) : Error(msg) {}
};

// MTJ state machine misuse, e.g. resampling while the hold signal is asserted.
struct IllegalTransition : Error {
    explicit IllegalTransition(const std::string& msg) : Error(msg) {}
};

// Bad experiment/simulator configuration (module-count mismatch, bad config file).
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Warning sink. Default handler prints to stderr; tests may install a
// capturing handler.
using WarningHandler = void (*)(const std::string&);
WarningHandler set_warning_handler(WarningHandler h);
void emit_warning(const std::string& msg);

}  // namespace spindrop
