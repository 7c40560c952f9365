#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace dtmpc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad user input: malformed files, out-of-range commands, bad configuration.
class InputError : public Error {
public:
    using Error::Error;
};

/// Netlist syntax or semantic error carrying a source location.
class ParseError : public InputError {
public:
    ParseError(const std::string& message, int line, int column)
        : InputError("line " + std::to_string(line) + ", column " + std::to_string(column) +
                     ": " + message),
          line_(line),
          column_(column),
          detail_(message) {}

    [[nodiscard]] int line() const noexcept { return line_; }
    [[nodiscard]] int column() const noexcept { return column_; }
    [[nodiscard]] const std::string& detail() const noexcept { return detail_; }

private:
    int line_;
    int column_;
    std::string detail_;
};

/// Circuit whose state-space form cannot be built (capacitor loops, inductor cutsets,
/// floating subnetworks).
class TopologyError : public Error {
public:
    using Error::Error;
};

/// A required artifact (model, trained predictor) is missing.
class MissingArtifactError : public Error {
public:
    using Error::Error;
};

/// Singular matrices, non-finite states, diverging training, step underflow.
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace dtmpc
