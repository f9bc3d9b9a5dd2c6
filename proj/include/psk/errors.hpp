#pragma once

#include <stdexcept>
#include <string>

namespace psk {

/// Operand dimensions do not line up (matmul inner dims, row counts, ...).
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A parameter is outside its documented domain (bad degree, zero sketch
/// width, size cap exceeded, non-finite input, ...).
class ValueError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// File could not be parsed or written. Messages include the byte offset of
/// the failure where it is known.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace psk
