#pragma once

#include <stdexcept>
#include <string>

namespace pkt {

/// Operand shapes do not fit the requested operation.
class ShapeError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent input data (files, corpora, manifests).
class DataError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// A computation produced a non-finite value (divergence, bad gradient).
class NumericError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// A lookup by key failed.
class NotFoundError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

}  // namespace pkt
