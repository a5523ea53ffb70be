#pragma once

#include <stdexcept>
#include <string>

namespace ttamen {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An index lies outside of its mode range.
class BoundsError : public Error {
public:
    using Error::Error;
};

/// Mode sizes, ranks or dimensions of two objects do not fit together.
class SizeMismatch : public Error {
public:
    using Error::Error;
};

/// A dense expansion or a dense local system would exceed the configured cap.
class DenseCapExceeded : public Error {
public:
    using Error::Error;
};

/// A matrix that is required to be symmetric positive definite is not.
class NotSPD : public Error {
public:
    using Error::Error;
};

/// Malformed input data (files, manifests, experiment specs).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Filesystem failure while reading or writing artifacts.
class IoError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
    if (!cond) throw SizeMismatch(what);
}

} // namespace detail
} // namespace ttamen
