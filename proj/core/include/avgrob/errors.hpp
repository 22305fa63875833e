#pragma once

#include <stdexcept>
#include <string>

namespace avgrob {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid arguments or preconditions (bad sigma, shape mismatch, ...).
class InputError : public Error {
public:
    using Error::Error;
};

// Malformed on-disk data (bad IDX magic, ragged CSV, bad model JSON).
class FormatError : public Error {
public:
    using Error::Error;
};

// Filesystem failures.
class IoError : public Error {
public:
    using Error::Error;
};

// Covariance could not be factorized even at maximum jitter.
class DegenerateCovarianceError : public Error {
public:
    using Error::Error;
};

}  // namespace avgrob
