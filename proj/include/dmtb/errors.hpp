#pragma once

#include <stdexcept>
#include <string>

namespace dmtb {

/// Base class for every failure the testbed reports.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument or configuration outside its documented domain.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

/// A single-element calibration transmission was too weak to use.
class MeasurementFloor : public Error {
public:
    using Error::Error;
};

class DegenerateMagnitude : public Error {
public:
    using Error::Error;
};

/// Targets are inconsistent with a rank-deficient channel estimate.
class RankDeficient : public Error {
public:
    using Error::Error;
};

class NonAscii : public Error {
public:
    using Error::Error;
};

class EmptyInterval : public Error {
public:
    using Error::Error;
};

class LengthMismatch : public Error {
public:
    using Error::Error;
};

class ConstructionFailed : public Error {
public:
    using Error::Error;
};

/// File contents could not be parsed.
class ParseError : public Error {
public:
    using Error::Error;
};

}  // namespace dmtb
