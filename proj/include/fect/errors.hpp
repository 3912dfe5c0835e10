#pragma once

#include <stdexcept>
#include <string>

namespace fect {

// Thrown on dimension / size mismatches between numerical objects.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown on malformed input files (NetPBM, manifests, caches, models).
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown on semantically invalid data (missing class, leaked split, ...).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when a numerical routine cannot produce a finite result.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace fect
