#pragma once

#include <stdexcept>
#include <string>

namespace jedi {

// Base class for every error the library throws.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed or unsupported pixel data, files, or serialized blobs.
class FormatError : public Error {
public:
    using Error::Error;
};

// Geometry violations: out-of-bounds placement, dimension mismatches,
// windows larger than their image.
class GeometryError : public Error {
public:
    using Error::Error;
};

// Bad or insufficient input data: too few windows, empty datasets,
// undefined rates, degenerate palettes.
class DataError : public Error {
public:
    using Error::Error;
};

// Model oracle failures: dead subprocess, protocol violation.
class OracleError : public Error {
public:
    using Error::Error;
};

// Autoencoder training failures (divergence).
class TrainingError : public Error {
public:
    using Error::Error;
};

} // namespace jedi
