#pragma once

#include <stdexcept>
#include <string>

namespace flowgnn {

/// Shape or width mismatch between tensors or layers.
class DimensionError : public std::runtime_error {
public:
  explicit DimensionError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid hyperparameter or run configuration.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input data (bad CSV row, out-of-range label, ...).
class DataError : public std::runtime_error {
public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Input file header does not match the declared schema.
class SchemaError : public std::runtime_error {
public:
  explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

/// API misuse (non-scalar backward seed, unfitted encoder, ...).
class UsageError : public std::runtime_error {
public:
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

/// Refusal to materialize something that would not fit in memory.
class ResourceError : public std::runtime_error {
public:
  explicit ResourceError(const std::string& what) : std::runtime_error(what) {}
};

/// NaN/Inf surfaced in a forward op or the training loss diverged.
class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace flowgnn
